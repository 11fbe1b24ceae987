import random
import sys

import pytest

from bilevel_sched.blocks import build_blocks, is_block_respecting
from bilevel_sched.core import Instance, Job, MachinePark, evaluate, generate
from bilevel_sched.mip import (BINARY, MipFormatError, build_mip, check_solution, decode, export,
                               highs_command, highspy_available, parse_name, parse_solution_text,
                               read_lp, read_mps, run_external, solve_highs, solver_reads,
                               validate_export)
from bilevel_sched.oracle import brute_bilevel

needs_highspy = pytest.mark.skipif(not highspy_available(), reason="highspy not installed")


def small(seed, N=6, n=3):
    return generate(N, n, m0=1, m1=1, tf=0.6, rdd=0.6, seed=seed)


def test_variable_count_is_linear_in_N_times_locations():
    for N, n in [(6, 3), (10, 5), (20, 10)]:
        inst = small(1, N, n)
        model = build_mip(inst)
        E = sum(len(b) for b in build_blocks(n, inst.park).blocks)
        assert model.num_vars == 2 * N * E + E
        assert E <= n + inst.park.m


def test_single_job_model():
    inst = Instance((Job(1, 4, 7, 1),), MachinePark(1, 0), 1)
    model = build_mip(inst)
    assert model.var_names == ["x_1_1_1", "U_1_1_1", "C_1_1"]
    sol = solve_highs(model)
    assert sol.objective == 7  # 4 > 1: tardy
    assert sol.schedule.sequences == ((1,),)


def test_tie_instance_solves_to_zero(tie_instance):
    sol = solve_highs(build_mip(tie_instance))
    assert sol.objective == 0 and sol.status == "optimal"


def test_matches_oracle():
    rng = random.Random(0)
    for seed in range(20):
        N = rng.choice([6, 8])
        inst = generate(N, rng.choice([N // 4, N // 2, 3 * N // 4]), m0=1, m1=1,
                        tf=rng.choice([0.4, 0.8]), rdd=rng.choice([0.2, 0.6]), seed=seed)
        sol = solve_highs(build_mip(inst))
        assert sol.objective == brute_bilevel(inst).value
        assert is_block_respecting(sol.schedule, inst, build_blocks(inst.n, inst.park))


@pytest.mark.parametrize("fmt", ["lp", "mps"])
def test_round_trip(fmt):
    model = build_mip(small(3))
    assert validate_export(model, fmt) == []
    back = read_lp(export(model, fmt)) if fmt == "lp" else read_mps(export(model, fmt))
    assert sorted(back.var_names) == sorted(model.var_names)
    assert len(set(back.var_names)) == model.num_vars


def test_names_parse():
    assert parse_name("x_2_17_3") == ("x", 1, 17, 3)
    assert parse_name("U_1_4_1") == ("U", 0, 4, 1)
    assert parse_name("C_2_5") == ("C", 1, 5)
    with pytest.raises(MipFormatError):
        parse_name("y_1")


def test_mps_columns_and_markers():
    model = build_mip(small(4))
    text = export(model, "mps")
    back = read_mps(text)
    assert back.num_vars == model.num_vars
    assert back.var_types.count(BINARY) == model.var_types.count(BINARY)
    assert "'INTORG'" in text and "'INTEND'" in text
    # fixed fields: indicator in columns 2-3, name from column 5
    row_lines = text.split("ROWS\n")[1].split("COLUMNS")[0].splitlines()
    assert all(line[0] == " " and line[3] == " " for line in row_lines)


def test_malformed_files_are_rejected():
    with pytest.raises(MipFormatError):
        read_mps("NAME x\nROWS\n N obj\nCOLUMNS\n    a  nosuchrow  1\nENDATA\n")
    with pytest.raises(MipFormatError):
        read_lp("Minimize\n obj: x\nSubject To\n c1: x >>= 1\nEnd\n")


@needs_highspy
@pytest.mark.parametrize("fmt", ["lp", "mps"])
def test_external_reader_accepts_files(fmt):
    model = build_mip(small(5))
    assert solver_reads(export(model, fmt), fmt) == (model.num_vars, model.num_rows)


def test_no_solver_configured():
    assert run_external(build_mip(small(1)), None) is None
    assert run_external(build_mip(small(1)), "") is None


def test_crashing_solver_is_not_fatal():
    cmd = f"{sys.executable} -c \"import sys; sys.exit(3)\" {{model}} {{timelimit}} {{solout}}"
    assert run_external(build_mip(small(1)), cmd, 5) is None
    assert run_external(build_mip(small(1)), "/nonexistent/solver {model}", 5) is None


@needs_highspy
def test_external_solver_matches_oracle():
    for seed in range(4):
        inst = small(seed, 8, 4)
        sol = run_external(build_mip(inst), highs_command(), 30)
        assert sol is not None and sol.objective == brute_bilevel(inst).value


def test_tampered_solution_is_rejected():
    inst = small(2, 8, 4)
    model = build_mip(inst)
    good = _solution_point(model, solve_highs(model).schedule)
    assert check_solution(model, good) is not None
    # drop one placed job: the point no longer fills the blocks
    tampered = dict(good)
    first_x = sorted(n for n, v in good.items() if n.startswith("x_") and v > 0.5)[0]
    tampered[first_x] = 0.0
    assert check_solution(model, tampered) is None
    text = "\n".join(f"{n} {v}" for n, v in tampered.items())
    assert check_solution(model, parse_solution_text(text, model)) is None
    # understate the objective: clear every penalty flag of a schedule with tardy jobs
    late = {n: (0.0 if n.startswith("U_") else v) for n, v in good.items()}
    if any(v > 0.5 for n, v in good.items() if n.startswith("U_")):
        assert check_solution(model, late) is None


def test_tampered_solution_file_is_rejected(tmp_path):
    inst = small(2, 8, 4)
    model = build_mip(inst)
    good = _solution_point(model, solve_highs(model).schedule)
    bad = dict(good)
    bad[next(n for n, v in good.items() if n.startswith("x_") and v > 0.5)] = 0.0
    script = tmp_path / "fake_solver.py"
    sol_text = "\n".join(f"{n} {v}" for n, v in bad.items())
    script.write_text(f"import sys\nopen(sys.argv[3], 'w').write({sol_text!r})\n")
    cmd = f"{sys.executable} {script} {{model}} {{timelimit}} {{solout}}"
    assert run_external(model, cmd, 5) is None
    ok_text = "\n".join(f"{n} {v}" for n, v in good.items())
    script.write_text(f"import sys\nopen(sys.argv[3], 'w').write({ok_text!r})\n")
    assert run_external(model, cmd, 5).objective == evaluate(decode(model, good), inst).leader_cost


def _solution_point(model, sched):
    inst = model.inst
    park = inst.park
    bs = model.bs
    eta = {loc.machine: 0 for blk in bs.blocks for loc in blk}
    for blk in bs.blocks:
        for loc in blk:
            eta[loc.machine] = max(eta[loc.machine], loc.k)
    values = {n: 0.0 for n in model.var_names}
    for i, seq in enumerate(sched.sequences):
        offset = eta.get(i, 0) - len(seq)
        t = 0
        for pos, jid in enumerate(seq, 1):
            k = pos + offset
            job = inst.job(jid)
            t += park.ticks(job.p, i)
            values[f"x_{i + 1}_{jid}_{k}"] = 1.0
            values[f"U_{i + 1}_{jid}_{k}"] = float(t > job.d * park.L)
            values[f"C_{i + 1}_{k}"] = float(t)
    return values


def test_decode_round_trips_schedule():
    inst = small(7, 8, 4)
    model = build_mip(inst)
    sched = brute_bilevel(inst).schedule
    point = _solution_point(model, sched)
    assert decode(model, point) == sched
    sol = check_solution(model, point)
    assert sol.objective == evaluate(sched, inst).leader_cost


def test_solution_status_detects_optimal_header():
    from bilevel_sched.mip import solution_status
    assert solution_status("# status Optimal\nx_1_1_1 1\n") == "optimal"
    assert solution_status("Status: OPTIMAL\n") == "optimal"
    assert solution_status("# status Time limit reached\n") == "feasible"
    assert solution_status("x_1_1_1 1\n") == "feasible"
