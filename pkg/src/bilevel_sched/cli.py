"""Command-line interface: ``bilevel-sched <command> ...``.

Commands
--------
generate     random instances on the benchmark grid
solve        solve one instance with bnb, dp, brute or adversarial
verify       solve a batch with two methods and report disagreements
bench        per-class timing/node statistics as CSV
export-mip   write the MIP model as LP text or MPS
dump-blocks  print the block structure of an instance

Exit codes: 0 success, 1 disagreement found by ``verify``, 2 usage error
or unreadable input.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import re
import statistics
import sys
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .blocks import build_blocks
from .bnb import BnbConfig, solve as bnb_solve
from .core import (GRID_VALUES, Instance, InstanceFormatError, Schedule, evaluate, generate,
                   read_instance, write_instance)
from .exact_dp import dp_solve
from .follower import adversarial_solve
from .mip import build_mip, export
from .oracle import OracleBudgetError, brute_bilevel

log = logging.getLogger("bilevel_sched")

METHODS = ("bnb", "dp", "brute", "adversarial")
BENCH_HEADER = ["class", "N", "n", "m", "opt_count", "t_min", "t_avg", "t_max",
                "nodes_min", "nodes_avg", "nodes_max"]
RAW_HEADER = ["instance", "class", "N", "n", "m", "method", "value", "status", "nodes", "time_s"]
_NAME_RE = re.compile(r"tf(?P<tf>[\d.]+)_rdd(?P<rdd>[\d.]+)_N(?P<N>\d+)_n(?P<n>\d+)_m(?P<m>\d+)")


class UsageError(Exception):
    """Bad arguments or unreadable input (exit code 2)."""


# ------------------------------------------------------------ utilities

def stable_seed(*parts) -> int:
    """Seed derived from a class/size/replicate tuple; identical across runs
    and Python processes (unlike ``hash``)."""
    return zlib.crc32("|".join(str(p) for p in parts).encode())


def instance_name(tf: float, rdd: float, N: int, n: int, m: int, rep: int) -> str:
    return f"tf{tf:.1f}_rdd{rdd:.1f}_N{N}_n{n}_m{m}_r{rep:02d}"


def class_of(name: str) -> str:
    m = _NAME_RE.search(name)
    return f"tf{m['tf']}_rdd{m['rdd']}" if m else "all"


def load_instance(path: str | Path) -> Instance:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return read_instance(text)
    except InstanceFormatError as exc:
        raise UsageError(f"{path}: {exc}") from None


def instance_files(paths: Sequence[str], directory: str | None) -> list[Path]:
    files = [Path(p) for p in paths]
    if directory:
        d = Path(directory)
        if not d.is_dir():
            raise UsageError(f"not a directory: {directory}")
        files += sorted(p for p in d.iterdir() if p.suffix in (".txt", ".json", ".inst"))
    if not files:
        raise UsageError("no instance files given")
    return files


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _n_values(spec: str, N: int) -> list[int]:
    """``"N/4,N/2,3N/4"`` style tokens or plain integers, rounded down."""
    out = []
    for tok in spec.split(","):
        tok = tok.strip().replace(" ", "")
        m = re.fullmatch(r"(\d*)N(?:/(\d+))?", tok)
        if m:
            num = int(m.group(1) or 1)
            den = int(m.group(2) or 1)
            out.append(num * N // den)
        elif tok.isdigit():
            out.append(int(tok))
        else:
            raise UsageError(f"bad --n token {tok!r}")
    return out


# ---------------------------------------------------------------- solving

@dataclass
class Outcome:
    method: str
    value: int
    status: str
    schedule: Schedule
    nodes: int = 0
    time_s: float = 0.0
    extra: str = ""

    def line(self, inst: Instance) -> str:
        sel = ",".join(str(j) for j in sorted(self.schedule.job_ids))
        sched = "|".join(",".join(str(j) for j in seq) for seq in self.schedule.sequences)
        tc = evaluate(self.schedule, inst).total_completion
        text = (f"method={self.method} value={self.value} status={self.status} "
                f"selection={sel} schedule={sched} total_completion_ticks={tc} "
                f"nodes={self.nodes} time_s={self.time_s:.3f}")
        return f"{text} {self.extra}".rstrip()


def bnb_config(args) -> BnbConfig:
    return BnbConfig(time_limit_s=args.time_limit_s, memo=args.memo == "on",
                     db_capacity=args.db_capacity, epsilon_pool=args.epsilon_pool,
                     external_mip_cmd=args.external_mip_cmd)


def run_method(inst: Instance, method: str, cfg: BnbConfig) -> Outcome:
    t0 = time.perf_counter()
    if method == "bnb":
        res = bnb_solve(inst, cfg)
        s = res.stats
        return Outcome(method, res.value, res.status, res.schedule, s.nodes, s.time_s,
                       f"lb_root={s.lb_root} ub_init={s.ub_init} lower_bound={res.lower_bound}")
    if method == "dp":
        res = dp_solve(inst, max_jobs=inst.N, max_machines=inst.park.m, max_total_p=10**9)
        return Outcome(method, res.value, "optimal", res.schedule, res.states,
                       time.perf_counter() - t0)
    if method == "brute":
        try:
            res = brute_bilevel(inst)
        except OracleBudgetError as exc:
            raise UsageError(str(exc)) from None
        return Outcome(method, res.value, "optimal", res.schedule, 0, time.perf_counter() - t0)
    if method == "adversarial":
        _, sched, _ = adversarial_solve(inst)
        value = evaluate(sched, inst).leader_cost
        return Outcome(method, value, "heuristic", sched, 0, time.perf_counter() - t0)
    raise UsageError(f"unknown method {method!r}")


# --------------------------------------------------------------- commands

def grid_instances(Ns: Sequence[int], n_spec: str, ms: Sequence[int], tfs: Sequence[float],
                   rdds: Sequence[float], replicates: int, base_seed: int = 0) -> list[tuple[str, Instance]]:
    """Named benchmark instances, one per grid cell and replicate.

    Each instance is seeded from its own cell coordinates, so the same cell
    always yields the same instance regardless of what else is generated.
    """
    rows = []
    for N in Ns:
        for n in _n_values(n_spec, N):
            for m in ms:
                if m % 2:
                    raise UsageError("--m must be even (equal numbers of fast and slow machines)")
                for tf in tfs:
                    for rdd in rdds:
                        for rep in range(replicates):
                            rows.append((tf, rdd, N, n, m, rep))
    if any(not 1 <= n <= N for _, _, N, n, _, _ in rows):
        raise UsageError("need 1 <= n <= N")
    instances = []
    for tf, rdd, N, n, m, rep in rows:
        seed = stable_seed(f"tf{tf:.1f}", f"rdd{rdd:.1f}", N, n, m, rep, base_seed)
        try:
            inst = generate(N, n, m0=m // 2, m1=m // 2, tf=tf, rdd=rdd, seed=seed)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        instances.append((instance_name(tf, rdd, N, n, m, rep), inst))
    return instances


def cmd_generate(args) -> int:
    # an explicit --seed asks for one instance per (N, n, m, tf, rdd) cell
    single = args.seed is not None
    n_spec = args.n or ("N/4" if single else "N/4,N/2,3N/4")
    replicates = args.replicates or (1 if single else 10)
    instances = grid_instances(args.N, n_spec, args.m, args.tf, args.rdd, replicates,
                               args.seed or 0)
    out = Path(args.out) if args.out else None
    if len(instances) == 1 and (out is None or not out.is_dir()):
        text = write_instance(instances[0][1])
        if out is None:
            sys.stdout.write(text)
        else:
            out.write_text(text)
        return 0
    if out is None:
        raise UsageError("--out DIR is required when generating several instances")
    out.mkdir(parents=True, exist_ok=True)
    for name, inst in instances:
        (out / f"{name}.txt").write_text(write_instance(inst))
    print(f"wrote {len(instances)} instances to {out}")
    return 0


def cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    outcome = run_method(inst, args.method, bnb_config(args))
    line = outcome.line(inst)
    print(line)
    if args.out:
        Path(args.out).write_text(line + "\n")
    return 0


def _verify_one(task):
    path, methods, cfg = task
    inst = load_instance(path)
    results = []
    for method in methods:
        o = run_method(inst, method, cfg)
        ok = evaluate(o.schedule, inst).leader_cost == o.value
        results.append((method, o.value, o.status, ok))
    return str(path), results


def cmd_verify(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if len(methods) < 2 or any(m not in METHODS for m in methods):
        raise UsageError(f"--methods needs at least two of {','.join(METHODS)}")
    files = instance_files(args.instances, args.dir)
    cfg = bnb_config(args)
    mismatches = 0
    for path, results in _map(_verify_one, [(f, methods, cfg) for f in files], args.workers):
        values = {v for _, v, _, _ in results}
        bad_eval = [m for m, _, _, ok in results if not ok]
        status = "ok"
        if len(values) > 1 or bad_eval:
            mismatches += 1
            status = "MISMATCH"
        detail = " ".join(f"{m}={v}" for m, v, _, _ in results)
        if bad_eval:
            detail += f" reevaluation_failed={','.join(bad_eval)}"
        print(f"{status} {path} {detail}")
    print(f"verified {len(files)} instances, {mismatches} mismatches")
    return 1 if mismatches else 0


def _bench_one(task):
    path, method, cfg = task
    inst = load_instance(path)
    o = run_method(inst, method, cfg)
    name = Path(path).stem
    return {"instance": name, "class": class_of(name), "N": inst.N, "n": inst.n, "m": inst.park.m,
            "method": method, "value": o.value, "status": o.status, "nodes": o.nodes,
            "time_s": round(o.time_s, 6)}


def aggregate(rows: list[dict]) -> list[dict]:
    """Per ``(class, N, n, m)`` cell: number of optimal solves and min/avg/max
    time and nodes over those solves.  A pure function of the raw rows."""
    cells: dict[tuple, list[dict]] = {}
    for r in rows:
        cells.setdefault((r["class"], int(r["N"]), int(r["n"]), int(r["m"])), []).append(r)
    out = []
    for key in sorted(cells):
        opt = [r for r in cells[key] if r["status"] == "optimal"]
        times = [float(r["time_s"]) for r in opt]
        nodes = [int(r["nodes"]) for r in opt]
        row = dict(zip(BENCH_HEADER[:4], key))
        row["opt_count"] = len(opt)
        for label, vals, fmt in (("t", times, "{:.3f}"), ("nodes", nodes, "{}")):
            if vals:
                row[f"{label}_min"] = fmt.format(min(vals))
                row[f"{label}_avg"] = f"{statistics.fmean(vals):.3f}"
                row[f"{label}_max"] = fmt.format(max(vals))
            else:
                row[f"{label}_min"] = row[f"{label}_avg"] = row[f"{label}_max"] = ""
        out.append(row)
    return out


def _csv(rows: list[dict], header: list[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def cmd_bench(args) -> int:
    files = instance_files(args.instances, args.dir)
    cfg = bnb_config(args)
    raw = _map(_bench_one, [(f, args.method, cfg) for f in files], args.workers)
    raw.sort(key=lambda r: r["instance"])
    if args.raw:
        Path(args.raw).write_text(_csv(raw, RAW_HEADER))
    text = _csv(aggregate(raw), BENCH_HEADER)
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_export_mip(args) -> int:
    inst = load_instance(args.instance)
    text = export(build_mip(inst), args.format)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_dump_blocks(args) -> int:
    inst = load_instance(args.instance)
    bs = build_blocks(inst.n, inst.park)
    print(f"n={bs.n} bmax={bs.bmax} Q={bs.Q} L={inst.park.L}")
    print("block weight [(machine,k) ...]")
    print(bs.dump())
    return 0


def _map(fn, tasks, workers: int):
    """Ordered map; runs in a process pool when ``workers > 1``."""
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


# ---------------------------------------------------------------- parser

def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--time-limit-s", type=float, default=300.0)
    p.add_argument("--memo", choices=("on", "off"), default="on")
    p.add_argument("--db-capacity", type=int, default=2**20)
    p.add_argument("--epsilon-pool", type=float, default=0.3)
    p.add_argument("--external-mip-cmd", default=None,
                   help='template "<cmd> {model} {timelimit} {solout}" for the root upper bound')


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bilevel-sched",
                                 description="Exact solvers for bilevel two-speed scheduling.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write random instances")
    g.add_argument("--N", type=_int_list, default=[40])
    g.add_argument("--n", help="integers or N/4, N/2, 3N/4 tokens (default: all three, "
                   "or N/4 with --seed)")
    g.add_argument("--m", type=_int_list, default=[2])
    g.add_argument("--tf", type=_float_list, default=list(GRID_VALUES))
    g.add_argument("--rdd", type=_float_list, default=list(GRID_VALUES))
    g.add_argument("--replicates", type=int, help="per cell (default 10, or 1 with --seed)")
    g.add_argument("--seed", type=int, help="base seed; selects single-instance defaults")
    g.add_argument("--out", help="file (single instance) or directory")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve one instance")
    s.add_argument("instance")
    s.add_argument("--method", choices=METHODS, default="bnb")
    s.add_argument("--seed", type=int, default=0, help="accepted for symmetry; solvers are deterministic")
    s.add_argument("--out")
    _add_solver_flags(s)
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", help="cross-check methods on a batch")
    v.add_argument("instances", nargs="*")
    v.add_argument("--dir")
    v.add_argument("--methods", default="bnb,brute")
    v.add_argument("--workers", type=int, default=1)
    _add_solver_flags(v)
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="per-class statistics CSV")
    b.add_argument("instances", nargs="*")
    b.add_argument("--dir")
    b.add_argument("--method", choices=METHODS, default="bnb")
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--out", help="aggregated CSV path")
    b.add_argument("--raw", help="per-instance CSV path")
    _add_solver_flags(b)
    b.set_defaults(func=cmd_bench)

    e = sub.add_parser("export-mip", help="write the MIP model")
    e.add_argument("instance")
    e.add_argument("--format", choices=("lp", "mps"), default="lp")
    e.add_argument("--out")
    e.set_defaults(func=cmd_export_mip)

    d = sub.add_parser("dump-blocks", help="print the block structure")
    d.add_argument("instance")
    d.set_defaults(func=cmd_dump_blocks)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors this way
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"bilevel-sched: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
