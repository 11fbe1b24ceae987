from itertools import permutations, product

import pytest
from hypothesis import given, strategies as st

from bilevel_sched.blocks import (assignment_cost_identity, build_blocks, ell_max_table,
                                  is_block_respecting)
from bilevel_sched.core import FAST, SLOW, Instance, Job, MachinePark, Schedule, evaluate_sequences


def weights_and_ells(bs):
    return [sorted((loc.machine, loc.ell) for loc in blk) for blk in bs.blocks]


def test_four_job_example(two_speed_park):
    bs = build_blocks(4, two_speed_park)
    assert two_speed_park.L == 2
    assert bs.Q == 1
    # machine 0 is fast, machine 1 slow; blocks in chronological order
    assert weights_and_ells(bs) == [[(0, 3)], [(0, 2), (1, 1)], [(0, 1)]]
    assert [bs.weight(b) for b in range(bs.bmax)] == [3, 2, 1]
    assert bs.eta_plus == (1, 3)  # indexed SLOW, FAST


def test_four_job_example_is_optimal_by_brute_force(two_speed_park):
    # minimum of sum C over every assignment of p=(1,2,3,4), each machine in SPT order
    jobs = [Job(k, k, 1, 0) for k in (1, 2, 3, 4)]
    best = min(evaluate_sequences([[j for j, a in zip(jobs, asg) if a == i] for i in (0, 1)],
                                  two_speed_park).total_completion
               for asg in product((0, 1), repeat=4))
    assert best == 17
    bs = build_blocks(4, two_speed_park)
    # largest p on the smallest weight: 4 -> fast ell1 (1), 3 and 2 -> weight 2, 1 -> weight 3
    p_by_loc = {(0, 1): 4, (0, 2): 3, (1, 1): 2, (0, 3): 1}
    assert assignment_cost_identity(bs, p_by_loc) == 17


def test_single_job_goes_to_a_fast_last_slot():
    bs = build_blocks(1, MachinePark(m0=2, m1=1))
    assert bs.bmax == 1 and bs.Q == 1
    assert [(loc.machine, loc.ell) for loc in bs.blocks[0]] == [(0, 1)]


def test_tied_class_holds_both_fast_machines():
    bs = build_blocks(2, MachinePark(m0=2, m1=2))
    assert bs.bmax == 1 and bs.Q == 2
    assert sorted(loc.machine for loc in bs.blocks[0]) == [0, 1]


def test_ell_max_examples(two_speed_park):
    bs = build_blocks(4, two_speed_park)
    assert bs.ell_max(FAST, 3) == 3
    assert bs.ell_max(SLOW, 1) == 1
    table = ell_max_table(bs)
    assert table[FAST] == [1, 2, 3]
    assert table[SLOW] == [1]


def test_empty_class_has_empty_ell_max_row():
    bs = build_blocks(3, MachinePark(m0=0, m1=2))
    assert ell_max_table(bs)[SLOW] == []


def test_ell_max_is_capped_by_group_size(two_speed_park):
    bs = build_blocks(4, two_speed_park)
    assert bs.ell_max(FAST, 3, 1) == 1
    assert bs.ell_max(FAST, 3, 2) == 2


@given(st.integers(1, 12), st.integers(0, 3), st.integers(1, 3))
def test_block_sizes_add_up(n, m0, m1):
    park = MachinePark(m0=m0, m1=m1)
    bs = build_blocks(n, park)
    assert bs.Q + sum(len(b) for b in bs.blocks[1:]) == n
    assert 1 <= bs.Q <= len(bs.blocks[0])
    ws = [bs.weight(b) for b in range(bs.bmax)]
    assert ws == sorted(ws, reverse=True)


def test_is_block_respecting(two_speed_park):
    jobs = tuple(Job(k, k, 1, 100) for k in (1, 2, 3, 4))
    inst = Instance(jobs, two_speed_park, 4)
    bs = build_blocks(4, two_speed_park)
    assert is_block_respecting(Schedule.from_lists([[1, 2, 4], [3]]), inst, bs)
    assert is_block_respecting(Schedule.from_lists([[1, 3, 4], [2]]), inst, bs)
    assert not is_block_respecting(Schedule.from_lists([[1, 2, 3], [4]]), inst, bs)
    assert not is_block_respecting(Schedule.from_lists([[1, 2], [3, 4]]), inst, bs)


def test_dump_lists_every_block(two_speed_park):
    bs = build_blocks(4, two_speed_park)
    assert bs.dump().splitlines() == ["1 3 [(0,1)]", "2 2 [(0,2) (1,1)]", "3 1 [(0,3)]"]
