import math
import random

import pytest
from scipy.optimize import linear_sum_assignment

from bilevel_sched.blocks import build_blocks, is_block_respecting
from bilevel_sched.bnb import (BnbConfig, MemoDB, Node, branch, branch_equal_size, dominates,
                               follower_schedule, improve_by_blocks, initial_upper_bound,
                               last_block_completion, memo_entry, memo_probe_insert, root_node,
                               solve)
from bilevel_sched.core import Instance, Job, MachinePark, evaluate, generate
from bilevel_sched.oracle import brute_bilevel, brute_follower


def subtree_value(inst, bs, node):
    """Best completion of ``node`` without any pruning."""
    if node.b >= bs.bmax:
        return node.cost
    if node.b == bs.bmax - 1:
        res = last_block_completion(inst, bs, node)
        return math.inf if res is None else res[0]
    return min((subtree_value(inst, bs, c.node) for c in branch(inst, bs, node)), default=math.inf)


# ---------------------------------------------------------------- branching

def test_two_open_slots_give_three_children():
    park = MachinePark(m0=1, m1=1)
    jobs = tuple(Job(k + 1, p, 1, 9) for k, p in enumerate((1, 2, 3, 4)))
    inst = Instance(jobs, park, 2)
    bs = build_blocks(2, park)
    root = root_node(inst, bs)
    assert bin(root.A).count("1") == 2
    kids = branch(inst, bs, root)
    assert len(kids) == 3
    assert kids[-1].ell == 0  # reject child last


def test_reject_pruned_when_candidates_equal_slots():
    park = MachinePark(m0=1, m1=1)
    jobs = tuple(Job(k + 1, p, 1, 9) for k, p in enumerate((1, 2, 3)))
    inst = Instance(jobs, park, 3)
    bs = build_blocks(3, park)
    kids = branch(inst, bs, root_node(inst, bs))
    assert kids and all(c.ell == 1 for c in kids)


def test_tie_root_children(tie_instance):
    inst = tie_instance
    bs = build_blocks(2, inst.park)
    kids = branch(inst, bs, root_node(inst, bs))
    assert sorted(c.ell for c in kids) == [0, 1]
    placed = [c for c in kids if c.ell == 1][0].node.placed
    assert placed[1][0][2].id == 1


def test_equal_pair_on_one_machine():
    park = MachinePark(m0=1, m1=0)
    jobs = (Job(1, 2, 1, 9), Job(2, 2, 1, 9), Job(3, 5, 1, 9), Job(4, 6, 1, 9))
    inst = Instance(jobs, park, 2)
    bs = build_blocks(2, park)
    kids = branch_equal_size(inst, bs, root_node(inst, bs), 2)
    assert sorted(c.ell for c in kids) == [0, 1, 2]


def test_equal_pair_inside_one_block_uses_matching_subsets():
    park = MachinePark(m0=2, m1=0)
    inst = Instance((Job(1, 2, 1, 9), Job(2, 2, 1, 9), Job(3, 5, 1, 9), Job(4, 6, 1, 9)), park, 2)
    bs = build_blocks(2, park)  # one block of two slow locations
    kids = branch_equal_size(inst, bs, root_node(inst, bs), 2)
    for c in kids:
        assert len([1 for i in range(2) if c.node.C[i] > 0]) == c.ell


def test_ell_beyond_remaining_slots_is_filtered():
    park = MachinePark(m0=1, m1=0)
    inst = Instance(tuple(Job(k + 1, 2, 1, 9) for k in range(4)), park, 2)
    bs = build_blocks(2, park)
    kids = branch_equal_size(inst, bs, root_node(inst, bs), 4)
    assert max(c.ell for c in kids) == 2


# ------------------------------------------------------------ memorization

def random_nodes(inst, bs, depth):
    frontier = [root_node(inst, bs)]
    out = []
    for _ in range(depth):
        nxt = []
        for nd in frontier:
            if nd.b < bs.bmax - 1:
                nxt += [c.node for c in branch(inst, bs, nd)]
        out += nxt
        frontier = nxt
    return out


def test_dominates_reflexive_and_completion_condition():
    park = MachinePark(m0=1, m1=1)
    inst = generate(8, 4, m0=1, m1=1, tf=0.4, rdd=0.4, seed=1)
    bs = build_blocks(4, park)
    nodes = random_nodes(inst, bs, 2)
    e = memo_entry(bs, nodes[0])
    assert dominates(e, e)
    bigger = memo_entry(bs, nodes[0])
    bigger.C = tuple(c + (1 if k == 0 else 0) for k, c in enumerate(bigger.C))
    assert not dominates(bigger, e)
    assert dominates(e, bigger)


def test_dominance_is_confirmed_by_subtree_values():
    confirmed = 0
    for seed in range(25):
        inst = generate(7, 4, m0=1, m1=1, tf=0.6, rdd=0.6, seed=seed)
        bs = build_blocks(inst.n, inst.park)
        nodes = random_nodes(inst, bs, 3)
        entries = [(memo_entry(bs, nd), nd) for nd in nodes]
        for e1, n1 in entries:
            for e2, n2 in entries:
                if n1 is not n2 and dominates(e1, e2) and e1.C != e2.C:
                    assert subtree_value(inst, bs, n1) <= subtree_value(inst, bs, n2)
                    confirmed += 1
    assert confirmed > 0


def test_memo_probe_insert():
    inst = generate(8, 4, m0=1, m1=1, tf=0.4, rdd=0.4, seed=2)
    bs = build_blocks(4, inst.park)
    db = MemoDB(inst.N)
    node = random_nodes(inst, bs, 1)[0]
    assert memo_probe_insert(memo_entry(bs, node), db) == "inserted"
    assert memo_probe_insert(memo_entry(bs, node), db) == "pruned"


def test_memo_db_purge_keeps_capacity():
    inst = generate(10, 5, m0=1, m1=1, tf=0.4, rdd=0.4, seed=3)
    bs = build_blocks(5, inst.park)
    db = MemoDB(inst.N, capacity=8)
    for nd in random_nodes(inst, bs, 3):
        memo_probe_insert(memo_entry(bs, nd), db)
    assert db.size <= 8 and db.purges > 0


# ----------------------------------------------------------------- leaves

def test_one_slot_two_candidates():
    park = MachinePark(m0=1, m1=0)
    inst = Instance((Job(1, 3, 5, 1), Job(2, 3, 2, 1)), park, 1)
    bs = build_blocks(1, park)
    cost, leaf = last_block_completion(inst, bs, root_node(inst, bs))
    assert cost == 2  # both are tardy; the lighter one is taken


def test_all_candidates_early():
    park = MachinePark(m0=1, m1=1)
    inst = Instance(tuple(Job(k + 1, 3, 5, 100) for k in range(4)), park, 1)
    bs = build_blocks(1, park)
    assert last_block_completion(inst, bs, root_node(inst, bs))[0] == 0


def test_last_block_matches_exhaustive_fill():
    from itertools import permutations
    rng = random.Random(6)
    for _ in range(60):
        park = MachinePark(m0=rng.randint(0, 2), m1=rng.randint(1, 2))
        n = rng.randint(1, park.m)
        bs = build_blocks(n, park)
        if bs.bmax != 1:
            continue
        jobs = tuple(Job(k + 1, rng.randint(1, 5), rng.randint(1, 9), rng.randint(0, 6))
                     for k in range(rng.randint(n, 6)))
        inst = Instance(jobs, park, n)
        root = root_node(inst, bs)
        locs = [loc.machine for loc in bs.blocks[0]]
        best = min(sum(j.w for j, i in zip(perm, slots) if park.ticks(j.p, i) > j.d * park.L)
                   for perm in permutations(inst.jobs, n)
                   for slots in permutations(locs, n))
        assert last_block_completion(inst, bs, root)[0] == best


def test_hungarian_sanity():
    r, c = linear_sum_assignment([[1, 2], [3, 0]])
    assert sum([[1, 2], [3, 0]][i][j] for i, j in zip(r, c)) == 1


# ------------------------------------------------------------ upper bounds

def test_improve_keeps_optimal_solution():
    for seed in range(10):
        inst = generate(8, 4, m0=1, m1=1, tf=0.6, rdd=0.6, seed=seed)
        opt = brute_bilevel(inst)
        better = improve_by_blocks(opt.schedule, inst)
        assert evaluate(better, inst).leader_cost == opt.value


def test_improve_between_seed_and_optimum():
    for seed in range(20):
        inst = generate(9, 5, m0=1, m1=1, tf=0.8, rdd=0.4, seed=seed)
        bs = build_blocks(inst.n, inst.park)
        start = follower_schedule(list(inst.jobs[:inst.n]), inst, bs)
        better = improve_by_blocks(start, inst, bs)
        val = evaluate(better, inst).leader_cost
        assert brute_bilevel(inst).value <= val <= evaluate(start, inst).leader_cost
        assert is_block_respecting(better, inst, bs)


def test_huge_due_dates_give_zero_upper_bound():
    inst = Instance(tuple(Job(k + 1, k + 2, 3, 10**5) for k in range(12)), MachinePark(1, 1), 6)
    assert initial_upper_bound(inst)[0] == 0


def test_tie_upper_bound(tie_instance):
    assert initial_upper_bound(tie_instance)[0] == 0


def test_upper_bound_with_in_process_mip():
    inst = generate(8, 4, m0=1, m1=1, tf=0.8, rdd=0.6, seed=4)
    ub, sched = initial_upper_bound(inst, use_highs=True)
    assert ub == brute_bilevel(inst).value == evaluate(sched, inst).leader_cost


# ------------------------------------------------------------------ solve

def test_tie_solve(tie_instance):
    res = solve(tie_instance)
    assert res.value == 0 and res.status == "optimal"
    assert evaluate(res.schedule, tie_instance).leader_cost == 0


@pytest.mark.parametrize("cfg", [BnbConfig(), BnbConfig(memo=False), BnbConfig(use_cg=False)],
                         ids=["default", "memo-off", "cg-off"])
def test_matches_oracle(cfg):
    rng = random.Random(9)
    for k in range(25):
        N = rng.choice([6, 8, 10])
        n = rng.choice([N // 4, N // 2, 3 * N // 4])
        inst = generate(N, n, m0=1, m1=1, tf=rng.choice([0.2, 0.6, 1.0]),
                        rdd=rng.choice([0.2, 0.6, 1.0]), seed=k)
        res = solve(inst, cfg)
        opt = brute_bilevel(inst).value
        assert res.value == opt
        assert evaluate(res.schedule, inst).leader_cost == opt
        assert res.stats.lb_root <= opt <= res.stats.ub_init


def test_n_equals_N_is_follower_optimum():
    for seed in range(5):
        inst = generate(7, 7, m0=1, m1=1, tf=0.6, rdd=0.6, seed=seed)
        assert solve(inst).value == brute_follower(inst.jobs, inst.park).leader_cost


def test_csv_row(tie_instance):
    row = solve(tie_instance).csv_row("tie")
    assert row.startswith("tie,0,optimal,")
    assert len(row.split(",")) == 7
