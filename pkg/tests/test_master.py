import dataclasses
import random
from types import SimpleNamespace

import numpy as np
import pytest

from bilevel_sched.blocks import build_blocks
from bilevel_sched.core import FAST, SLOW, Instance, Job, MachinePark, generate
from bilevel_sched.master import (MAX, MIN, build_master, cg_lower_bound, filter_pool,
                                  lagrangian_bound, root_context)
from bilevel_sched.oracle import brute_bilevel


def instance(n, park, N=6, seed=0):
    rng = random.Random(seed)
    jobs = tuple(Job(k + 1, rng.randint(1, 9), rng.randint(1, 9), rng.randint(0, 15)) for k in range(N))
    return Instance(jobs, park, n)


def test_lagrangian_formula_example():
    # z_RMP = 10 as y . b, one convexity group with rhs 1 and best reduced cost -2
    fake = SimpleNamespace(rhs=np.array([10.0]), conv_groups=[("g", 1, [("t", MAX)]),
                                                              ("h", 0, [("u", MIN)])])
    lb = lagrangian_bound(fake, np.array([1.0]), {("t", MAX): -2.0, ("u", MIN): 0.0})
    assert lb == 8.0


def test_root_rows_fast_only_boundary():
    park = MachinePark(m0=1, m1=1)
    inst = instance(4, park)
    bs = build_blocks(4, park)
    ctx = root_context(inst, bs)
    master = build_master(ctx)
    assert not master.spanning
    conv = {key[1:]: rhs for key, rhs, _ in master.conv_groups}
    fast = next(t for t in master.types if t.gamma == FAST)
    slow = next(t for t in master.types if t.gamma == SLOW)
    # B_1 is a single fast location with Q = 1: the fast machine must fill it
    assert conv[fast, MAX] == 1 and conv[fast, MIN] == 0
    assert conv[slow, MAX] == 1 and conv[slow, MIN] == 0


@pytest.mark.parametrize("m0, m1, n, cut", [(1, 1, 2, 0), (2, 1, 3, 1)])
def test_root_rows_spanning_boundary(m0, m1, n, cut):
    park = MachinePark(m0=m0, m1=m1)
    bs = build_blocks(n, park)
    assert bs.boundary_span == {FAST, SLOW}
    ctx = root_context(instance(n, park), bs)
    master = build_master(ctx)
    assert master.spanning
    keys = [k for k, _, _ in master.rows if k[0] != "job"]
    assert sum(k[0] == "type" for k in keys) == 2
    assert ("Q",) in keys and ("cut",) in keys
    assert master.cut_rhs == max(bs.Q - m1, 0) == cut


def test_artificial_only_master():
    park = MachinePark(m0=1, m1=1)
    inst = instance(4, park)
    master = build_master(root_context(inst, build_blocks(4, park)))
    res = master.lp.solve()
    expected = master.artificial_cost * sum(r for k, _, r in master.rows if k[0] != "job")
    assert res.objective == pytest.approx(expected)


def test_zero_cost_instance_bound_is_zero():
    park = MachinePark(m0=1, m1=1)
    jobs = tuple(Job(k + 1, k + 1, 5, 10**4) for k in range(6))
    inst = Instance(jobs, park, 3)
    res = cg_lower_bound(root_context(inst, build_blocks(3, park)))
    assert res.lb == 0 and res.converged


def test_root_bound_below_optimum():
    for seed in range(40):
        N = [6, 8][seed % 2]
        inst = generate(N, N // 2, m0=1, m1=1, tf=0.6, rdd=0.4, seed=seed)
        bs = build_blocks(inst.n, inst.park)
        res = cg_lower_bound(root_context(inst, bs))
        assert res.lb <= brute_bilevel(inst).value


def pool_ctx():
    park = MachinePark(m0=1, m1=1)
    inst = instance(4, park, N=8)
    ctx = root_context(inst, build_blocks(4, park))
    return dataclasses.replace(ctx, g0=2)


def pool_with(ctx, marked, total=10):
    fast = next(ms for ms in ctx.machines if ms.gamma == FAST)
    good = [(FAST, tuple(range(2 + k % 3, 2 + k % 3 + fast.r))) for k in range(total - marked)]
    bad = [(FAST, (0,) + tuple(range(3, 2 + fast.r))) for _ in range(marked)]
    return good + bad


def test_filter_pool_keeps_small_marked_fraction():
    ctx = pool_ctx()
    kept, active = filter_pool(pool_with(ctx, 2), ctx, 0.3)
    assert len(kept) == 10 and len(active) == 8


def test_filter_pool_drops_large_marked_fraction():
    ctx = pool_ctx()
    kept, active = filter_pool(pool_with(ctx, 4), ctx, 0.3)
    assert len(kept) == 6 and kept == active


def test_filter_pool_empty():
    ctx = pool_ctx()
    assert filter_pool([], ctx) == ([], [])
    master = build_master(ctx, [])
    assert all(c is None for c in master.columns)
