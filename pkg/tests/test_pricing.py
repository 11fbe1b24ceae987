import math
import random
from itertools import combinations, permutations

import pytest

from bilevel_sched.blocks import build_blocks
from bilevel_sched.core import FAST, SLOW, Job, MachinePark
from bilevel_sched.pricing import (GroupJob, PricingContext, exhaustive_price, fallback_exact,
                                   fixed_M_quadratic, price, solve_fixed_M, subroutine_S,
                                   sweep_values)


def gj(jid, dL, lam, w, p=3):
    return GroupJob(Job(jid, p, w, 0), dL, lam)


def brute_exact(members, ell, t, step):
    best = -math.inf
    for sub in combinations(members, ell):
        for perm in permutations(sub):
            best = max(best, sum(g.v if t + k * step <= g.dL else g.q for k, g in enumerate(perm, 1)))
    return best


def test_S_for_ell_zero():
    assert subroutine_S([gj(1, 5, 1.0, 2)], 0, 0, 1) == [(0.0, ())]


def test_S_two_jobs_both_on_time():
    # v = (5, 3), q = (1, -2): w = v - q = (4, 5)
    members = [gj(1, 10, 5.0, 4), gj(2, 10, 3.0, 5)]
    S = subroutine_S(members, 2, 0, 1)
    assert S[2].cost == pytest.approx(-8.0)
    assert {j.id for j in S[2].sequence} == {1, 2}


def test_w_prime_formula():
    g = GroupJob(Job(1, 1, 3, 0), 0, 4.0)  # v = 4, q = 1
    M = 2.0
    assert min(g.v - M, g.v - g.q) == 2.0


def test_fixed_M_single_job_on_time():
    res = solve_fixed_M([gj(1, 1, 5.0, 2)], 1.0, 0, 1)
    assert [g.job.id for g in res.on_time] == [1] and res.tardy == ()


def test_fixed_M_two_jobs_same_deadline():
    members = [gj(1, 1, 6.0, 2), gj(2, 1, 4.0, 1)]  # w' at M=0: 2 and 1
    res = solve_fixed_M(members, 0.0, 0, 1)
    assert [g.job.id for g in res.on_time] == [1]
    assert [g.job.id for g in res.tardy] == [2]  # q - M = 3 > 0
    res = solve_fixed_M(members, 3.5, 0, 1)
    assert res.tardy == ()  # q - M = -0.5 < 0


def random_group(rng, n):
    return [GroupJob(Job(k + 1, 2, rng.randint(0, 9), 0), rng.randint(0, 24),
                     rng.choice([0.0, -1.0, 1.5, rng.uniform(-6, 9)])) for k in range(n)]


def test_fixed_M_matches_quadratic_dp():
    rng = random.Random(3)
    for _ in range(300):
        members = random_group(rng, rng.randint(1, 12))
        M = rng.uniform(-8, 10)
        t = rng.randint(0, 6)
        assert solve_fixed_M(members, M, t, 2).value == pytest.approx(
            fixed_M_quadratic(members, M, t, 2), abs=1e-9)


def test_fallback_full_and_single():
    members = [gj(1, 10, 2.0, 1), gj(2, 10, 3.0, 1), gj(3, 10, 1.5, 1)]
    assert fallback_exact(members, 3, 0, 1)[0] == pytest.approx(6.5)
    late = [gj(1, 0, 2.0, 1), gj(2, 10, 3.0, 9)]  # job 1 cannot be on time
    assert fallback_exact(late, 1, 0, 1)[0] == pytest.approx(3.0)


def test_S_matches_brute_force():
    rng = random.Random(8)
    for _ in range(200):
        members = random_group(rng, rng.randint(1, 6))
        t = rng.randint(0, 4)
        lm = rng.randint(0, len(members))
        S = subroutine_S(members, lm, t, 2)
        for ell in range(1, lm + 1):
            assert -S[ell].cost == pytest.approx(brute_exact(members, ell, t, 2), abs=1e-9)
            assert len(S[ell].sequence) == ell


def test_sweep_values_are_decreasing():
    vals = sweep_values(random_group(random.Random(1), 5))
    assert vals == sorted(vals, reverse=True)


def make_ctx(rng, n_jobs, gamma=FAST, n=6):
    park = MachinePark(m0=1, m1=1)
    bs = build_blocks(n, park)
    jobs = sorted((Job(k + 1, rng.choice([2, 3, 3, 5]), rng.randint(1, 9), rng.randint(0, 20))
                   for k in range(n_jobs)), key=lambda j: (j.p, j.d, j.id))
    return PricingContext(bs, gamma, list(enumerate(jobs)))


def test_zero_duals_give_no_columns():
    ctx = make_ctx(random.Random(0), 5)
    rc, cols = price(ctx, {k: 0.0 for k in range(5)}, 0, 2, 0.0)
    assert rc >= 0 and cols == []


def test_single_group_two_jobs_big_dual_on_one():
    park = MachinePark(m0=1, m1=1)
    bs = build_blocks(2, park)
    jobs = [Job(1, 4, 3, 1), Job(2, 4, 2, 1)]  # both tardy on a fast machine at t=0
    ctx = PricingContext(bs, FAST, list(enumerate(jobs)))
    lam = {0: 10.0, 1: 0.0}
    rc, cols = price(ctx, lam, 0, 1, 0.5)
    assert cols[0].jobs == (0,)
    assert rc == pytest.approx(3 - 10.0 - 0.5)


def test_price_matches_exhaustive_enumeration():
    rng = random.Random(4)
    for _ in range(150):
        n_jobs = rng.randint(1, 6)
        ctx = make_ctx(rng, n_jobs, gamma=rng.choice([FAST, SLOW]))
        lam = {k: rng.choice([0.0, -rng.uniform(0, 8)]) for k in range(n_jobs)}
        K = rng.randint(1, min(3, n_jobs))
        t0 = rng.randint(0, 8)
        conv = rng.uniform(-5, 5)
        rc, cols = price(ctx, lam, t0, K, conv)
        ref = exhaustive_price(ctx, lam, t0, K, conv)
        if math.isinf(ref):
            assert math.isinf(rc)
            continue
        assert rc == pytest.approx(ref, abs=1e-6)
        for c in cols:
            assert c.reduced_cost < 0 and len(c.jobs) == K
