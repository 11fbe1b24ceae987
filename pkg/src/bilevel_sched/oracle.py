"""Exhaustive ground truth for tiny instances.

The follower oracle enumerates every machine assignment.  On each machine
jobs run in SPT order, and jobs of equal processing time may appear in any
order, since these are the only orders that can reach the minimum total
completion time.  ``unrestricted=True`` drops that restriction and tries
every permutation; it is meant for validating the restriction on very
small sets.
"""
from __future__ import annotations

from itertools import combinations, groupby, permutations, product
from typing import NamedTuple, Sequence

from .core import Instance, Job, MachinePark, Schedule, canonicalize, evaluate_sequences


class OracleBudgetError(RuntimeError):
    """Raised when an exhaustive search would be too large."""


class FollowerOptimum(NamedTuple):
    total_completion: int
    leader_cost: int
    schedule: Schedule


class BilevelOptimum(NamedTuple):
    value: int
    selection: tuple[int, ...]
    schedule: Schedule


def _best_machine_order(jobs: list[Job], i: int, park: MachinePark) -> tuple[int, int, list[Job]]:
    """Minimum tardy cost for one machine over SPT orders with equal-p runs permuted."""
    L = park.L
    t = 0
    total = cost = 0
    order: list[Job] = []
    for _, run in groupby(canonicalize(jobs), key=lambda j: j.p):
        run = list(run)
        step = park.ticks(run[0].p, i)
        best = None
        for perm in permutations(run):
            c = sum(j.w for k, j in enumerate(perm, 1) if t + k * step > j.d * L)
            if best is None or c < best[0]:
                best = (c, perm)
        cost += best[0]
        order.extend(best[1])
        for _ in run:
            t += step
            total += t
    return total, cost, order


def brute_follower(selected: Sequence[Job], park: MachinePark, *, max_jobs: int = 9,
                   unrestricted: bool = False) -> FollowerOptimum:
    """Lexicographic follower optimum ``(min sum C, min cost among those)``."""
    selected = list(selected)
    if len(selected) > max_jobs or park.m > 3:
        raise OracleBudgetError(f"follower oracle limited to {max_jobs} jobs and 3 machines")
    if unrestricted and len(selected) > 6:
        raise OracleBudgetError("unrestricted enumeration limited to 6 jobs")
    m = park.m
    best = None
    for assign in product(range(m), repeat=len(selected)):
        rows = [[] for _ in range(m)]
        for job, i in zip(selected, assign):
            rows[i].append(job)
        if unrestricted:
            for perms in product(*(permutations(r) for r in rows)):
                ev = evaluate_sequences(perms, park)
                key = (ev.total_completion, ev.leader_cost)
                if best is None or key < best[0]:
                    best = (key, [list(p) for p in perms])
            continue
        total = cost = 0
        orders = []
        for i, r in enumerate(rows):
            tc, c, order = _best_machine_order(r, i, park)
            total += tc
            cost += c
            orders.append(order)
        if best is None or (total, cost) < best[0]:
            best = ((total, cost), orders)
    (total, cost), orders = best
    return FollowerOptimum(total, cost, Schedule.from_lists([[j.id for j in r] for r in orders]))


def brute_bilevel(inst: Instance, *, max_jobs: int = 10) -> BilevelOptimum:
    """Best leader selection; ties go to the lexicographically smallest id tuple."""
    if inst.N > max_jobs:
        raise OracleBudgetError(f"bilevel oracle limited to N <= {max_jobs}")
    jobs = sorted(inst.jobs, key=lambda j: j.id)
    best = None
    for subset in combinations(jobs, inst.n):
        res = brute_follower(subset, inst.park)
        if best is None or res.leader_cost < best.value:
            best = BilevelOptimum(res.leader_cost, tuple(j.id for j in subset), res.schedule)
            if best.value == 0:
                break
    return best


def brute_max_completion(inst: Instance, *, max_jobs: int = 10) -> tuple[int, tuple[int, ...]]:
    """Largest follower-optimal total completion time over all selections.

    Uses the follower oracle only for its first objective, so it does not
    depend on the SPT-FAM implementation.
    """
    if inst.N > max_jobs:
        raise OracleBudgetError(f"oracle limited to N <= {max_jobs}")
    best = None
    for subset in combinations(sorted(inst.jobs, key=lambda j: j.id), inst.n):
        tc = brute_follower(subset, inst.park).total_completion
        if best is None or tc > best[0]:
            best = (tc, tuple(j.id for j in subset))
    return best
