"""Moderately exponential dynamic program for the bilevel problem.

States are ``(C, b, A, g)``: machine completion ticks, current block,
machines still open in it and the first undecided job.  Jobs are consumed
in canonical order one equal-processing-time run at a time; a run of
length one is the plain "assign job ``j`` to machine ``i`` or skip it"
transition.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .blocks import BlockStructure, build_blocks
from .core import Instance, Schedule
from .filling import class_key, placements, remaining_slots, start
from .follower import equal_size_assign

INF = math.inf


class DpBudgetError(RuntimeError):
    """Raised instead of running the DP on an instance that is too large."""


@dataclass(frozen=True)
class DpState:
    C: tuple[int, ...]
    b: int
    A: int  # bit mask of open machines in block b
    g: int  # canonical index of the first undecided job


class DpResult(NamedTuple):
    value: int
    schedule: Schedule
    selection: tuple[int, ...]
    states: int

    def stats_line(self) -> str:
        return f"states={self.states}, value={self.value}"


def equal_runs(inst: Instance) -> list[tuple[int, int]]:
    """Maximal runs ``[start, end)`` of equal processing time in canonical order."""
    runs = []
    s = 0
    jobs = inst.jobs
    for k in range(1, inst.N + 1):
        if k == inst.N or jobs[k].p != jobs[s].p:
            runs.append((s, k))
            s = k
    return runs


def dp_equal_size_step(inst: Instance, bs: BlockStructure, state: DpState, run_end: int):
    """Successors of ``state`` when deciding the run ``[state.g, run_end)``.

    Yields ``(cost, next_state, placed)`` where ``placed`` lists
    ``(machine, completion_tick, job)`` for the selected jobs.  Duplicate
    successors (same class-symmetric state and cost) are merged.
    """
    group = inst.jobs[state.g:run_end]
    L = inst.park.L
    seen = set()
    out = []
    cap = min(len(group), remaining_slots(bs, state.b, state.A))
    for ell in range(cap + 1):
        for pl in placements(bs, state.C, state.b, state.A, group[0].p, ell):
            times = [t for _, t in pl.slots]
            res = equal_size_assign(group, times, ell, L)
            nxt = DpState(pl.C, pl.b, pl.A, run_end)
            key = (class_key(bs, pl.C, pl.A), pl.b, res.cost)
            if key in seen:
                continue
            seen.add(key)
            placed = tuple((i, t, job) for (i, t), job in zip(pl.slots, res.assignment))
            out.append((res.cost, nxt, placed))
    return out


def dp_solve(inst: Instance, *, max_jobs: int = 14, max_machines: int = 3,
             max_total_p: int = 200, memo: bool = True) -> DpResult:
    """Optimal leader cost and a schedule attaining it.

    Raises
    ------
    DpBudgetError
        If the instance exceeds the configured size budget.
    """
    total_p = sum(j.p for j in inst.jobs)
    if inst.N > max_jobs or inst.park.m > max_machines or total_p > max_total_p:
        raise DpBudgetError(
            f"instance outside DP budget (N={inst.N}/{max_jobs}, m={inst.park.m}/{max_machines}, "
            f"sum p={total_p}/{max_total_p})")
    bs = build_blocks(inst.n, inst.park)
    runs = equal_runs(inst)
    run_end = {s: e for s, e in runs}
    suffix_jobs = {s: inst.N - s for s, _ in runs}
    suffix_jobs[inst.N] = 0
    table: dict = {}
    counter = [0]

    def opt(st: DpState) -> float:
        if st.b >= bs.bmax:
            return 0
        if suffix_jobs[st.g] < remaining_slots(bs, st.b, st.A):
            return INF
        key = (class_key(bs, st.C, st.A), st.b, st.g)
        if memo and key in table:
            return table[key]
        counter[0] += 1
        best = INF
        for cost, nxt, _ in dp_equal_size_step(inst, bs, st, run_end[st.g]):
            val = cost + opt(nxt)
            if val < best:
                best = val
        if memo:
            table[key] = best
        return best

    b0, A0 = start(bs)
    root = DpState((0,) * inst.park.m, b0, A0, 0)
    value = opt(root)
    if value == INF:
        raise RuntimeError("no feasible selection")  # unreachable for n <= N

    placed_all = []
    st = root
    while st.b < bs.bmax:
        target = opt(st)
        for cost, nxt, placed in dp_equal_size_step(inst, bs, st, run_end[st.g]):
            if cost + opt(nxt) == target:
                placed_all.extend(placed)
                st = nxt
                break
    seqs = [[] for _ in range(inst.park.m)]
    for i, t, job in sorted(placed_all, key=lambda x: (x[0], x[1])):
        seqs[i].append(job.id)
    sched = Schedule.from_lists(seqs)
    selection = tuple(sorted(job.id for _, _, job in placed_all))
    return DpResult(int(value), sched, selection, counter[0])


def state_space_bound(inst: Instance) -> int:
    """``2^m (L sum p + 1)^m N bmax``, an upper bound on visited states."""
    bs = build_blocks(inst.n, inst.park)
    m = inst.park.m
    total = inst.park.L * sum(j.p for j in inst.jobs)
    return 2 ** m * (total + 1) ** m * inst.N * bs.bmax
