"""Polynomial follower-side algorithms."""
from __future__ import annotations

import heapq
from typing import NamedTuple, Sequence

from .core import Instance, Job, MachinePark, Schedule, canonicalize, evaluate


def optimal_locations(n: int, park: MachinePark) -> list[tuple[int, int, int]]:
    """The ``n`` smallest positional weights as ``(weight, machine, ell)``.

    Ties prefer the faster machine, then the lower machine index.
    """
    L = park.L
    cands = []
    for i in range(park.m):
        step = L // park.speed(i)
        for ell in range(1, n + 1):
            cands.append((ell * step, -park.speed(i), i, ell))
    cands.sort()
    return [(w, i, ell) for w, _, i, ell in cands[:n]]


def spt_fam(selected: Sequence[Job], park: MachinePark) -> Schedule:
    """A total-completion-time optimal schedule of ``selected``.

    Built right to left: the k-th longest job goes to the k-th smallest
    positional weight.  The result respects the block structure for
    ``len(selected)`` jobs.
    """
    if not selected:
        return Schedule.empty(park.m)
    order = canonicalize(selected)[::-1]
    locs = optimal_locations(len(order), park)
    by_machine = [[] for _ in range(park.m)]
    for job, (_, i, ell) in zip(order, locs):
        by_machine[i].append((ell, job.id))
    return Schedule.from_lists([[jid for _, jid in sorted(row, reverse=True)] for row in by_machine])


class EqualSizeResult(NamedTuple):
    assignment: tuple[Job, ...]  # job placed in each slot, same order as ``slots``
    tardy: frozenset  # ids of tardy jobs
    cost: int


def equal_size_assign(group: Sequence[Job], slots: Sequence[int], select: int | None = None,
                      L: int = 1) -> EqualSizeResult:
    """Choose ``select`` equal-size jobs for fixed completion slots (ticks)
    minimising the weighted number of tardy jobs.

    Slots are scanned from the latest; each takes the heaviest job that is
    still on time there.  Slots left open get the lightest remaining jobs,
    which are all tardy.
    """
    if select is None:
        select = len(slots)
    if select > len(group):
        raise ValueError("cannot select more jobs than the group holds")
    if select != len(slots):
        raise ValueError("need exactly one slot per selected job")
    if select == 0:
        return EqualSizeResult((), frozenset(), 0)

    slot_order = sorted(range(len(slots)), key=lambda s: slots[s], reverse=True)
    jobs = sorted(group, key=lambda j: (-j.d, j.id))
    heap = []
    nxt = 0
    placed: list[Job | None] = [None] * len(slots)
    open_slots = []
    for s in slot_order:
        while nxt < len(jobs) and jobs[nxt].d * L >= slots[s]:
            j = jobs[nxt]
            heapq.heappush(heap, (-j.w, j.d, j.id, j))
            nxt += 1
        if heap:
            placed[s] = heapq.heappop(heap)[3]
        else:
            open_slots.append(s)

    rest = [entry[3] for entry in heap] + jobs[nxt:]
    rest.sort(key=lambda j: (j.w, -j.d, j.id))
    tardy = set()
    cost = 0
    for s, job in zip(open_slots, rest):
        placed[s] = job
        tardy.add(job.id)
        cost += job.w
    return EqualSizeResult(tuple(placed), frozenset(tardy), cost)


def adversarial_solve(inst: Instance) -> tuple[list[Job], Schedule, int]:
    """Leader maximises the follower's optimal total completion time.

    Returns the selection, the follower's schedule and its total completion
    time in ticks.
    """
    selection = list(inst.jobs[inst.N - inst.n:])
    sched = spt_fam(selection, inst.park)
    return selection, sched, evaluate(sched, inst).total_completion
