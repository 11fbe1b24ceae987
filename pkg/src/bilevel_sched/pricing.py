"""Pricing for the set-covering master: the cheapest single-machine schedule
under given duals.

A machine schedule of speed class ``gamma`` starting at tick ``t0`` takes
exactly ``K`` jobs in SPT order.  Its reduced cost is
``sum_j (w_j [C_j > d_j L] - lambda_j) - lambda_conv``.  Jobs are grouped
by processing time.  The dynamic program

    F_k(t, g) = min_{0 <= l <= l_max(gamma, k, n_g)} S_g(l, t) + F_{k-l}(t + l p'_g, g + 1)

runs backwards over groups with vectors over the start tick ``t``.
``S_g(l, t)`` is the best way to take ``l`` jobs of group ``g`` into ``l``
consecutive slots starting at ``t``.  For singletons it is a closed form.
Small groups use brute force.  Larger groups use the M-sweep over
:func:`solve_fixed_M` and fall back to :func:`fallback_exact` for any
cardinality the sweep skips.

Orientation: :func:`solve_fixed_M` and :func:`fallback_exact` *maximise*
``sum_on v_j + sum_tardy q_j`` with ``v_j = lambda_j`` and
``q_j = lambda_j - w_j``.  :func:`subroutine_S` and :func:`price` report
the negated value, i.e. a cost to minimise.
"""
from __future__ import annotations

import heapq
from itertools import combinations, permutations
from typing import NamedTuple, Sequence

import numpy as np

from .blocks import BlockStructure
from .core import Job, MachinePark

INF = float("inf")
NEG_TOL = -1e-7


class GroupJob(NamedTuple):
    job: Job
    dL: int  # due date in ticks
    lam: float

    @property
    def v(self) -> float:
        return self.lam

    @property
    def q(self) -> float:
        return self.lam - self.job.w


class JobGroup(NamedTuple):
    p: int
    members: tuple[GroupJob, ...]


class FixedMResult(NamedTuple):
    on_time: tuple[GroupJob, ...]  # EDD order
    tardy: tuple[GroupJob, ...]
    value: float  # sum_on (v - M) + sum_tardy (q - M)
    raw: float  # sum_on v + sum_tardy q
    ops: int

    @property
    def cardinality(self) -> int:
        return len(self.on_time) + len(self.tardy)


def normalized_deadline(dL: int, t: int, step: int) -> int:
    """Latest on-time slot index for a job of ``step`` ticks started at ``t``."""
    return (dL - t) // step


class _SlotFinder:
    """Union-find over unit slots ``1..n``: ``find(s)`` gives the latest free
    slot ``<= s`` (0 when none is left)."""

    def __init__(self, n: int):
        self.parent = list(range(n + 1))
        self.ops = 0

    def find(self, s: int) -> int:
        root = s
        while self.parent[root] != root:
            root = self.parent[root]
            self.ops += 1
        while self.parent[s] != root:
            self.parent[s], s = root, self.parent[s]
            self.ops += 1
        return root

    def occupy(self, s: int) -> None:
        self.parent[s] = s - 1
        self.ops += 1


class _Sorted(NamedTuple):
    by_v: tuple[int, ...]  # member indices, non-increasing v (ties: larger w)
    by_w: tuple[int, ...]  # member indices, non-increasing w


def presort(members: Sequence[GroupJob]) -> _Sorted:
    idx = range(len(members))
    by_v = sorted(idx, key=lambda i: (-members[i].v, -members[i].job.w, members[i].job.id))
    by_w = sorted(idx, key=lambda i: (-members[i].job.w, members[i].job.id))
    return _Sorted(tuple(by_v), tuple(by_w))


def solve_fixed_M(members: Sequence[GroupJob], M: float, t: int, step: int,
                  order: _Sorted | None = None) -> FixedMResult:
    """Free-cardinality selection maximising ``sum (contribution - M)``.

    Linear in the group size once the two presorted orders are known: the
    gain of running job ``j`` on time instead of its best alternative is
    ``w'_j = min(v_j - M, v_j - q_j)``; jobs are offered in non-increasing
    ``w'`` to a union-find slot structure, and everything that does not get
    an on-time slot is taken tardy iff ``q_j - M > 0``.
    """
    n = len(members)
    if order is None:
        order = presort(members)
    # Merge: jobs with q <= M are keyed by v - M (in by_v order), others by w.
    a = [i for i in order.by_v if members[i].q <= M]
    b = [i for i in order.by_w if members[i].q > M]
    merged = []
    ia = ib = 0
    ops = len(a) + len(b)
    while ia < len(a) or ib < len(b):
        if ib >= len(b):
            take_a = True
        elif ia >= len(a):
            take_a = False
        else:
            ja, jb = members[a[ia]], members[b[ib]]
            ka, kb = ja.v - M, float(jb.job.w)
            take_a = ka > kb or (ka == kb and ja.job.w >= jb.job.w)
        if take_a:
            merged.append((members[a[ia]].v - M, a[ia]))
            ia += 1
        else:
            merged.append((float(members[b[ib]].job.w), b[ib]))
            ib += 1
        ops += 1
    slots = _SlotFinder(n)
    on = [False] * n
    for gain, i in merged:
        if gain <= 0:
            break
        d = min(normalized_deadline(members[i].dL, t, step), n)
        if d <= 0:
            continue
        s = slots.find(d)
        if s == 0:
            continue
        slots.occupy(s)
        on[i] = True
    ops += slots.ops + n
    on_time = tuple(sorted((members[i] for i in range(n) if on[i]), key=lambda g: (g.dL, g.job.id)))
    tardy = tuple(members[i] for i in range(n) if not on[i] and members[i].q - M > 0)
    raw = sum(g.v for g in on_time) + sum(g.q for g in tardy)
    return FixedMResult(on_time, tardy, raw - M * (len(on_time) + len(tardy)), raw, ops)


def fixed_M_quadratic(members: Sequence[GroupJob], M: float, t: int, step: int) -> float:
    """Reference ``O(n^2)`` value for :func:`solve_fixed_M`:
    ``f_{j+1}(k) = max(f_j(k), f_j(k-1) + w'_{j+1})`` over jobs in EDD order."""
    n = len(members)
    base = sum(max(g.q - M, 0.0) for g in members)
    f = [0.0] + [-INF] * n
    for g in sorted(members, key=lambda g: g.dL):
        wp = min(g.v - M, g.v - g.q)
        d = normalized_deadline(g.dL, t, step)
        for k in range(n, 0, -1):
            if k <= d and f[k - 1] > -INF and f[k - 1] + wp > f[k]:
                f[k] = f[k - 1] + wp
    return base + max(f)


def fallback_exact(members: Sequence[GroupJob], ell: int, t: int, step: int):
    """Best exactly-``ell`` selection (maximisation) by a DP over EDD order.

    Returns ``(value, on_time, tardy)`` or ``(-inf, (), ())`` if ``ell`` is
    larger than the group.
    """
    n = len(members)
    if ell > n:
        return -INF, (), ()
    edd = sorted(members, key=lambda g: (g.dL, g.job.id))
    # best[c][o] = (value, choices) after a prefix of jobs
    best: dict[tuple[int, int], tuple[float, tuple]] = {(0, 0): (0.0, ())}
    for idx, g in enumerate(edd):
        d = normalized_deadline(g.dL, t, step)
        nxt = dict(best)
        for (c, o), (val, ch) in best.items():
            if c == ell:
                continue
            key = (c + 1, o)
            cand = val + g.q
            if key not in nxt or cand > nxt[key][0]:
                nxt[key] = (cand, ch + ((idx, False),))
            if o + 1 <= d:
                key = (c + 1, o + 1)
                cand = val + g.v
                if key not in nxt or cand > nxt[key][0]:
                    nxt[key] = (cand, ch + ((idx, True),))
        best = nxt
    finals = [(v, ch) for (c, o), (v, ch) in best.items() if c == ell]
    val, ch = max(finals, key=lambda x: x[0])
    on = tuple(edd[i] for i, flag in ch if flag)
    tardy = tuple(edd[i] for i, flag in ch if not flag)
    return val, on, tardy


def _brute_S(members, ell, t, step):
    best = None
    for subset in combinations(members, ell):
        for perm in permutations(subset):
            val = 0.0
            for pos, g in enumerate(perm, 1):
                val += g.v if t + pos * step <= g.dL else g.q
            if best is None or val > best[0]:
                best = (val, perm)
    return best


class SEntry(NamedTuple):
    cost: float  # minimisation orientation
    sequence: tuple[Job, ...]  # slot order


def subroutine_S(members: Sequence[GroupJob], ell_max: int, t: int, step: int) -> list[SEntry | None]:
    """Best selection of exactly ``ell`` jobs for ``ell = 0..ell_max``.

    Entry ``ell`` is ``None`` when the group has fewer than ``ell`` jobs.
    """
    out: list[SEntry | None] = [SEntry(0.0, ())]
    ell_max = min(ell_max, len(members))
    if ell_max <= 0:
        return out
    if ell_max <= 3:
        for ell in range(1, ell_max + 1):
            val, perm = _brute_S(members, ell, t, step)
            out.append(SEntry(-val, tuple(g.job for g in perm)))
        return out

    found: dict[int, tuple[float, tuple, tuple]] = {}
    for M in sweep_values(members):
        res = solve_fixed_M(members, M, t, step)
        c = res.cardinality
        if c > ell_max:
            break
        if c >= 1 and (c not in found or res.raw > found[c][0]):
            found[c] = (res.raw, res.on_time, res.tardy)
    for ell in range(1, ell_max + 1):
        if ell not in found:
            found[ell] = fallback_exact(members, ell, t, step)
        val, on, tardy = found[ell]
        seq = tuple(g.job for g in on) + tuple(g.job for g in tardy)
        out.append(SEntry(-val, seq))
    return out


def sweep_values(members: Sequence[GroupJob]) -> list[float]:
    """Representative ``M`` values, one inside every interval between
    consecutive breakpoints, in non-increasing order.

    Breakpoints are ``v_j``, ``q_j`` and ``v_j - v_k + q_k``; taking the
    midpoint of each interval plays the role of the ``+-epsilon``
    perturbation without choosing an epsilon.
    """
    pts = set()
    for g in members:
        pts.add(g.v)
        pts.add(g.q)
    for a in members:
        for b in members:
            if a is not b:
                pts.add(a.v - b.v + b.q)
    pts = sorted(pts, reverse=True)
    out = [pts[0] + 1.0]
    out += [(x + y) / 2 for x, y in zip(pts, pts[1:])]
    out.append(pts[-1] - 1.0)
    return out


# ------------------------------------------------------------ the DP


class PricedSchedule(NamedTuple):
    jobs: tuple[int, ...]  # canonical indices, processing order
    tardy: frozenset  # canonical indices of tardy jobs
    cost: int
    reduced_cost: float


class PricingContext:
    """Dual-independent data for pricing one class over a job suffix.

    ``jobs`` are (canonical index, Job) pairs in canonical order.
    """

    def __init__(self, bs: BlockStructure, gamma: int, jobs: Sequence[tuple[int, Job]]):
        park: MachinePark = bs.park
        self.bs = bs
        self.gamma = gamma
        self.L = park.L
        self.jobs = list(jobs)
        groups = []
        for pos, job in self.jobs:
            if groups and groups[-1][0] == job.p:
                groups[-1][1].append((pos, job))
            else:
                groups.append((job.p, [(pos, job)]))
        self.groups = groups
        self.steps = [park.class_ticks(p, gamma) for p, _ in groups]
        self.T = max((job.d * self.L for _, job in self.jobs), default=0)

    def ell_max(self, g: int, k: int) -> int:
        return self.bs.ell_max(self.gamma, k, len(self.groups[g][1]))


def _clip(i: np.ndarray, hi: int) -> np.ndarray:
    return np.minimum(i, hi)


def price(ctx: PricingContext, lam: dict[int, float], t0: int, K: int, conv: float,
          max_columns: int = 3) -> tuple[float, list[PricedSchedule]]:
    """Minimum reduced cost of a ``K``-job schedule starting at ``t0`` and up
    to ``max_columns`` schedules with reduced cost below ``-1e-7``.

    ``lam`` maps canonical job index to its dual.  ``conv`` is the sum of
    the duals of the non-job rows the schedule contributes to.
    """
    G = len(ctx.groups)
    if K == 0:
        return -conv, ([PricedSchedule((), frozenset(), 0, -conv)] if -conv < NEG_TOL else [])
    top = max(ctx.T, t0)
    width = top - t0 + 1
    tgrid = np.arange(t0, top + 1)
    base_idx = np.arange(width)

    # S tables per group: list over ell of (cost array over t, chooser)
    S_tabs = []
    lm_group = []
    for g, (p, members) in enumerate(ctx.groups):
        step = ctx.steps[g]
        lm = max((ctx.ell_max(g, k) for k in range(1, K + 1)), default=0)
        lm = min(lm, len(members), K)
        lm_group.append(lm)
        if len(members) == 1:
            pos, job = members[0]
            tardy = (tgrid + step > job.d * ctx.L)
            S_tabs.append([None, np.where(tardy, float(job.w), 0.0) - lam[pos]])
        else:
            S_tabs.append(_group_tables(ctx, g, lam, tgrid, lm))

    F = [None] * (G + 1)
    Fn = np.full((K + 1, width), INF)
    Fn[0] = 0.0
    F[G] = Fn
    for g in range(G - 1, -1, -1):
        step = ctx.steps[g]
        cur = Fn.copy()
        for ell in range(1, lm_group[g] + 1):
            idx = _clip(base_idx + ell * step, width - 1)
            cand = S_tabs[g][ell][None, :] + Fn[:K + 1 - ell][:, idx]
            ks = np.arange(ell, K + 1)
            allowed = np.array([ctx.ell_max(g, k) >= ell for k in ks])
            if not allowed.any():
                continue
            cand = np.where(allowed[:, None], cand, INF)
            cur[ell:] = np.minimum(cur[ell:], cand)
        Fn = cur
        F[g] = Fn

    best = F[0][K][0]
    if not np.isfinite(best):
        return INF, []
    min_rc = float(best) - conv
    if min_rc >= NEG_TOL:
        return min_rc, []

    cols = _extract(ctx, F, S_tabs, lm_group, lam, t0, K, conv, width, max_columns)
    return min_rc, cols


def _group_tables(ctx: PricingContext, g: int, lam, tgrid: np.ndarray, lm: int):
    """``S_g(ell, t)`` for every start tick, recomputed only when the vector of
    normalised deadlines changes."""
    p, members = ctx.groups[g]
    step = ctx.steps[g]
    gj = [GroupJob(job, job.d * ctx.L, lam[pos]) for pos, job in members]
    tabs = [None] + [np.empty(len(tgrid)) for _ in range(lm)]
    cache: dict = {}
    dl = np.array([x.dL for x in gj])
    nd = np.floor_divide(dl[None, :] - tgrid[:, None], step)
    nd = np.clip(nd, 0, len(gj))
    for i in range(len(tgrid)):
        key = nd[i].tobytes()
        ent = cache.get(key)
        if ent is None:
            ent = subroutine_S(gj, lm, int(tgrid[i]), step)
            cache[key] = ent
        for ell in range(1, lm + 1):
            tabs[ell][i] = ent[ell].cost
    return tabs


def _extract(ctx, F, S_tabs, lm_group, lam, t0, K, conv, width, max_columns):
    """Best-first enumeration of the cheapest distinct DP paths."""
    G = len(ctx.groups)
    L = ctx.L
    # heap items: (priority, tie, g, k, ti, acc, path)
    heap = [(float(F[0][K][0]), 0, 0, K, 0, 0.0, ())]
    tie = 1
    done = []
    pops = 0
    while heap and pops < 5000:
        prio, _, g, k, ti, acc, path = heapq.heappop(heap)
        pops += 1
        if prio - conv >= NEG_TOL:
            break
        if len(done) >= max_columns and prio > done[-1][0] + 1e-12:
            break
        if k == 0 or g == G:
            if k == 0:
                done.append((prio, path))
            continue
        step = ctx.steps[g]
        for ell in range(0, min(lm_group[g], k) + 1):
            if ell and ctx.ell_max(g, k) < ell:
                continue
            nti = min(ti + ell * step, width - 1)
            s = 0.0 if ell == 0 else float(S_tabs[g][ell][ti])
            rest = float(F[g + 1][k - ell][nti])
            if not np.isfinite(rest):
                continue
            heapq.heappush(heap, (acc + s + rest, tie, g + 1, k - ell, nti, acc + s,
                                  path + ((g, ell, ti),) if ell else path))
            tie += 1

    cols = []
    for _, path in done:
        seq = []
        for g, ell, ti in path:
            p, members = ctx.groups[g]
            if len(members) == 1:
                seq.append(members[0])
            else:
                gj = [GroupJob(job, job.d * L, lam[pos]) for pos, job in members]
                ent = subroutine_S(gj, ell, t0 + ti, ctx.steps[g])[ell]
                by_id = {job.id: pos for pos, job in members}
                seq.extend((by_id[j.id], j) for j in ent.sequence)
        cols.append(_make_column(ctx, seq, t0, lam, conv))
    cols = [c for c in cols if c.reduced_cost < NEG_TOL]
    cols.sort(key=lambda c: (round(c.reduced_cost, 9), len(c.tardy), sorted(c.jobs)))
    uniq = []
    seen = set()
    for c in cols:
        key = frozenset(c.jobs)
        if key not in seen:
            seen.add(key)
            uniq.append(c)
    return uniq[:max_columns]


def _make_column(ctx: PricingContext, seq, t0: int, lam, conv) -> PricedSchedule:
    t = t0
    cost = 0
    tardy = set()
    for pos, job in seq:
        t += ctx.bs.park.class_ticks(job.p, ctx.gamma)
        if t > job.d * ctx.L:
            tardy.add(pos)
            cost += job.w
    rc = cost - sum(lam[pos] for pos, _ in seq) - conv
    return PricedSchedule(tuple(pos for pos, _ in seq), frozenset(tardy), cost, rc)


def exhaustive_price(ctx: PricingContext, lam: dict[int, float], t0: int, K: int,
                     conv: float) -> float:
    """Minimum reduced cost by enumerating every SPT-consistent ``K``-subset
    that respects ``l_max`` and every order of equal-size jobs (oracle)."""
    best = INF
    jobs = ctx.jobs
    group_of = {}
    for g, (_, members) in enumerate(ctx.groups):
        for pos, _ in members:
            group_of[pos] = g
    for subset in combinations(jobs, K):
        counts: dict[int, int] = {}
        for pos, _ in subset:
            counts[group_of[pos]] = counts.get(group_of[pos], 0) + 1
        # l_max check: position-from-end of each group's first job
        k = K
        ok = True
        for g in sorted(counts):
            if counts[g] > ctx.ell_max(g, k):
                ok = False
                break
            k -= counts[g]
        if not ok:
            continue
        # best order inside equal-p runs
        runs: dict[int, list] = {}
        for item in subset:
            runs.setdefault(group_of[item[0]], []).append(item)
        t = t0
        total = 0.0
        for g in sorted(runs):
            step = ctx.steps[g]
            run_best = INF
            for perm in permutations(runs[g]):
                c = 0.0
                tt = t
                for pos, job in perm:
                    tt += step
                    c += (job.w if tt > job.d * ctx.L else 0) - lam[pos]
                run_best = min(run_best, c)
            total += run_best
            t += step * len(runs[g])
        best = min(best, total - conv)
    return best
