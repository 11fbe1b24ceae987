"""Branch-and-bound for the bilevel selection problem.

The tree fills the blocks ``B_1 .. B_bmax`` chronologically while walking
the jobs in canonical order.  At a node the next undecided job is either
put into an open location of the current block or rejected.  A run of
several equal-size jobs is decided in one step: ``ell`` of them go to the
next ``ell`` locations, placed optimally by the equal-size rule.

Every node is checked against a database of finished nodes (dominance
memorization).  It is then bounded by column generation and, once only the
final block is open, closed by an assignment problem.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .blocks import BlockStructure, block_locations, build_blocks, is_block_respecting
from .core import FAST, SLOW, Instance, Job, Schedule, evaluate
from .exact_dp import equal_runs
from .filling import bits, class_key, need, placements, popcount, remaining_slots, start
from .follower import equal_size_assign, spt_fam
from .master import MachineSlot, NodeContext, cg_lower_bound, filter_pool

BIG = 10**9


# ------------------------------------------------------------------ nodes

class Node(NamedTuple):
    C: tuple[int, ...]
    b: int
    A: int
    g: int  # canonical index of the first undecided job (start of a run)
    cost: int  # partial leader cost
    placed: tuple  # linked list: (previous placed, ((machine, tick, job), ...))

    def residual(self, bs: BlockStructure) -> tuple[int, int]:
        """``(k1, k0)``: locations still open on fast / slow machines.

        Inside a partial ``B_1`` every open location is counted, since the
        class that will host the optional ones is not decided yet.
        """
        if self.b >= bs.bmax:
            return 0, 0
        park = bs.park
        k = [0, 0]
        after = bs.slots_after[self.b]
        for i in range(park.m):
            k[park.speed_class(i)] += after[i] + (self.A >> i & 1)
        return k[FAST], k[SLOW]


def root_node(inst: Instance, bs: BlockStructure) -> Node:
    b, A = start(bs)
    return Node((0,) * inst.park.m, b, A, 0, 0, ())


def placed_items(node: Node) -> list[tuple[int, int, Job]]:
    out = []
    link = node.placed
    while link:
        link, items = link
        out.extend(items)
    return out


def node_schedule(node: Node, m: int) -> Schedule:
    rows = [[] for _ in range(m)]
    for i, t, job in sorted(placed_items(node), key=lambda x: (x[0], x[1])):
        rows[i].append(job.id)
    return Schedule.from_lists(rows)


def node_context(inst: Instance, bs: BlockStructure, node: Node) -> NodeContext:
    park = inst.park
    optional = node.b == 0 and need(bs, node.b, node.A) < popcount(node.A)
    machines = []
    after = bs.slots_after[node.b] if node.b < bs.bmax else (0,) * park.m
    for i in range(park.m):
        inA = bool(node.A >> i & 1)
        machines.append(MachineSlot(park.speed_class(i), node.C[i], after[i] + inA, optional and inA))
    q = need(bs, node.b, node.A) if optional else 0
    return NodeContext(inst, bs, node.g, tuple(machines), q, node.cost)


# -------------------------------------------------------------- branching

class Child(NamedTuple):
    added: int
    ell: int
    node: Node


def branch_equal_size(inst: Instance, bs: BlockStructure, node: Node, run_end: int) -> list[Child]:
    """Children for deciding the run ``[node.g, run_end)`` at once."""
    group = inst.jobs[node.g:run_end]
    L = inst.park.L
    left_after = inst.N - run_end
    cap = min(len(group), remaining_slots(bs, node.b, node.A))
    seen = set()
    out = []
    for ell in range(cap + 1):
        for pl in placements(bs, node.C, node.b, node.A, group[0].p, ell):
            if remaining_slots(bs, pl.b, pl.A) > left_after:
                continue  # not enough jobs left to finish
            res = equal_size_assign(group, [t for _, t in pl.slots], ell, L)
            key = (class_key(bs, pl.C, pl.A), pl.b, res.cost)
            if key in seen:
                continue
            seen.add(key)
            items = tuple((i, t, job) for (i, t), job in zip(pl.slots, res.assignment))
            child = Node(pl.C, pl.b, pl.A, run_end, node.cost + res.cost,
                         (node.placed, items) if items else node.placed)
            out.append(Child(res.cost, ell, child))
    out.sort(key=lambda c: (c.ell == 0, c.added, -c.ell))
    return out


def branch(inst: Instance, bs: BlockStructure, node: Node, run_end: int | None = None) -> list[Child]:
    """Children of ``node``: one per open location of the current block for
    the next job, plus the reject child (last).  Runs of equal jobs are
    delegated to :func:`branch_equal_size`."""
    if run_end is None:
        run_end = node.g + 1
        while run_end < inst.N and inst.jobs[run_end].p == inst.jobs[node.g].p:
            run_end += 1
    return branch_equal_size(inst, bs, node, run_end)


# ----------------------------------------------------------- memorization

@dataclass
class MemoEntry:
    g: int
    struct: tuple  # (b, open locations per class): fixes k1 and k0
    C: tuple[int, ...]  # per (class, open) group, sorted non-increasing, concatenated
    cost: int
    k1: int = 0
    k0: int = 0
    dominated: int = 0


def memo_entry(bs: BlockStructure, node: Node) -> MemoEntry:
    park = bs.park
    parts = []
    open_count = []
    for gamma in (FAST, SLOW):
        ms = park.machines_of(gamma)
        for inA in (1, 0):
            parts.extend(sorted((node.C[i] for i in ms if (node.A >> i & 1) == inA), reverse=True))
        open_count.append(sum(node.A >> i & 1 for i in ms))
    k1, k0 = node.residual(bs)
    return MemoEntry(node.g, (node.b, *open_count), tuple(parts), node.cost, k1, k0)


def dominates(s: MemoEntry, s2: MemoEntry) -> bool:
    """Does ``s`` dominate ``s2``?

    Completion times componentwise no larger (machines of one class are
    interchangeable, hence the sorted comparison), partial cost no larger,
    residual counts no larger and remaining jobs a superset.  Entries are
    only comparable at the same block position, so the residual counts
    coincide whenever the completion vectors are comparable.
    """
    if s.struct != s2.struct:
        return False
    return (s.g <= s2.g and s.cost <= s2.cost and s.k1 <= s2.k1 and s.k0 <= s2.k0
            and all(a <= b for a, b in zip(s.C, s2.C)))


class MemoDB:
    """Finished nodes grouped by the number of remaining candidate jobs."""

    def __init__(self, N: int, capacity: int = 2**20):
        self.N = N
        self.capacity = capacity
        self.size = 0
        self.db: list[dict[tuple, list[MemoEntry]]] = [dict() for _ in range(N + 1)]
        self.purges = 0

    def probe(self, e: MemoEntry) -> bool:
        for k in range(self.N - e.g, self.N + 1):
            for other in self.db[k].get(e.struct, ()):
                if dominates(other, e):
                    other.dominated += 1
                    return True
        return False

    def insert(self, e: MemoEntry) -> None:
        if self.size >= self.capacity:
            self.purge()
        self.db[self.N - e.g].setdefault(e.struct, []).append(e)
        self.size += 1

    def purge(self) -> None:
        """Drop entries that never dominated anything; clear everything if
        that frees less than a tenth of the capacity."""
        self.purges += 1
        before = self.size
        self.size = 0
        for bucket in self.db:
            for key in list(bucket):
                kept = [e for e in bucket[key] if e.dominated > 0]
                if kept:
                    bucket[key] = kept
                    self.size += len(kept)
                else:
                    del bucket[key]
        if before - self.size < self.capacity // 10:
            self.db = [dict() for _ in range(self.N + 1)]
            self.size = 0


def memo_probe_insert(node_entry: MemoEntry, db: MemoDB) -> str:
    """Probe then insert: returns ``"pruned"`` or ``"inserted"``."""
    if db.probe(node_entry):
        return "pruned"
    db.insert(node_entry)
    return "inserted"


# ------------------------------------------------------ leaf completion

def last_block_completion(inst: Instance, bs: BlockStructure, node: Node) -> tuple[int, Node] | None:
    """Fill the final open block optimally by an assignment problem.

    Rows are the candidate jobs, columns the open locations; when fewer
    jobs than open locations are needed (a partial ``B_1``) dummy rows of
    cost ``-BIG`` absorb the surplus locations.
    """
    assert node.b == bs.bmax - 1
    slots = bits(node.A)
    k = need(bs, node.b, node.A)
    cands = inst.jobs[node.g:]
    if len(cands) < k:
        return None
    if k == 0:
        return node.cost, Node(node.C, bs.bmax, 0, inst.N, node.cost, node.placed)
    park = inst.park
    L = park.L
    cost = np.zeros((len(cands) + len(slots) - k, len(slots)))
    for r, job in enumerate(cands):
        for c, i in enumerate(slots):
            cost[r, c] = job.w if node.C[i] + park.ticks(job.p, i) > job.d * L else 0
    cost[len(cands):, :] = -BIG
    rows, cols = linear_sum_assignment(cost)
    items = []
    added = 0
    C = list(node.C)
    for r, c in zip(rows, cols):
        if r >= len(cands):
            continue
        i = slots[c]
        job = cands[r]
        C[i] += park.ticks(job.p, i)
        items.append((i, C[i], job))
        added += int(cost[r, c])
    leaf = Node(tuple(C), bs.bmax, 0, inst.N, node.cost + added, (node.placed, tuple(items)))
    return leaf.cost, leaf


# --------------------------------------------------------- upper bounds

def follower_schedule(selection: Sequence[Job], inst: Instance, bs: BlockStructure) -> Schedule:
    """A total-completion-optimal schedule of ``selection`` with a good leader
    cost: blocks are assigned by processing-time rank, and inside each block
    jobs go to locations by an assignment problem."""
    sched = spt_fam(selection, inst.park)
    return _reassign_blocks(sched, inst, bs)


def _reassign_blocks(sched: Schedule, inst: Instance, bs: BlockStructure) -> Schedule:
    park = inst.park
    L = park.L
    seqs = [list(s) for s in sched.sequences]
    locs = block_locations(sched, inst, bs)
    C = [0] * park.m
    for b in range(bs.bmax):
        cells = sorted(locs[b])
        if not cells:
            continue
        ids = [seqs[i][k] for i, k in cells]
        jobs = [inst.job(j) for j in ids]
        cost = np.array([[job.w if C[i] + park.ticks(job.p, i) > job.d * L else 0
                          for (i, _) in cells] for job in jobs], dtype=float)
        r, c = linear_sum_assignment(cost)
        for ri, ci in zip(r, c):
            i, k = cells[ci]
            seqs[i][k] = ids[ri]
        for i, k in cells:
            C[i] += park.ticks(inst.job(seqs[i][k]).p, i)
    return Schedule.from_lists(seqs)


def improve_by_blocks(sched: Schedule, inst: Instance, bs: BlockStructure | None = None) -> Schedule:
    """Block-wise local search.

    For each block the jobs in it are freed; candidates are those jobs plus
    unselected jobs whose processing time lies between the largest one in
    the previous block and the smallest one in the next block (unbounded
    where a neighbour is missing).  An assignment problem on the block's
    locations with the current machine start times picks the new content;
    the move is kept only if the whole schedule does not get worse.  A
    final pass re-optimises every run of equal-size jobs.
    """
    if bs is None:
        bs = build_blocks(inst.n, inst.park)
    park = inst.park
    L = park.L
    best = sched
    best_cost = evaluate(sched, inst).leader_cost
    for b in range(bs.bmax):
        seqs = [list(s) for s in best.sequences]
        locs = block_locations(best, inst, bs)
        cells = sorted(locs[b])
        if not cells:
            continue
        in_block = {seqs[i][k] for i, k in cells}
        selected = set(best.job_ids)
        lo = max((inst.job(seqs[i][k]).p for i, k in locs[b - 1]), default=-math.inf) if b > 0 else -math.inf
        hi = (min((inst.job(seqs[i][k]).p for i, k in locs[b + 1]), default=math.inf)
              if b + 1 < bs.bmax else math.inf)
        cands = [inst.job(j) for j in sorted(in_block)]
        cands += [j for j in inst.jobs if j.id not in selected and lo <= j.p <= hi]
        starts = []
        for i, k in cells:
            starts.append(sum(park.ticks(inst.job(x).p, i) for x in seqs[i][:k]))
        cost = np.array([[job.w if s + park.ticks(job.p, i) > job.d * L else 0
                          for (i, _), s in zip(cells, starts)] for job in cands], dtype=float)
        r, c = linear_sum_assignment(cost)
        for ri, ci in zip(r, c):
            i, k = cells[ci]
            seqs[i][k] = cands[ri].id
        trial = Schedule.from_lists(_spt_fix(seqs, inst))
        try:
            ev = evaluate(trial, inst)
        except ValueError:
            continue
        if ev.leader_cost <= best_cost and is_block_respecting(trial, inst, bs):
            best, best_cost = trial, ev.leader_cost
    best = _equal_size_pass(best, inst)
    return best


def _spt_fix(seqs, inst):
    """Keep each machine in SPT order (ties keep their current order)."""
    return [sorted(s, key=lambda j: inst.job(j).p) for s in seqs]


def _equal_size_pass(sched: Schedule, inst: Instance) -> Schedule:
    """Re-choose the members of every equal-size run for the slots it uses."""
    park = inst.park
    L = park.L
    seqs = [list(s) for s in sched.sequences]
    for s, e in equal_runs(inst):
        group = inst.jobs[s:e]
        ids = {j.id for j in group}
        cells = []
        for i, seq in enumerate(seqs):
            t = 0
            for k, jid in enumerate(seq):
                t += park.ticks(inst.job(jid).p, i)
                if jid in ids:
                    cells.append((i, k, t))
        if not cells or len(group) == 1:
            continue
        res = equal_size_assign(group, [t for _, _, t in cells], len(cells), L)
        for (i, k, _), job in zip(cells, res.assignment):
            seqs[i][k] = job.id
    return Schedule.from_lists(seqs)


def greedy_selections(inst: Instance) -> list[list[Job]]:
    """Seed selections from simple leader rules."""
    jobs = list(inst.jobs)
    n = inst.n
    rules = [
        lambda j: (-j.d, j.w, j.p),  # latest due date first
        lambda j: (j.d - j.p, j.w),  # (inverse) slack
        lambda j: (-(j.d - j.p), j.p),  # largest slack
        lambda j: (j.w, -j.d),  # cheapest to lose
        lambda j: (j.p, -j.d),  # shortest
        lambda j: (-j.d / max(j.p, 1), j.w),  # EDD weighted by length
    ]
    out = []
    for key in rules:
        out.append(sorted(jobs, key=key)[:n])
    return out


def initial_upper_bound(inst: Instance, bs: BlockStructure | None = None, *,
                        mip_cmd: str | None = None, mip_time_s: float = 20.0,
                        use_highs: bool = False) -> tuple[int, Schedule]:
    """A feasible block-respecting solution and its leader cost."""
    if bs is None:
        bs = build_blocks(inst.n, inst.park)
    best = None
    if mip_cmd or use_highs:
        from .mip import build_mip, run_external, solve_highs
        model = build_mip(inst, bs)
        sol = (run_external(model, mip_cmd, mip_time_s) if mip_cmd
               else solve_highs(model, mip_time_s))
        if sol is not None:
            best = (sol.objective, sol.schedule)
    for sel in greedy_selections(inst):
        sched = improve_by_blocks(follower_schedule(sel, inst, bs), inst, bs)
        val = evaluate(sched, inst).leader_cost
        if best is None or val < best[0]:
            best = (val, sched)
    return best


# --------------------------------------------------------------- search

@dataclass
class BnbConfig:
    time_limit_s: float = 300.0
    memo: bool = True
    db_capacity: int = 2**20
    epsilon_pool: float = 0.3
    use_cg: bool = True
    cg_max_iter: int = 500
    external_mip_cmd: str | None = None
    mip_time_s: float = 20.0
    use_highs_ub: bool = False


@dataclass
class BnbStats:
    nodes: int = 0
    lb_root: float = 0
    ub_init: int = 0
    time_s: float = 0.0
    memo_pruned: int = 0
    bound_pruned: int = 0
    cg_iterations: int = 0
    leaves: int = 0


@dataclass
class BnbResult:
    value: int
    selection: tuple[int, ...]
    schedule: Schedule
    status: str  # "optimal" | "timeout"
    lower_bound: float
    stats: BnbStats = field(default_factory=BnbStats)

    def csv_row(self, name: str) -> str:
        s = self.stats
        return (f"{name},{self.value},{self.status},{s.nodes},{s.lb_root},{s.ub_init},"
                f"{int(round(s.time_s * 1000))}")


CSV_HEADER = "instance,value,status,nodes,lb_root,ub_init,time_ms"


class _Timeout(Exception):
    pass


def solve(inst: Instance, config: BnbConfig | None = None) -> BnbResult:
    """Depth-first branch-and-bound with memorization and CG bounds."""
    cfg = config or BnbConfig()
    t_start = time.perf_counter()
    bs = build_blocks(inst.n, inst.park)
    stats = BnbStats()
    ub, ub_sched = initial_upper_bound(inst, bs, mip_cmd=cfg.external_mip_cmd,
                                       mip_time_s=cfg.mip_time_s, use_highs=cfg.use_highs_ub)
    stats.ub_init = ub
    best = {"value": ub, "schedule": ub_sched}
    run_end = {s: e for s, e in equal_runs(inst)}
    db = MemoDB(inst.N, cfg.db_capacity) if cfg.memo else None
    deadline = t_start + cfg.time_limit_s

    def visit(node: Node, pool: list, depth: int) -> None:
        if time.perf_counter() > deadline:
            raise _Timeout
        stats.nodes += 1
        if node.cost >= best["value"]:
            stats.bound_pruned += 1
            return
        if node.b >= bs.bmax:
            stats.leaves += 1
            best["value"] = node.cost
            best["schedule"] = node_schedule(node, inst.park.m)
            return
        entry = None
        if db is not None:
            entry = memo_entry(bs, node)
            if db.probe(entry):
                stats.memo_pruned += 1
                return
        if node.b == bs.bmax - 1:
            res = last_block_completion(inst, bs, node)
            stats.leaves += 1
            if res is not None and res[0] < best["value"]:
                best["value"] = res[0]
                best["schedule"] = node_schedule(res[1], inst.park.m)
            if db is not None:
                db.insert(entry)
            return
        child_pool = pool
        if cfg.use_cg:
            ctx = node_context(inst, bs, node)
            kept, active = filter_pool(pool, ctx, cfg.epsilon_pool)
            cg = cg_lower_bound(ctx, active, best["value"], cfg.cg_max_iter)
            stats.cg_iterations += cg.iterations
            if depth == 0:
                stats.lb_root = cg.lb
            child_pool = kept + cg.pool[len(active):]
            if cg.lb >= best["value"]:
                stats.bound_pruned += 1
                if db is not None:
                    db.insert(entry)
                return
        elif depth == 0:
            stats.lb_root = 0
        for child in branch(inst, bs, node, run_end[node.g]):
            visit(child.node, child_pool, depth + 1)
        if db is not None:
            db.insert(entry)

    status = "optimal"
    try:
        visit(root_node(inst, bs), [], 0)
    except _Timeout:
        status = "timeout"
    stats.time_s = time.perf_counter() - t_start
    sched = best["schedule"]
    value = best["value"]
    lower = value if status == "optimal" else min(stats.lb_root, value)
    return BnbResult(value, tuple(sorted(sched.job_ids)), sched, status, lower, stats)
