"""Set-covering master problem and its column-generation lower bound.

A search node fixes a prefix of the schedule: every machine ``i`` has a
completion tick ``C_i`` and ``r_i`` locations still to fill.  Machines
whose next open location lies in a partially filled ``B_1`` may stop one
short (``r_i - 1`` jobs, flag ``min``) instead of filling all (flag
``max``).  Exactly ``q_need`` of these optional machines must take ``max``.

Machines with equal ``(class, C_i, r_i, optional)`` form a *machine type*
and share columns.  A column is a single-machine schedule of undecided
jobs in SPT order together with its type and flag.

Rows:

* ``job j``: ``sum a_js x_s <= 1`` for every undecided job;
* split form (at most one optional type): one equality per ``(type, flag)``
  with the number of machines that must use that flag;
* spanning form (optional machines in several types): one equality per
  type, the ``Q`` row ``sum_{max, optional} x_s = q_need`` and the cut
  ``sum_{slow, max, optional} x_s >= max(q_need - #optional fast, 0)``.

Dual signs follow :mod:`bilevel_sched.simplex`: ``lambda_j <= 0`` on job
rows, equality rows free, ``>=`` cut ``>= 0``.

The bound relaxes every row except the convexity rows (``(type, flag)``
rows in split form, type rows in spanning form) and so is valid for any
dual vector with correct signs:

    LB(k) = y . b + sum_groups rhs_group * min_{s in group} r_s
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .blocks import BlockStructure
from .core import FAST, SLOW, Instance
from .pricing import PricingContext, price
from .simplex import EQ, GE, LE, BoundedSimplex

MAX, MIN = "max", "min"


class MachineSlot(NamedTuple):
    gamma: int
    C: int  # completion tick of the fixed prefix
    r: int  # locations still to fill (counting an optional B_1 location)
    optional: bool  # next location is an optional B_1 location


@dataclass(frozen=True)
class NodeContext:
    inst: Instance
    bs: BlockStructure
    g0: int  # canonical index of the first undecided job
    machines: tuple[MachineSlot, ...]
    q_need: int  # optional machines that must fill their optional location
    partial_cost: int = 0

    @property
    def undecided(self) -> range:
        return range(self.g0, self.inst.N)

    def types(self) -> dict[MachineSlot, int]:
        out: dict[MachineSlot, int] = {}
        for ms in self.machines:
            if ms.r > 0 or ms.optional:
                out[ms] = out.get(ms, 0) + 1
        return dict(sorted(out.items()))


@dataclass(frozen=True)
class Column:
    """A priced machine schedule attached to a node's machine type."""

    jobs: tuple[int, ...]  # canonical job indices in processing order
    gamma: int
    flag: str
    tardy: frozenset
    cost: int
    mtype: MachineSlot | None = None

    @property
    def key(self) -> tuple[int, tuple[int, ...]]:
        """Pool identity, independent of the node."""
        return self.gamma, self.jobs


@dataclass
class DualPrices:
    lam: dict[int, float]  # job rows
    rows: dict[tuple, float]  # every non-job row

    def conv(self, master: "Master", mtype: MachineSlot, flag: str) -> float:
        return sum(self.rows[k] for k in master.config_rows(mtype, flag))


def column_for(inst: Instance, mtype: MachineSlot, flag: str, jobs: Sequence[int]) -> Column:
    """Cost a job sequence on a machine of ``mtype`` starting at its prefix."""
    park = inst.park
    L = park.L
    t = mtype.C
    tardy = set()
    cost = 0
    for pos in jobs:
        job = inst.jobs[pos]
        t += park.class_ticks(job.p, mtype.gamma)
        if t > job.d * L:
            tardy.add(pos)
            cost += job.w
    return Column(tuple(jobs), mtype.gamma, flag, frozenset(tardy), cost, mtype)


class Master:
    """Restricted master for one node (:func:`build_master`)."""

    def __init__(self, ctx: NodeContext):
        self.ctx = ctx
        inst = ctx.inst
        self.types = ctx.types()
        opt_types = [t for t in self.types if t.optional]
        self.spanning = len(opt_types) > 1
        rows: list[tuple[tuple, str, float]] = []
        for j in ctx.undecided:
            rows.append((("job", j), LE, 1.0))
        self.conv_groups: list[tuple[tuple, float, list[tuple[MachineSlot, str]]]] = []
        if not self.spanning:
            for t, cnt in self.types.items():
                if t.optional:
                    r_max, r_min = ctx.q_need, cnt - ctx.q_need
                else:
                    r_max, r_min = cnt, 0
                rows.append((("conv", t, MAX), EQ, float(r_max)))
                rows.append((("conv", t, MIN), EQ, float(r_min)))
                self.conv_groups.append((("conv", t, MAX), r_max, [(t, MAX)]))
                self.conv_groups.append((("conv", t, MIN), r_min, [(t, MIN)]))
        else:
            for t, cnt in self.types.items():
                rows.append((("type", t), EQ, float(cnt)))
                flags = [(t, MAX), (t, MIN)] if t.optional else [(t, MAX)]
                self.conv_groups.append((("type", t), cnt, flags))
            rows.append((("Q",), EQ, float(ctx.q_need)))
            fast_opt = sum(c for t, c in self.types.items() if t.optional and t.gamma == FAST)
            self.cut_rhs = max(ctx.q_need - fast_opt, 0)
            rows.append((("cut",), GE, float(self.cut_rhs)))
        self.rows = rows
        self.row_index = {key: i for i, (key, _, _) in enumerate(rows)}
        self.rhs = np.array([r for _, _, r in rows])
        self.lp = BoundedSimplex([s for _, s, _ in rows], self.rhs)
        self.columns: list[Column | None] = []
        self.keys: set = set()
        big = 1 + sum(j.w for j in inst.jobs)
        self.artificial_cost = big
        for i, (key, sense, rhs) in enumerate(rows):
            if key[0] == "job":
                continue
            col = np.zeros(len(rows))
            col[i] = 1.0
            self.lp.add_columns([big], col[:, None], [np.inf])
            self.columns.append(None)

    # ----------------------------------------------------------- configs
    def configs(self) -> list[tuple[MachineSlot, str, int]]:
        """``(type, flag, job count)`` for every configuration with demand."""
        out = []
        for key, rhs, members in self.conv_groups:
            if rhs <= 0:
                continue
            for t, flag in members:
                K = t.r if flag == MAX else t.r - 1
                if K >= 0:
                    out.append((t, flag, K))
        return out

    def config_rows(self, t: MachineSlot, flag: str) -> list[tuple]:
        if not self.spanning:
            return [("conv", t, flag)]
        keys = [("type", t)]
        if t.optional and flag == MAX:
            keys.append(("Q",))
            if t.gamma == SLOW:
                keys.append(("cut",))
        return keys

    def add_column(self, col: Column) -> bool:
        ident = (col.mtype, col.flag, col.jobs)
        if ident in self.keys:
            return False
        self.keys.add(ident)
        a = np.zeros(len(self.rows))
        for j in col.jobs:
            a[self.row_index["job", j]] = 1.0
        for k in self.config_rows(col.mtype, col.flag):
            a[self.row_index[k]] = 1.0
        ub = 1.0 if col.jobs else float(self.types[col.mtype])
        self.lp.add_columns([float(col.cost)], a[:, None], [ub])
        self.columns.append(col)
        return True

    def duals(self, y: np.ndarray) -> DualPrices:
        lam = {}
        rows = {}
        for i, (key, _, _) in enumerate(self.rows):
            if key[0] == "job":
                lam[key[1]] = float(y[i])
            else:
                rows[key] = float(y[i])
        return DualPrices(lam, rows)


def build_master(ctx: NodeContext, pool: Sequence[tuple[int, tuple[int, ...]]] = ()) -> Master:
    """Restricted master with artificial columns plus every pool column that
    fits one of the node's configurations."""
    m = Master(ctx)
    by_gamma_len: dict[tuple[int, int], list] = {}
    for t, flag, K in m.configs():
        by_gamma_len.setdefault((t.gamma, K), []).append((t, flag))
    for gamma, jobs in pool:
        for t, flag in by_gamma_len.get((gamma, len(jobs)), ()):
            m.add_column(column_for(ctx.inst, t, flag, jobs))
    return m


class CGResult(NamedTuple):
    lb: float  # integer-valued bound including partial cost (inf if infeasible)
    lb_raw: float  # best LB(k) before rounding, without partial cost
    z_rmp: float
    iterations: int
    pool: list
    converged: bool
    capped: bool


def lagrangian_bound(master: Master, y: np.ndarray, min_rc: dict) -> float:
    """``y . b + sum rhs * min reduced cost`` over the convexity groups."""
    val = float(y @ master.rhs)
    for key, rhs, members in master.conv_groups:
        if rhs <= 0:
            continue
        best = min(min_rc[t, flag] for t, flag in members)
        if not math.isfinite(best):
            return math.inf
        val += rhs * best
    return val


def cg_lower_bound(ctx: NodeContext, pool: Sequence = (), incumbent: float = math.inf,
                   max_iter: int = 500, columns_per_config: int = 3) -> CGResult:
    """Column generation at a node.

    Stops when pricing finds no negative column, when the rounded bound
    reaches ``ceil(z_RMP)`` (the LP cannot improve it further), when the
    bound reaches ``incumbent`` or after ``max_iter`` iterations.
    """
    master = build_master(ctx, pool)
    configs = master.configs()
    contexts = {}
    for gamma in (SLOW, FAST):
        contexts[gamma] = PricingContext(ctx.bs, gamma,
                                         [(j, ctx.inst.jobs[j]) for j in ctx.undecided])
    best_raw = -math.inf
    lb_int = 0
    z = math.inf
    new_pool = list(pool)
    pool_keys = set(new_pool)
    converged = capped = False
    it = 0
    while True:
        if it >= max_iter:
            capped = True
            break
        it += 1
        res = master.lp.solve()
        if res.status != "optimal":
            raise RuntimeError(f"master LP returned {res.status}")
        z = res.objective
        duals = master.duals(res.duals)
        min_rc = {}
        added = 0
        for t, flag, K in configs:
            conv = duals.conv(master, t, flag)
            rc, cols = price(contexts[t.gamma], duals.lam, t.C, K, conv, columns_per_config)
            min_rc[t, flag] = rc
            for pc in cols:
                col = Column(pc.jobs, t.gamma, flag, pc.tardy, pc.cost, t)
                if master.add_column(col):
                    added += 1
                if col.key not in pool_keys:
                    pool_keys.add(col.key)
                    new_pool.append(col.key)
        for key, rhs, members in master.conv_groups:
            for t, flag in members:
                min_rc.setdefault((t, flag), math.inf)
        lb_k = lagrangian_bound(master, res.duals, min_rc)
        if lb_k > best_raw:
            best_raw = lb_k
            lb_int = max(lb_int, math.ceil(lb_k - 1e-6))
        if not math.isfinite(best_raw):
            converged = True
            break
        if added == 0:
            converged = True
            break
        if lb_int >= math.ceil(z - 1e-6):
            converged = True
            break
        if lb_int + ctx.partial_cost >= incumbent:
            break
    lb = math.inf if best_raw == math.inf else max(lb_int, 0) + ctx.partial_cost
    return CGResult(lb, best_raw, z, it, new_pool, converged, capped)


def filter_pool(pool: Sequence[tuple[int, tuple[int, ...]]], ctx: NodeContext,
                eps: float = 0.3) -> tuple[list, list]:
    """Split an inherited pool into ``(kept pool, columns usable at ctx)``.

    A column is marked when it contains a decided job or when no machine
    type of the node takes its class and length.  If more than ``eps`` of
    the pool is marked the marked columns are dropped; otherwise they stay
    in the pool but are not offered to this node's master.
    """
    if not pool:
        return [], []
    lengths = set()
    for ms in ctx.machines:
        if ms.r > 0:
            lengths.add((ms.gamma, ms.r))
        if ms.optional:
            lengths.add((ms.gamma, ms.r - 1))
    marked = [any(j < ctx.g0 for j in jobs) or (gamma, len(jobs)) not in lengths
              for gamma, jobs in pool]
    active = [c for c, mk in zip(pool, marked) if not mk]
    if sum(marked) > eps * len(pool):
        return active, active
    return list(pool), active


def root_context(inst: Instance, bs: BlockStructure) -> NodeContext:
    """Node context before any decision."""
    park = inst.park
    counts = [0] * park.m
    for blk in bs.blocks:
        for loc in blk:
            counts[loc.machine] += 1
    partial = bs.Q < len(bs.blocks[0])
    first = bs.block_machines[0]
    machines = tuple(MachineSlot(park.speed_class(i), 0, counts[i], partial and i in first)
                     for i in range(park.m))
    return NodeContext(inst, bs, 0, machines, bs.Q if partial else 0, 0)
