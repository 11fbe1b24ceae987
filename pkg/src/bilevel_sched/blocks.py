"""Positional-weight block structure of total-completion-time optimal
schedules on two-speed uniform machines.

Position ``ell`` (counted from the end) on machine ``i`` carries the weight
``ell / V_i``; in ticks that is ``ell * L / V_i``.  Sorting the weights and
pairing the smallest with the longest job gives every optimal schedule, so
optimal schedules are exactly the fillings of equal-weight location classes
(*blocks*) in which longer jobs sit in lower-weight blocks.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from functools import cached_property

from .core import FAST, SLOW, Instance, MachinePark, Schedule


@dataclass(frozen=True)
class Location:
    machine: int
    k: int  # chronological position on a machine that uses all its locations
    ell: int  # position from the end
    weight_scaled: int


@dataclass(frozen=True)
class BlockStructure:
    """Blocks ``B_1 .. B_bmax`` in chronological order (``blocks[0]`` is B_1)."""

    n: int
    park: MachinePark
    blocks: tuple[tuple[Location, ...], ...]
    Q: int
    eta_plus: tuple[int, int]  # indexed by speed class (SLOW=0, FAST=1)
    eta_minus: tuple[int, int]
    boundary_span: frozenset

    @property
    def bmax(self) -> int:
        return len(self.blocks)

    def weight(self, b: int) -> int:
        return self.blocks[b][0].weight_scaled

    @cached_property
    def block_machines(self) -> tuple[frozenset, ...]:
        return tuple(frozenset(loc.machine for loc in blk) for blk in self.blocks)

    @cached_property
    def block_masks(self) -> tuple[int, ...]:
        return tuple(sum(1 << i for i in ms) for ms in self.block_machines)

    @cached_property
    def slots_after(self) -> tuple[tuple[int, ...], ...]:
        """``slots_after[b][i]``: locations machine ``i`` owns in blocks after ``b``."""
        m = self.park.m
        out = []
        for b in range(self.bmax):
            row = [0] * m
            for later in self.block_machines[b + 1:]:
                for i in later:
                    row[i] += 1
            out.append(tuple(row))
        return tuple(out)

    def block_of(self, gamma: int, ell: int) -> int:
        """Index of the block holding position ``ell`` of a class-``gamma`` machine."""
        return self._ell_block[gamma][ell]

    @cached_property
    def _ell_block(self):
        table = {SLOW: {}, FAST: {}}
        for b, blk in enumerate(self.blocks):
            for loc in blk:
                table[self.park.speed_class(loc.machine)][loc.ell] = b
        return table

    def class_counts(self) -> dict[tuple[int, str], int]:
        """Machine counts ``m_{gamma+}``/``m_{gamma-}`` for a single-class boundary.

        A class not touched by B_1 has all its machines flagged ``max``.
        """
        if len(self.boundary_span) != 1:
            raise ValueError("B_1 spans both speed classes; counts are not fixed")
        (gb,) = self.boundary_span
        out = {}
        for gamma in (SLOW, FAST):
            mg = self.park.class_count(gamma)
            if gamma == gb:
                out[gamma, "+"], out[gamma, "-"] = self.Q, mg - self.Q
            else:
                out[gamma, "+"], out[gamma, "-"] = mg, 0
        return out

    def ell_max(self, gamma: int, k: int, group_size: int | None = None) -> int:
        """Most jobs of one equal-size group that one class-``gamma`` machine
        can hold when the group's first job on it is its ``k``-th from the end.

        Walks the blocks after the one holding that position, consuming the
        group's remaining jobs block by block.  ``group_size=None`` means an
        unbounded group.
        """
        if k < 1 or k > self.eta_plus[gamma]:
            return 0
        if group_size is None:
            return k
        h = self.block_of(gamma, k)
        machines = set(self.park.machines_of(gamma))
        remaining = group_size - 1
        count = 1
        for b in range(h + 1, self.bmax):
            if remaining <= 0:
                break
            if machines & self.block_machines[b]:
                count += 1
            remaining -= len(self.blocks[b])
        return min(count, k, group_size)

    def dump(self) -> str:
        lines = []
        for b, blk in enumerate(self.blocks, start=1):
            locs = " ".join(f"({loc.machine},{loc.k})" for loc in blk)
            lines.append(f"{b} {blk[0].weight_scaled} [{locs}]")
        return "\n".join(lines)


def build_blocks(n: int, park: MachinePark) -> BlockStructure:
    """Block structure for selecting ``n`` jobs on ``park``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    L = park.L
    classes = defaultdict(list)
    for i in range(park.m):
        step = L // park.speed(i)
        for ell in range(1, n + 1):
            classes[ell * step].append((i, ell))
    taken = []
    covered = 0
    for weight in sorted(classes):
        members = classes[weight]
        taken.append((weight, members))
        if covered + len(members) >= n:
            Q = n - covered
            break
        covered += len(members)

    eta_plus = [0, 0]
    for weight, members in taken:
        for i, ell in members:
            gamma = park.speed_class(i)
            eta_plus[gamma] = max(eta_plus[gamma], ell)

    blocks = []
    for weight, members in reversed(taken):
        locs = []
        for i, ell in sorted(members):
            k = eta_plus[park.speed_class(i)] + 1 - ell
            locs.append(Location(i, k, ell, weight))
        blocks.append(tuple(locs))

    span = frozenset(park.speed_class(loc.machine) for loc in blocks[0])
    eta_minus = [eta_plus[g] - 1 if g in span else eta_plus[g] for g in (SLOW, FAST)]
    return BlockStructure(n, park, tuple(blocks), Q, tuple(eta_plus), tuple(eta_minus), span)


def ell_max_table(bs: BlockStructure, group_size: int | None = None) -> dict[int, list[int]]:
    """``{gamma: [ell_max(gamma, 1), ..., ell_max(gamma, eta_plus)]}``."""
    return {g: [bs.ell_max(g, k, group_size) for k in range(1, bs.eta_plus[g] + 1)]
            for g in (SLOW, FAST)}


def assignment_cost_identity(bs: BlockStructure, p_by_location: dict[tuple[int, int], int]) -> int:
    """``L * sum(C_j)`` computed as the weight/processing-time inner product.

    ``p_by_location`` maps ``(machine, ell)`` to the processing time placed
    there.
    """
    return sum(bs.park.L // bs.park.speed(i) * ell * p for (i, ell), p in p_by_location.items())


def block_locations(sched: Schedule, inst: Instance, bs: BlockStructure) -> list[list[tuple[int, int]]]:
    """``(machine, 0-based chronological index)`` pairs of each block used by
    a schedule whose machine loads fit ``bs``."""
    park = inst.park
    out = [[] for _ in range(bs.bmax)]
    for i, seq in enumerate(sched.sequences):
        eta = len(seq)
        for k in range(1, eta + 1):
            out[bs.block_of(park.speed_class(i), eta + 1 - k)].append((i, k - 1))
    return out


def is_block_respecting(sched: Schedule, inst: Instance, bs: BlockStructure) -> bool:
    """True iff the schedule fills ``bs`` (all blocks after ``B_1`` full,
    ``Q`` jobs in ``B_1``) with processing times non-decreasing from block
    to block, i.e. iff it minimises total completion time."""
    park = inst.park
    if len(sched) != bs.n:
        return False
    for i, seq in enumerate(sched.sequences):
        if len(seq) > bs.eta_plus[park.speed_class(i)]:
            return False
    try:
        locs = block_locations(sched, inst, bs)
    except KeyError:
        return False
    for b, cells in enumerate(locs):
        want = bs.Q if b == 0 else len(bs.blocks[b])
        if len(cells) != want:
            return False
    prev_max = -1
    for cells in locs:
        ps = [inst.job(sched.sequences[i][k]).p for i, k in cells]
        if not ps:
            continue
        if min(ps) < prev_max:
            return False
        prev_max = max(ps)
    return True
