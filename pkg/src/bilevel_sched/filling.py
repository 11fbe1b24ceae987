"""Block-by-block filling moves shared by the exact DP and the search tree.

A filling position is ``(b, A)``: ``b`` is the current block and ``A`` a
bit mask of machines whose location in ``B_b`` is still open.  Block
``B_1`` (``b == 0``) is done once ``Q`` of its locations are used; every
later block must be filled completely.  ``b == bmax`` means all blocks are
filled.
"""
from __future__ import annotations

from itertools import combinations
from typing import Iterator, NamedTuple

from .blocks import BlockStructure


def popcount(x: int) -> int:
    return bin(x).count("1")


def bits(mask: int) -> list[int]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def start(bs: BlockStructure) -> tuple[int, int]:
    return 0, bs.block_masks[0]


def need(bs: BlockStructure, b: int, A: int) -> int:
    """Jobs still required in the current block."""
    if b >= bs.bmax:
        return 0
    if b == 0:
        return popcount(A) - (len(bs.blocks[0]) - bs.Q)
    return popcount(A)


def remaining_slots(bs: BlockStructure, b: int, A: int) -> int:
    if b >= bs.bmax:
        return 0
    return need(bs, b, A) + sum(len(blk) for blk in bs.blocks[b + 1:])


def machine_remaining(bs: BlockStructure, b: int, A: int) -> list[tuple[int, bool]]:
    """Per machine: (locations still to fill, whether the next one is optional).

    A location is optional only inside a partially filled ``B_1``.
    """
    m = bs.park.m
    if b >= bs.bmax:
        return [(0, False)] * m
    after = bs.slots_after[b]
    optional = b == 0 and need(bs, b, A) < popcount(A)
    return [(after[i] + (1 if A >> i & 1 else 0), bool(optional and A >> i & 1)) for i in range(m)]


class Placement(NamedTuple):
    slots: tuple[tuple[int, int], ...]  # (machine, completion tick) in fill order
    C: tuple[int, ...]
    b: int
    A: int


def _advance(bs: BlockStructure, b: int) -> tuple[int, int]:
    b += 1
    return (b, bs.block_masks[b]) if b < bs.bmax else (bs.bmax, 0)


def placements(bs: BlockStructure, C: tuple[int, ...], b: int, A: int, p: int,
               count: int) -> Iterator[Placement]:
    """Every way to put ``count`` jobs of processing time ``p`` into the next
    open locations, choosing machines in the first and last touched block."""
    park = bs.park
    if count == 0:
        yield Placement((), C, b, A)
        return
    if b >= bs.bmax:
        return
    req = need(bs, b, A)
    take = min(count, req)
    for subset in combinations(bits(A), take):
        C2 = list(C)
        slots = []
        for i in subset:
            C2[i] += park.ticks(p, i)
            slots.append((i, C2[i]))
        C2 = tuple(C2)
        A2 = A
        for i in subset:
            A2 &= ~(1 << i)
        if take < req:
            yield Placement(tuple(slots), C2, b, A2)
            continue
        nb, nA = _advance(bs, b)
        for rest in placements(bs, C2, nb, nA, p, count - take):
            yield Placement(tuple(slots) + rest.slots, rest.C, rest.b, rest.A)


def class_key(bs: BlockStructure, C: tuple[int, ...], A: int) -> tuple:
    """State key up to permuting machines inside a speed class."""
    park = bs.park
    return tuple(tuple(sorted((C[i], A >> i & 1) for i in park.machines_of(g))) for g in (0, 1))
