"""Location-based MIP of the bilevel problem, solver file formats, and
solution decoding.

The model assigns selected jobs to the locations of the block structure:

* ``x_i_j_k``: job ``j`` sits at location ``(i, k)``
  (machine ``i`` counted from 1, chronological position ``k``);
* ``U_i_j_k``: job ``j`` sits there and is penalised;
* ``C_i_k``: completion time of location ``(i, k)``, in ticks.

All time data are multiplied by ``L`` so every coefficient is an integer.
The big-M of the due-date rows is ``H(i, k) = k * max p / V_i``, also scaled.

Besides the model builder this module writes and reads the LP-text and
fixed-column MPS formats, solves the model in-process with the HiGHS
solver bundled in SciPy, and runs an arbitrary external solver through a
command template ``"<cmd> {model} {timelimit} {solout}"``.  Every decoded
solution is re-checked with :func:`bilevel_sched.core.evaluate`.
"""
from __future__ import annotations

import logging
import math
import os
import re
import shlex
import subprocess
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp
from scipy.sparse import coo_matrix

from .blocks import BlockStructure, build_blocks, is_block_respecting
from .core import Instance, Schedule, ScheduleError, evaluate

log = logging.getLogger(__name__)

BINARY, CONTINUOUS, INTEGER = "B", "C", "I"
LE, EQ, GE = "L", "E", "G"
_SENSE_SYMBOL = {LE: "<=", EQ: "=", GE: ">="}
_SYMBOL_SENSE = {"<=": LE, "=<": LE, "<": LE, "=": EQ, ">=": GE, "=>": GE, ">": GE}


class MipFormatError(ValueError):
    """Raised when an LP or MPS text cannot be parsed."""


@dataclass
class MipModel:
    """A linear model ``min c x`` with named columns and rows.

    Rows are sparse ``{column index: coefficient}`` maps.  ``inst`` and
    ``bs`` are attached when the model was built from an instance; they are
    needed to decode solutions into schedules.
    """

    name: str = "bilevel"
    var_names: list[str] = field(default_factory=list)
    var_types: list[str] = field(default_factory=list)
    lb: list[float] = field(default_factory=list)
    ub: list[float] = field(default_factory=list)
    obj: list[float] = field(default_factory=list)
    row_names: list[str] = field(default_factory=list)
    row_senses: list[str] = field(default_factory=list)
    rows: list[dict[int, float]] = field(default_factory=list)
    rhs: list[float] = field(default_factory=list)
    inst: Instance | None = None
    bs: BlockStructure | None = None
    _index: dict[str, int] = field(default_factory=dict, repr=False)

    # ---------------------------------------------------------- building
    def add_var(self, name: str, vtype: str, lb: float = 0.0, ub: float = math.inf,
                obj: float = 0.0) -> int:
        if name in self._index:
            raise ValueError(f"duplicate variable {name}")
        self._index[name] = len(self.var_names)
        self.var_names.append(name)
        self.var_types.append(vtype)
        self.lb.append(lb)
        self.ub.append(1.0 if vtype == BINARY else ub)
        self.obj.append(obj)
        return self._index[name]

    def add_row(self, name: str, coefs: dict[int, float], sense: str, rhs: float) -> None:
        self.row_names.append(name)
        self.row_senses.append(sense)
        self.rows.append({j: c for j, c in coefs.items() if c != 0})
        self.rhs.append(rhs)

    def var(self, name: str) -> int:
        return self._index[name]

    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    @property
    def num_rows(self) -> int:
        return len(self.rows)

    def objective_value(self, values) -> float:
        return float(np.dot(self.obj, values))

    def violation(self, values) -> float:
        """Largest bound, row or integrality violation of a point."""
        v = np.asarray(values, dtype=float)
        worst = float(np.max(np.maximum(np.asarray(self.lb) - v, v - np.asarray(self.ub)), initial=0.0))
        for row, sense, b in zip(self.rows, self.row_senses, self.rhs):
            lhs = sum(c * v[j] for j, c in row.items())
            gap = {LE: lhs - b, GE: b - lhs, EQ: abs(lhs - b)}[sense]
            worst = max(worst, gap)
        for j, t in enumerate(self.var_types):
            if t != CONTINUOUS:
                worst = max(worst, abs(v[j] - round(v[j])))
        return worst

    def same_as(self, other: "MipModel", tol: float = 1e-9) -> bool:
        """Structural equality (names, types, bounds, coefficients)."""
        if (self.var_names != other.var_names or self.var_types != other.var_types
                or self.row_names != other.row_names or self.row_senses != other.row_senses):
            return False
        vecs = [(self.lb, other.lb), (self.ub, other.ub), (self.obj, other.obj), (self.rhs, other.rhs)]
        for a, b in vecs:
            if not np.allclose(a, b, rtol=0, atol=tol):
                return False
        for r1, r2 in zip(self.rows, other.rows):
            if r1.keys() != r2.keys() or any(abs(r1[j] - r2[j]) > tol for j in r1):
                return False
        return True


# --------------------------------------------------------------- builder

def x_name(i: int, j: int, k: int) -> str:
    return f"x_{i + 1}_{j}_{k}"


def u_name(i: int, j: int, k: int) -> str:
    return f"U_{i + 1}_{j}_{k}"


def c_name(i: int, k: int) -> str:
    return f"C_{i + 1}_{k}"


_NAME_RE = re.compile(r"^(x|U)_(\d+)_(-?\d+)_(\d+)$|^C_(\d+)_(\d+)$")


def parse_name(name: str) -> tuple:
    """Inverse of the naming scheme: ``("x", i, j, k)``, ``("U", i, j, k)``
    or ``("C", i, k)`` with 0-based machine ``i``."""
    m = _NAME_RE.match(name)
    if not m:
        raise MipFormatError(f"not a model variable name: {name!r}")
    if m.group(1):
        return (m.group(1), int(m.group(2)) - 1, int(m.group(3)), int(m.group(4)))
    return ("C", int(m.group(5)) - 1, int(m.group(6)))


def build_mip(inst: Instance, bs: BlockStructure | None = None) -> MipModel:
    """Assignment model over the locations of the block structure."""
    if bs is None:
        bs = build_blocks(inst.n, inst.park)
    park = inst.park
    L = park.L
    jobs = sorted(inst.jobs, key=lambda j: j.id)
    pmax = max(j.p for j in jobs)
    model = MipModel(name=f"bilevel_N{inst.N}_n{inst.n}", inst=inst, bs=bs)

    locations = sorted((loc.machine, loc.k) for blk in bs.blocks for loc in blk)
    for i, k in locations:
        for job in jobs:
            model.add_var(x_name(i, job.id, k), BINARY)
    for i, k in locations:
        for job in jobs:
            model.add_var(u_name(i, job.id, k), BINARY, obj=job.w)
    for i, k in locations:
        model.add_var(c_name(i, k), CONTINUOUS)

    def x(i, j, k):
        return model.var(x_name(i, j, k))

    # every job at most once
    for job in jobs:
        model.add_row(f"nodup_{job.id}", {x(i, job.id, k): 1 for i, k in locations}, LE, 1)
    # every location at most one job
    for i, k in locations:
        model.add_row(f"loc_{i + 1}_{k}", {x(i, j.id, k): 1 for j in jobs}, LE, 1)
    # all blocks but the first are full; the first takes Q jobs
    rest = {x(loc.machine, j.id, loc.k): 1 for blk in bs.blocks[1:] for loc in blk for j in jobs}
    model.add_row("fill_rest", rest, EQ, inst.n - bs.Q)
    first = {x(loc.machine, j.id, loc.k): 1 for loc in bs.blocks[0] for j in jobs}
    model.add_row("fill_first", first, EQ, bs.Q)
    # processing times do not decrease from one block to the next
    for b in range(bs.bmax - 1):
        for a in bs.blocks[b]:
            for c in bs.blocks[b + 1]:
                coefs = {x(a.machine, j.id, a.k): j.p for j in jobs}
                for j in jobs:
                    coefs[x(c.machine, j.id, c.k)] = -j.p
                model.add_row(f"mono_{a.machine + 1}_{a.k}_{c.machine + 1}_{c.k}", coefs, LE, 0)
    # completion times, C_{i,0} = 0
    present = set(locations)
    for i, k in locations:
        coefs = {model.var(c_name(i, k)): 1}
        if (i, k - 1) in present:
            coefs[model.var(c_name(i, k - 1))] = -1
        for j in jobs:
            coefs[x(i, j.id, k)] = -park.ticks(j.p, i)
        model.add_row(f"comp_{i + 1}_{k}", coefs, EQ, 0)
    # only a scheduled job can be penalised
    for i, k in locations:
        for j in jobs:
            model.add_row(f"pen_{i + 1}_{j.id}_{k}",
                          {model.var(u_name(i, j.id, k)): 1, x(i, j.id, k): -1}, LE, 0)
    # an unpenalised job is on time
    for i, k in locations:
        H = k * park.ticks(pmax, i)
        coefs = {model.var(c_name(i, k)): 1}
        for j in jobs:
            coefs[x(i, j.id, k)] = -j.d * L
            coefs[model.var(u_name(i, j.id, k))] = -H
        model.add_row(f"due_{i + 1}_{k}", coefs, LE, 0)
    return model


# -------------------------------------------------------------- LP text

def _num(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if float(v).is_integer():
        return str(int(v))
    return repr(float(v))


def _terms(coefs: list[tuple[float, str]], width: int = 78) -> list[str]:
    lines, cur = [], ""
    for n, (c, name) in enumerate(coefs):
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        piece = f"{sign} {name}" if mag == 1 else f"{sign} {_num(mag)} {name}"
        if n == 0 and sign == "+":
            piece = piece[2:]
        if cur and len(cur) + len(piece) + 1 > width:
            lines.append(cur)
            cur = piece
        else:
            cur = f"{cur} {piece}" if cur else piece
    if cur or not lines:
        lines.append(cur)
    return lines


def write_lp(model: MipModel) -> str:
    """CPLEX-style LP text."""
    out = [f"\\ {model.name}", "Minimize"]
    obj = [(c, model.var_names[j]) for j, c in enumerate(model.obj) if c != 0]
    body = _terms(obj) if obj else [f"0 {model.var_names[0]}"]
    out.append(" obj: " + body[0])
    out.extend("   " + t for t in body[1:])
    out.append("Subject To")
    for name, row, sense, b in zip(model.row_names, model.rows, model.row_senses, model.rhs):
        body = _terms([(c, model.var_names[j]) for j, c in sorted(row.items())])
        if not row:
            body = [f"0 {model.var_names[0]}"]
        body[-1] += f" {_SENSE_SYMBOL[sense]} {_num(b)}"
        out.append(f" {name}: {body[0]}")
        out.extend("   " + t for t in body[1:])
    out.append("Bounds")
    for j, name in enumerate(model.var_names):
        t, lo, hi = model.var_types[j], model.lb[j], model.ub[j]
        if t == BINARY:
            continue
        if lo == 0 and math.isinf(hi):
            continue
        if math.isinf(lo) and math.isinf(hi):
            out.append(f" {name} free")
        else:
            out.append(f" {_num(lo)} <= {name} <= {_num(hi)}")
    for title, vtype in (("Binaries", BINARY), ("General", INTEGER)):
        names = [n for n, t in zip(model.var_names, model.var_types) if t == vtype]
        if names:
            out.append(title)
            for s in range(0, len(names), 8):
                out.append(" " + " ".join(names[s:s + 8]))
    out.append("End")
    return "\n".join(out) + "\n"


def _parse_expr(text: str) -> list[tuple[float, str]]:
    terms = []
    pos = 0
    text = text.strip()
    tok = re.compile(r"\s*([+-])?\s*(\d+(?:\.\d*)?(?:[eE][+-]?\d+)?)?\s*([A-Za-z_][\w.]*)\s*")
    while pos < len(text):
        m = tok.match(text, pos)
        if not m or m.end() == pos:
            raise MipFormatError(f"cannot parse expression near {text[pos:pos + 20]!r}")
        sign = -1.0 if m.group(1) == "-" else 1.0
        coef = float(m.group(2)) if m.group(2) else 1.0
        terms.append((sign * coef, m.group(3)))
        pos = m.end()
    return terms


def read_lp(text: str) -> MipModel:
    """Parse the LP subset produced by :func:`write_lp`."""
    section = None
    name = "model"
    obj_lines: list[str] = []
    cons: list[str] = []
    bounds: list[str] = []
    ints: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].strip() if not raw.startswith("\\") else ""
        if raw.startswith("\\") and section is None:
            name = raw[1:].strip() or name
            continue
        if not line:
            continue
        low = line.lower()
        if low in ("minimize", "minimise", "min"):
            section = "obj"
            continue
        if low in ("subject to", "st", "s.t.", "such that"):
            section = "cons"
            continue
        if low == "bounds":
            section = "bounds"
            continue
        if low in ("binaries", "binary", "bin"):
            section = BINARY
            continue
        if low in ("general", "generals", "gen"):
            section = INTEGER
            continue
        if low == "end":
            section = "end"
            continue
        if section == "obj":
            obj_lines.append(line)
        elif section == "cons":
            if re.match(r"^[A-Za-z_][\w.]*\s*:", line) or not cons:
                cons.append(line)
            else:
                cons[-1] += " " + line
        elif section == "bounds":
            bounds.append(line)
        elif section in (BINARY, INTEGER):
            for v in line.split():
                ints[v] = section
        else:
            raise MipFormatError(f"unexpected line outside any section: {raw!r}")
    if section != "end":
        raise MipFormatError("missing End")

    model = MipModel(name=name)

    def col(v: str) -> int:
        if v not in model._index:
            model.add_var(v, CONTINUOUS)
        return model.var(v)

    obj_text = " ".join(obj_lines)
    if ":" in obj_text:
        obj_text = obj_text.split(":", 1)[1]
    obj_terms = _parse_expr(obj_text)
    parsed_rows = []
    for c in cons:
        if ":" not in c:
            raise MipFormatError(f"unnamed constraint {c!r}")
        rname, body = c.split(":", 1)
        m = re.match(r"^(.*?)(<=|>=|=<|=>|=|<|>)\s*([+-]?[\d.eE+-]+)\s*$", body.strip())
        if not m:
            raise MipFormatError(f"cannot parse constraint {c!r}")
        parsed_rows.append((rname.strip(), _parse_expr(m.group(1)), _SYMBOL_SENSE[m.group(2)],
                            float(m.group(3))))
    # column order: integer sections first, then first appearance in rows and
    # objective.  This reproduces the order of models built by build_mip.
    order: list[str] = list(ints)
    seen = set(order)
    for _, terms, _, _ in parsed_rows:
        for _, v in terms:
            if v not in seen:
                seen.add(v)
                order.append(v)
    for _, v in obj_terms:
        if v not in seen:
            seen.add(v)
            order.append(v)
    for v in order:
        col(v)
    for c, v in obj_terms:
        model.obj[col(v)] += c
    for rname, terms, sense, b in parsed_rows:
        coefs: dict[int, float] = {}
        for c, v in terms:
            coefs[col(v)] = coefs.get(col(v), 0.0) + c
        model.add_row(rname, coefs, sense, b)
    for line in bounds:
        parts = line.split()
        if len(parts) == 2 and parts[1].lower() == "free":
            j = col(parts[0])
            model.lb[j], model.ub[j] = -math.inf, math.inf
        elif len(parts) == 5 and parts[1] == parts[3] == "<=":
            j = col(parts[2])
            model.lb[j], model.ub[j] = float(parts[0]), float(parts[4])
        else:
            raise MipFormatError(f"unsupported bound {line!r}")
    for v, t in ints.items():
        j = col(v)
        model.var_types[j] = t
        if t == BINARY:
            model.lb[j], model.ub[j] = 0.0, 1.0
    return model


# ------------------------------------------------------------------ MPS

def _mps_line(f1: str, f2: str, f3: str = "", f4: str = "", f5: str = "", f6: str = "") -> str:
    """Fixed MPS fields at columns 2, 5, 15, 25, 40, 50.  Longer names push
    later fields right but stay separated by at least two blanks."""
    line = f" {f1:<2} {f2:<8}"
    if f3:
        line += f"  {f3:<8}"
        line += f"  {f4:>12}"
    if f5:
        line += f"   {f5:<8}  {f6:>12}"
    return line.rstrip()


def write_mps(model: MipModel) -> str:
    """Fixed-column MPS with MARKER lines around integer columns."""
    out = [f"NAME          {model.name}", "ROWS", " N  obj"]
    for name, sense in zip(model.row_names, model.row_senses):
        out.append(f" {sense}  {name}")
    out.append("COLUMNS")
    by_col: list[list[tuple[str, float]]] = [[] for _ in model.var_names]
    for name, row in zip(model.row_names, model.rows):
        for j, c in row.items():
            by_col[j].append((name, c))
    in_int = False
    marker = 0
    for j, vname in enumerate(model.var_names):
        is_int = model.var_types[j] != CONTINUOUS
        if is_int != in_int:
            tag = "'INTORG'" if is_int else "'INTEND'"
            out.append(f"    MARKER{marker:<4}'MARKER'                 {tag}")
            marker += 1
            in_int = is_int
        entries = ([("obj", model.obj[j])] if model.obj[j] != 0 else []) + by_col[j]
        if not entries:
            entries = [("obj", 0.0)]
        for s in range(0, len(entries), 2):
            (r1, c1), *more = entries[s:s + 2]
            if more:
                out.append(_mps_line("", vname, r1, _num(c1), more[0][0], _num(more[0][1])))
            else:
                out.append(_mps_line("", vname, r1, _num(c1)))
    if in_int:
        out.append(f"    MARKER{marker:<4}'MARKER'                 'INTEND'")
    out.append("RHS")
    nz = [(n, b) for n, b in zip(model.row_names, model.rhs) if b != 0]
    for s in range(0, len(nz), 2):
        (r1, b1), *more = nz[s:s + 2]
        if more:
            out.append(_mps_line("", "RHS", r1, _num(b1), more[0][0], _num(more[0][1])))
        else:
            out.append(_mps_line("", "RHS", r1, _num(b1)))
    out.append("BOUNDS")
    for j, vname in enumerate(model.var_names):
        t, lo, hi = model.var_types[j], model.lb[j], model.ub[j]
        if t == BINARY:
            out.append(_mps_line("UP", "BND", vname, "1"))
            continue
        if math.isinf(lo) and math.isinf(hi):
            out.append(_mps_line("FR", "BND", vname))
            continue
        if lo != 0:
            out.append(_mps_line("MI" if math.isinf(lo) else "LO", "BND", vname,
                                 "" if math.isinf(lo) else _num(lo)))
        if not math.isinf(hi):
            out.append(_mps_line("UP", "BND", vname, _num(hi)))
    out.append("ENDATA")
    return "\n".join(out) + "\n"


def read_mps(text: str) -> MipModel:
    """Parse MPS (fixed or free; fields are split on whitespace, so names
    must not contain blanks)."""
    model = MipModel()
    section = None
    obj_row = None
    row_index: dict[str, int] = {}
    in_int = False
    col_seen_bound: set[int] = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip() or raw.startswith("*"):
            continue
        parts = raw.split()
        if not raw[0].isspace():
            key = parts[0].upper()
            if key == "NAME":
                model.name = parts[1] if len(parts) > 1 else ""
                continue
            if key in ("ROWS", "COLUMNS", "RHS", "BOUNDS", "RANGES", "ENDATA"):
                section = key
                if key == "ENDATA":
                    break
                continue
            raise MipFormatError(f"line {lineno}: unknown section {parts[0]!r}")
        if section == "ROWS":
            if len(parts) != 2 or parts[0].upper() not in ("N", "L", "E", "G"):
                raise MipFormatError(f"line {lineno}: bad row record")
            kind, name = parts[0].upper(), parts[1]
            if kind == "N":
                if obj_row is None:
                    obj_row = name
                continue
            row_index[name] = len(model.rows)
            model.add_row(name, {}, kind, 0.0)
        elif section == "COLUMNS":
            if len(parts) >= 3 and parts[1].strip("'").upper() == "MARKER":
                tag = parts[-1].strip("'").upper()
                if tag not in ("INTORG", "INTEND"):
                    raise MipFormatError(f"line {lineno}: bad marker")
                in_int = tag == "INTORG"
                continue
            if len(parts) not in (3, 5):
                raise MipFormatError(f"line {lineno}: bad column record")
            vname = parts[0]
            if vname not in model._index:
                model.add_var(vname, INTEGER if in_int else CONTINUOUS)
                if in_int:
                    model.ub[-1] = math.inf
            j = model.var(vname)
            for r, v in zip(parts[1::2], parts[2::2]):
                val = float(v)
                if r == obj_row:
                    model.obj[j] += val
                elif r in row_index:
                    model.rows[row_index[r]][j] = val
                else:
                    raise MipFormatError(f"line {lineno}: unknown row {r!r}")
        elif section == "RHS":
            if len(parts) not in (3, 5):
                raise MipFormatError(f"line {lineno}: bad rhs record")
            for r, v in zip(parts[1::2], parts[2::2]):
                if r not in row_index:
                    raise MipFormatError(f"line {lineno}: unknown row {r!r}")
                model.rhs[row_index[r]] = float(v)
        elif section == "BOUNDS":
            kind = parts[0].upper()
            if kind in ("FR", "MI", "PL", "BV") and len(parts) == 3:
                vname, val = parts[2], None
            elif len(parts) == 4:
                vname, val = parts[2], float(parts[3])
            else:
                raise MipFormatError(f"line {lineno}: bad bound record")
            if vname not in model._index:
                raise MipFormatError(f"line {lineno}: unknown column {vname!r}")
            j = model.var(vname)
            col_seen_bound.add(j)
            if kind == "UP":
                model.ub[j] = val
            elif kind == "LO":
                model.lb[j] = val
            elif kind == "FX":
                model.lb[j] = model.ub[j] = val
            elif kind == "FR":
                model.lb[j], model.ub[j] = -math.inf, math.inf
            elif kind == "MI":
                model.lb[j] = -math.inf
            elif kind == "PL":
                model.ub[j] = math.inf
            elif kind == "BV":
                model.var_types[j] = BINARY
                model.lb[j], model.ub[j] = 0.0, 1.0
            else:
                raise MipFormatError(f"line {lineno}: unknown bound type {kind!r}")
        else:
            raise MipFormatError(f"line {lineno}: record outside a section")
    if section != "ENDATA":
        raise MipFormatError("missing ENDATA")
    for j, t in enumerate(model.var_types):
        if t == INTEGER and model.lb[j] == 0 and model.ub[j] == 1:
            model.var_types[j] = BINARY
    return model


def export(model: MipModel, fmt: str = "lp") -> str:
    """Model text in ``"lp"`` or ``"mps"`` format."""
    if fmt == "lp":
        return write_lp(model)
    if fmt == "mps":
        return write_mps(model)
    raise ValueError(f"unknown format {fmt!r}")


def parse_export(text: str, fmt: str) -> MipModel:
    if fmt == "lp":
        return read_lp(text)
    if fmt == "mps":
        return read_mps(text)
    raise ValueError(f"unknown format {fmt!r}")


def validate_export(model: MipModel, fmt: str) -> list[str]:
    """Export, re-parse and re-export a model; returns a list of problems
    (empty when the file is well formed and round-trips exactly)."""
    problems = []
    text = export(model, fmt)
    try:
        back = parse_export(text, fmt)
    except MipFormatError as exc:
        return [f"{fmt}: parse error: {exc}"]
    if not back.same_as(model):
        problems.append(f"{fmt}: re-parsed model differs from the original")
    if export(back, fmt) != text:
        problems.append(f"{fmt}: re-encoding is not byte identical")
    names = set(back.var_names)
    if len(names) != model.num_vars or names != set(model.var_names):
        problems.append(f"{fmt}: variable names are not a bijection")
    for n in model.var_names:
        try:
            parse_name(n)
        except MipFormatError:
            problems.append(f"{fmt}: variable {n} does not follow the naming scheme")
            break
    return problems


# ------------------------------------------------------------- solutions

@dataclass
class MipSolution:
    objective: int
    schedule: Schedule
    selection: tuple[int, ...]
    status: str  # "optimal" | "feasible"


def decode(model: MipModel, values: dict[str, float]) -> Schedule:
    """Schedule encoded by the ``x`` values of a solution."""
    m = model.inst.park.m
    placed: list[list[tuple[int, int]]] = [[] for _ in range(m)]
    for name, v in values.items():
        if v > 0.5 and name.startswith("x_"):
            _, i, j, k = parse_name(name)
            placed[i].append((k, j))
    return Schedule.from_lists([[j for _, j in sorted(row)] for row in placed])


def check_solution(model: MipModel, values: dict[str, float], status: str = "feasible",
                   tol: float = 1e-6) -> MipSolution | None:
    """Decode and re-validate; ``None`` if the point is infeasible, the
    schedule is not block respecting, or the evaluated leader cost differs
    from the model objective."""
    inst, bs = model.inst, model.bs
    point = np.zeros(model.num_vars)
    for name, v in values.items():
        if name in model._index:
            point[model.var(name)] = v
    if model.violation(point) > tol:
        log.info("rejected MIP solution: constraint violation %.3g", model.violation(point))
        return None
    sched = decode(model, values)
    try:
        ev = evaluate(sched, inst)
    except ScheduleError as exc:
        log.info("rejected MIP solution: %s", exc)
        return None
    objective = model.objective_value(point)
    if not is_block_respecting(sched, inst, bs):
        log.info("rejected MIP solution: not block respecting")
        return None
    if abs(objective - ev.leader_cost) > tol:
        log.info("rejected MIP solution: objective %s but schedule evaluates to %s",
                 objective, ev.leader_cost)
        return None
    return MipSolution(ev.leader_cost, sched, tuple(sorted(sched.job_ids)), status)


def solve_highs(model: MipModel, time_limit: float = 20.0) -> MipSolution | None:
    """Solve in-process with SciPy's HiGHS MILP solver."""
    n = model.num_vars
    r, c, v = [], [], []
    lo, hi = [], []
    for k, (row, sense, b) in enumerate(zip(model.rows, model.row_senses, model.rhs)):
        for j, a in row.items():
            r.append(k)
            c.append(j)
            v.append(a)
        lo.append(-np.inf if sense == LE else b)
        hi.append(np.inf if sense == GE else b)
    A = coo_matrix((v, (r, c)), shape=(model.num_rows, n)).tocsr()
    integrality = np.array([0 if t == CONTINUOUS else 1 for t in model.var_types])
    res = milp(np.asarray(model.obj), constraints=LinearConstraint(A, lo, hi),
               integrality=integrality, bounds=Bounds(model.lb, model.ub),
               options={"time_limit": float(time_limit), "disp": False})
    if res.x is None:
        return None
    values = {name: float(round(x)) if model.var_types[j] != CONTINUOUS else float(x)
              for j, (name, x) in enumerate(zip(model.var_names, res.x))}
    return check_solution(model, values, "optimal" if res.status == 0 else "feasible")


def parse_solution_text(text: str, model: MipModel) -> dict[str, float]:
    """``name value`` pairs for known column names; other tokens are ignored,
    so most solvers' plain-text solution listings work unchanged."""
    values: dict[str, float] = {}
    for line in text.splitlines():
        toks = line.split()
        for a, b in zip(toks, toks[1:]):
            if a in model._index and a not in values:
                try:
                    values[a] = float(b)
                except ValueError:
                    continue
    return values


def solution_status(text: str) -> str:
    """``"optimal"`` when a solution listing reports proven optimality
    (e.g. ``# status Optimal``), ``"feasible"`` otherwise."""
    return "optimal" if _OPTIMAL_RE.search(text) else "feasible"


_OPTIMAL_RE = re.compile(r"^\W*(?:model\s+)?status\W+optimal\b", re.IGNORECASE | re.MULTILINE)


def run_external(model: MipModel, cmd: str | None, time_limit: float = 20.0,
                 fmt: str | None = None) -> MipSolution | None:
    """Run an external solver through the template
    ``"<cmd> {model} {timelimit} {solout}"``.

    The model is written to a temporary directory (MPS unless the template
    or ``fmt`` asks for ``lp``).  Returns ``None`` when no command is
    configured, the solver fails or times out, or its solution does not
    survive re-validation.
    """
    if not cmd:
        return None
    fmt = fmt or ("lp" if ".lp" in cmd else "mps")
    with tempfile.TemporaryDirectory(prefix="bilevel_mip_") as tmp:
        model_path = Path(tmp) / f"model.{fmt}"
        sol_path = Path(tmp) / "solution.txt"
        model_path.write_text(export(model, fmt))
        argv = [part.format(model=str(model_path), timelimit=_num(time_limit), solout=str(sol_path))
                for part in shlex.split(cmd)]
        try:
            subprocess.run(argv, check=True, timeout=time_limit + 30,
                           stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
        except (OSError, subprocess.SubprocessError) as exc:
            log.warning("external MIP solver failed: %s", exc)
            return None
        if not sol_path.exists():
            log.warning("external MIP solver wrote no solution file")
            return None
        text = sol_path.read_text(errors="replace")
    return check_solution(model, parse_solution_text(text, model), solution_status(text))


def highs_command() -> str:
    """Template that runs the bundled HiGHS adapter as an external solver.
    It needs the optional ``highspy`` package."""
    return f"{shlex.quote(sys.executable)} -m bilevel_sched.highs_runner {{model}} {{timelimit}} {{solout}}"


def highspy_available() -> bool:
    try:
        import highspy  # noqa: F401
    except ImportError:
        return False
    return True


def solver_reads(text: str, fmt: str) -> tuple[int, int] | None:
    """Load a model file with the ``highspy`` reader; returns
    ``(columns, rows)``, or ``None`` when ``highspy`` is not installed.

    Raises ``MipFormatError`` if the reader rejects the file.
    """
    if not highspy_available():
        return None
    import highspy

    with tempfile.TemporaryDirectory(prefix="bilevel_chk_") as tmp:
        path = os.path.join(tmp, f"model.{fmt}")
        with open(path, "w") as fh:
            fh.write(text)
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        status = h.readModel(path)
        if status != highspy.HighsStatus.kOk:
            raise MipFormatError(f"HiGHS rejected the {fmt} file ({status})")
        lp = h.getLp()
        return lp.num_col_, lp.num_row_
