"""Domain types, canonical ordering, schedule evaluation, instance I/O and
the random instance generator.

All times are integer *ticks*: one tick is ``1/L`` of a time unit where
``L`` is the least common multiple of the machine speeds in use.  A job of
processing time ``p`` occupies ``p * L // V`` ticks on a machine of speed
``V`` and a due date ``d`` is compared as ``d * L``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

FAST = 1
SLOW = 0

GRID_VALUES = (0.2, 0.4, 0.6, 0.8, 1.0)


class InstanceFormatError(ValueError):
    """Raised when an instance file cannot be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ScheduleError(ValueError):
    """Raised for schedules that reference unknown or duplicated jobs."""


@dataclass(frozen=True, order=True)
class Job:
    id: int
    p: int
    w: int
    d: int

    def __post_init__(self):
        if self.p < 1:
            raise ValueError(f"job {self.id}: processing time must be >= 1")
        if self.w < 0:
            raise ValueError(f"job {self.id}: weight must be >= 0")
        if self.d < 0:
            raise ValueError(f"job {self.id}: due date must be >= 0")


@dataclass(frozen=True)
class MachinePark:
    """Two speed classes: ``m1`` fast machines at ``V1``, ``m0`` slow at ``V0``.

    Machines are indexed fast first: ``0 .. m1-1`` are fast, ``m1 .. m-1``
    slow.  A class without machines does not take part in the tick scale.
    """

    m0: int
    m1: int
    V0: int = 1
    V1: int = 2

    def __post_init__(self):
        if self.m0 < 0 or self.m1 < 0 or self.m0 + self.m1 < 1:
            raise ValueError("need at least one machine")
        if self.V0 < 1 or self.V1 < 1:
            raise ValueError("speeds must be positive integers")
        if self.m0 > 0 and self.m1 > 0 and not self.V1 > self.V0:
            raise ValueError("fast speed V1 must exceed slow speed V0")

    @property
    def m(self) -> int:
        return self.m0 + self.m1

    @property
    def L(self) -> int:
        speeds = [v for v, c in ((self.V0, self.m0), (self.V1, self.m1)) if c]
        return math.lcm(*speeds)

    def speed_class(self, i: int) -> int:
        return FAST if i < self.m1 else SLOW

    def speed(self, i: int) -> int:
        return self.V1 if i < self.m1 else self.V0

    def class_speed(self, gamma: int) -> int:
        return self.V1 if gamma == FAST else self.V0

    def class_count(self, gamma: int) -> int:
        return self.m1 if gamma == FAST else self.m0

    def machines_of(self, gamma: int) -> range:
        return range(self.m1) if gamma == FAST else range(self.m1, self.m)

    def ticks(self, p: int, i: int) -> int:
        """Ticks used by processing time ``p`` on machine ``i``."""
        return p * self.L // self.speed(i)

    def class_ticks(self, p: int, gamma: int) -> int:
        return p * self.L // self.class_speed(gamma)


def _canonical_key(job: Job):
    return (job.p, job.d, job.id)


def canonicalize(jobs: Iterable[Job]) -> list[Job]:
    """SPT order, ties by earliest due date, remaining ties by id."""
    return sorted(jobs, key=_canonical_key)


@dataclass(frozen=True)
class Instance:
    jobs: tuple[Job, ...]
    park: MachinePark
    n: int
    _by_id: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        jobs = tuple(canonicalize(self.jobs))
        object.__setattr__(self, "jobs", jobs)
        if not 1 <= self.n <= len(jobs):
            raise ValueError("selection size exceeds job count" if self.n > len(jobs)
                             else "selection size must be >= 1")
        by_id = {}
        for pos, job in enumerate(jobs):
            if job.id in by_id:
                raise ValueError(f"duplicate job id {job.id}")
            by_id[job.id] = pos
        object.__setattr__(self, "_by_id", by_id)

    @property
    def N(self) -> int:
        return len(self.jobs)

    def position(self, job_id: int) -> int:
        """Canonical index of a job id."""
        try:
            return self._by_id[job_id]
        except KeyError:
            raise ScheduleError(f"unknown job id {job_id}") from None

    def job(self, job_id: int) -> Job:
        return self.jobs[self.position(job_id)]

    def with_n(self, n: int) -> "Instance":
        return Instance(self.jobs, self.park, n)


@dataclass(frozen=True)
class Schedule:
    """Job ids per machine in processing order (machine index order)."""

    sequences: tuple[tuple[int, ...], ...]

    @classmethod
    def from_lists(cls, seqs: Sequence[Sequence[int]]) -> "Schedule":
        return cls(tuple(tuple(s) for s in seqs))

    @classmethod
    def empty(cls, m: int) -> "Schedule":
        return cls(tuple(() for _ in range(m)))

    @property
    def job_ids(self) -> list[int]:
        return [j for seq in self.sequences for j in seq]

    def __len__(self) -> int:
        return sum(len(s) for s in self.sequences)

    def completion_ticks(self, jobs_by_id: dict[int, Job], park: MachinePark) -> dict[int, int]:
        out = {}
        for i, seq in enumerate(self.sequences):
            c = 0
            for jid in seq:
                c += park.ticks(jobs_by_id[jid].p, i)
                out[jid] = c
        return out


class Evaluation(NamedTuple):
    total_completion: int
    leader_cost: int


def evaluate_sequences(seqs: Sequence[Sequence[Job]], park: MachinePark) -> Evaluation:
    """Evaluate per-machine job sequences without any selection checks."""
    L = park.L
    total = cost = 0
    for i, seq in enumerate(seqs):
        c = 0
        for job in seq:
            c += park.ticks(job.p, i)
            total += c
            if c > job.d * L:
                cost += job.w
    return Evaluation(total, cost)


def evaluate(schedule: Schedule, inst: Instance, check_count: bool = True) -> Evaluation:
    """Total completion time (ticks) and weighted tardy count of a schedule.

    Raises
    ------
    ScheduleError
        If the schedule names an unknown job, repeats one, uses more
        machines than the park has, or (with ``check_count``) does not
        schedule exactly ``inst.n`` jobs.
    """
    if len(schedule.sequences) > inst.park.m:
        raise ScheduleError("schedule uses more machines than available")
    seen = set()
    seqs = []
    for seq in schedule.sequences:
        row = []
        for jid in seq:
            if jid in seen:
                raise ScheduleError(f"job {jid} scheduled twice")
            seen.add(jid)
            row.append(inst.job(jid))
        seqs.append(row)
    if check_count and len(seen) != inst.n:
        raise ScheduleError(f"schedule has {len(seen)} jobs, expected {inst.n}")
    return evaluate_sequences(seqs, inst.park)


# ---------------------------------------------------------------- generator

def _check_grid(name: str, value: float) -> None:
    if not any(math.isclose(value, g) for g in GRID_VALUES):
        raise ValueError(f"{name} must be one of {GRID_VALUES}, got {value}")


def due_date_interval(P: float, tf: float, rdd: float) -> tuple[float, float]:
    return P * (1 - tf - rdd / 2), P * (1 - tf + rdd / 2)


def generate(N: int, n: int, *, m0: int, m1: int, V0: int = 1, V1: int = 2,
             tf: float, rdd: float, seed: int) -> Instance:
    """Random instance in the style of the benchmark grid.

    ``p ~ U[1,100]``, ``w ~ U[1,10]`` and due dates uniform on
    ``[P(1-tf-rdd/2), P(1-tf+rdd/2)]`` with ``P = sum(p) / (m1 V1 + m0 V0)``,
    rounded half up and clamped at 0.  Job ids are ``1..N`` in canonical
    order.
    """
    _check_grid("tf", tf)
    _check_grid("rdd", rdd)
    park = MachinePark(m0=m0, m1=m1, V0=V0, V1=V1)
    rng = np.random.default_rng(seed % 2**64)
    p = rng.integers(1, 101, size=N)
    w = rng.integers(1, 11, size=N)
    P = p.sum() / (m1 * V1 + m0 * V0)
    lo, hi = due_date_interval(P, tf, rdd)
    d = rng.uniform(lo, hi, size=N)
    d = np.maximum(np.floor(d + 0.5), 0).astype(int)
    raw = [Job(k, int(p[k]), int(w[k]), int(d[k])) for k in range(N)]
    jobs = [Job(k + 1, j.p, j.w, j.d) for k, j in enumerate(canonicalize(raw))]
    return Instance(tuple(jobs), park, n)


# ---------------------------------------------------------------------- I/O

def _ints(tokens: list[str], line: int, count: int) -> list[int]:
    if len(tokens) != count:
        raise InstanceFormatError(f"expected {count} integers, got {len(tokens)}", line)
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise InstanceFormatError(f"malformed integer in {' '.join(tokens)!r}", line) from None


def _build(N, n, m0, m1, V0, V1, rows, line_of=lambda k: None) -> Instance:
    if V0 < 1 or V1 < 1:
        raise InstanceFormatError("nonpositive speed", line_of(-1))
    if n > N:
        raise InstanceFormatError("selection size exceeds job count", line_of(-1))
    if len(rows) != N:
        raise InstanceFormatError(f"expected {N} job lines, found {len(rows)}")
    jobs = []
    for k, (p, w, d) in enumerate(rows):
        try:
            jobs.append(Job(k + 1, p, w, d))
        except ValueError as exc:
            raise InstanceFormatError(str(exc), line_of(k)) from None
    try:
        return Instance(tuple(jobs), MachinePark(m0=m0, m1=m1, V0=V0, V1=V1), n)
    except ValueError as exc:
        raise InstanceFormatError(str(exc), line_of(-1)) from None


def read_instance(text: str) -> Instance:
    """Parse the line-oriented format (or its JSON mirror).

    Line format: header ``N n m0 m1 V0 V1`` followed by ``N`` lines
    ``p w d``.  Blank lines and ``#`` comments are ignored.  Job ids are
    assigned 1-based in file order.
    """
    if text.lstrip().startswith("{"):
        try:
            obj = json.loads(text)
            rows = [(int(j["p"]), int(j["w"]), int(j["d"])) for j in obj["jobs"]]
            return _build(int(obj["N"]), int(obj["n"]), int(obj["m0"]), int(obj["m1"]),
                          int(obj["V0"]), int(obj["V1"]), rows)
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            if isinstance(exc, InstanceFormatError):
                raise
            raise InstanceFormatError(f"bad JSON instance: {exc}") from None
    lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if body:
            lines.append((lineno, body.split()))
    if not lines:
        raise InstanceFormatError("empty instance file")
    header_line, header = lines[0]
    N, n, m0, m1, V0, V1 = _ints(header, header_line, 6)
    rows = [tuple(_ints(tok, ln, 3)) for ln, tok in lines[1:]]
    job_lines = [ln for ln, _ in lines[1:]]
    return _build(N, n, m0, m1, V0, V1, rows,
                  lambda k: header_line if k < 0 else job_lines[k])


def write_instance(inst: Instance) -> str:
    pk = inst.park
    out = [f"{inst.N} {inst.n} {pk.m0} {pk.m1} {pk.V0} {pk.V1}"]
    out += [f"{j.p} {j.w} {j.d}" for j in inst.jobs]
    return "\n".join(out) + "\n"


def instance_to_json(inst: Instance) -> str:
    pk = inst.park
    return json.dumps({"N": inst.N, "n": inst.n, "m0": pk.m0, "m1": pk.m1, "V0": pk.V0,
                       "V1": pk.V1, "jobs": [{"p": j.p, "w": j.w, "d": j.d} for j in inst.jobs]})
