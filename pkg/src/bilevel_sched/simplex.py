"""Bounded-variable revised primal simplex for small dense LPs.

Solves ``min c x`` subject to rows ``a_r x (<=|=|>=) b_r`` and
``0 <= x <= u``.  It is meant for restricted master problems with a few
dozen rows.  The solver object stays alive between column-generation
iterations: ``add_columns`` keeps the current basis, so re-optimisation
starts from a primal feasible point.

Dual convention (minimisation): ``y = c_B B^-1``.  At optimality ``<=``
rows have ``y <= 0``, ``>=`` rows ``y >= 0`` and equality rows are free.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import lu_factor, lu_solve

LE, EQ, GE = "<=", "=", ">="

_FEAS_TOL = 1e-9
_OPT_TOL = 1e-9
_PIV_TOL = 1e-11


@dataclass
class LpProblem:
    """Column-wise LP data.  ``A`` has one row per constraint."""

    c: np.ndarray
    A: np.ndarray
    senses: Sequence[str]
    rhs: np.ndarray
    ub: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.rhs = np.asarray(self.rhs, dtype=float)
        if self.ub is None:
            self.ub = np.ones(len(self.c))
        self.ub = np.asarray(self.ub, dtype=float)
        if self.A.shape != (len(self.rhs), len(self.c)):
            raise ValueError("A must be rows x columns")
        for s in self.senses:
            if s not in (LE, EQ, GE):
                raise ValueError(f"unknown relation {s!r}")


@dataclass
class LpResult:
    status: str  # "optimal" | "infeasible" | "iteration_limit"
    objective: float = float("nan")
    x: np.ndarray = field(default_factory=lambda: np.zeros(0))
    duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    reduced_costs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0


class BoundedSimplex:
    """Warm-startable solver.  Structural columns come first, then one
    logical (slack) column per inequality row, then one artificial per row."""

    def __init__(self, senses: Sequence[str], rhs, max_iter: int = 50_000):
        self.senses = list(senses)
        self.b = np.asarray(rhs, dtype=float)
        self.m = len(self.b)
        self.max_iter = max_iter
        self.n_struct = 0
        self._c = np.zeros(0)
        self._A = np.zeros((self.m, 0))
        self._u = np.zeros(0)
        self.basis: list[int] | None = None
        self.at_upper = np.zeros(0, dtype=bool)
        self.iterations = 0
        self._bland = False
        self._feasible = False

    # ----------------------------------------------------------- columns
    def add_columns(self, c, A, ub=None) -> range:
        """Append structural columns; returns their indices."""
        c = np.atleast_1d(np.asarray(c, dtype=float))
        A = np.asarray(A, dtype=float).reshape(self.m, len(c))
        ub = np.ones(len(c)) if ub is None else np.asarray(ub, dtype=float)
        first = self.n_struct
        self._c = np.concatenate([self._c, c])
        self._A = np.hstack([self._A, A])
        self._u = np.concatenate([self._u, ub])
        self.n_struct += len(c)
        if self.basis is not None:
            # logical and artificial columns live after the structural block
            shift = len(c)
            self.basis = [j + shift if j >= first else j for j in self.basis]
            self.at_upper = np.concatenate([self.at_upper[:first], np.zeros(shift, bool),
                                            self.at_upper[first:]])
        return range(first, first + len(c))

    def set_upper(self, j: int, u: float) -> None:
        """Change a structural bound (used to exclude pool columns)."""
        self._u[j] = u
        if self.basis is not None and j not in self.basis and self.at_upper[j] and u == 0:
            self.at_upper[j] = False

    def _logicals(self):
        cols, ups = [], []
        for r, s in enumerate(self.senses):
            if s == EQ:
                continue
            col = np.zeros(self.m)
            col[r] = 1.0 if s == LE else -1.0
            cols.append(col)
            ups.append(np.inf)
        A = np.array(cols).T if cols else np.zeros((self.m, 0))
        return A, np.array(ups)

    def _full(self, phase: int):
        A_log, u_log = self._logicals()
        A_art = np.diag(np.where(self.b >= 0, 1.0, -1.0))
        A = np.hstack([self._A, A_log, A_art])
        u = np.concatenate([self._u, u_log, np.full(self.m, np.inf if phase == 1 else 0.0)])
        if phase == 1:
            c = np.concatenate([np.zeros(self.n_struct + A_log.shape[1]), np.ones(self.m)])
        else:
            c = np.concatenate([self._c, np.zeros(A_log.shape[1] + self.m)])
        return c, A, u, A_log.shape[1]

    # ------------------------------------------------------------ solve
    def solve(self) -> LpResult:
        start_iter = self.iterations
        if self.basis is None:
            self.basis = self._slack_basis()
            self.at_upper = np.zeros(self.n_struct + self.m + self._n_logical(), dtype=bool)
        if not self._feasible:
            c, A, u, nlog = self._full(1)
            art0 = self.n_struct + nlog
            status = self._iterate(c, A, u)
            if status != "optimal":
                return LpResult(status, iterations=self.iterations - start_iter)
            x = self._primal(A, u)
            if x[art0:].sum() > 1e-7 * (1 + np.abs(self.b).sum()):
                return LpResult("infeasible", iterations=self.iterations - start_iter)
            self._feasible = True
        c, A, u, nlog = self._full(2)
        status = self._iterate(c, A, u)
        x = self._primal(A, u)
        y, d = self._duals(c, A)
        obj = float(c @ x)
        return LpResult(status, obj, x[:self.n_struct].copy(), y, d[:self.n_struct],
                        self.iterations - start_iter)

    def _n_logical(self) -> int:
        return sum(s != EQ for s in self.senses)

    def _slack_basis(self) -> list[int]:
        """Initial basis: a logical where it is feasible at zero, else an artificial."""
        art0 = self.n_struct + self._n_logical()
        basis = []
        k = self.n_struct
        for r, s in enumerate(self.senses):
            if s == EQ:
                basis.append(art0 + r)
                continue
            sign = 1.0 if s == LE else -1.0
            basis.append(k if sign * self.b[r] >= 0 else art0 + r)
            k += 1
        return basis

    def _primal(self, A, u) -> np.ndarray:
        x = np.zeros(A.shape[1])
        x[self.at_upper] = u[self.at_upper]
        B = A[:, self.basis]
        rhs = self.b - A @ x
        x[self.basis] = np.linalg.solve(B, rhs)
        return x

    def _duals(self, c, A):
        B = A[:, self.basis]
        y = np.linalg.solve(B.T, c[self.basis])
        return y, c - y @ A

    def _iterate(self, c, A, u) -> str:
        m = self.m
        ncol = A.shape[1]
        if len(self.at_upper) < ncol:
            self.at_upper = np.concatenate([self.at_upper, np.zeros(ncol - len(self.at_upper), bool)])
        degenerate = 0
        self._bland = False
        while True:
            if self.iterations >= self.max_iter:
                return "iteration_limit"
            basis = self.basis
            B = A[:, basis]
            lu = lu_factor(B)
            xN = np.where(self.at_upper, u, 0.0)
            xN[basis] = 0.0
            xB = lu_solve(lu, self.b - A @ xN)
            y = lu_solve(lu, c[basis], trans=1)
            d = c - y @ A
            is_basic = np.zeros(ncol, dtype=bool)
            is_basic[basis] = True
            scale = 1.0 + np.abs(c)
            cand_lo = (~is_basic) & (~self.at_upper) & (d < -_OPT_TOL * scale) & (u > 0)
            cand_up = (~is_basic) & self.at_upper & (d > _OPT_TOL * scale)
            cand = cand_lo | cand_up
            if not cand.any():
                return "optimal"
            if self._bland:
                q = int(np.flatnonzero(cand)[0])
            else:
                score = np.where(cand, np.abs(d), -1.0)
                q = int(np.argmax(score))
            direction = 1.0 if cand_lo[q] else -1.0
            alpha = lu_solve(lu, A[:, q])
            delta = -direction * alpha  # change of xB per unit step
            theta = u[q]  # bound flip
            leave = -1
            leave_to_upper = False
            uB = u[basis]
            for i in range(m):
                di = delta[i]
                if di < -_PIV_TOL:
                    t = max(xB[i], 0.0) / -di
                    to_up = False
                elif di > _PIV_TOL and np.isfinite(uB[i]):
                    t = max(uB[i] - xB[i], 0.0) / di
                    to_up = True
                else:
                    continue
                if t < theta - 1e-12 or (leave >= 0 and abs(t - theta) <= 1e-12 and self._bland
                                         and basis[i] < basis[leave]):
                    theta, leave, leave_to_upper = t, i, to_up
            if not np.isfinite(theta):
                return "unbounded"
            self.iterations += 1
            if theta <= 1e-12:
                degenerate += 1
                if degenerate > 5 * m:
                    self._bland = True
            else:
                degenerate = 0
                self._bland = False
            if leave < 0:
                self.at_upper[q] = not self.at_upper[q]
                continue
            out = basis[leave]
            basis[leave] = q
            self.at_upper[q] = False
            self.at_upper[out] = leave_to_upper

    def dual_objective(self, res: LpResult) -> float:
        """``y b + sum_j u_j min(d_j, 0)`` over structural columns."""
        d = res.reduced_costs
        u = self._u
        bounded = np.isfinite(u)
        return float(res.duals @ self.b + np.sum(np.where(bounded, u, 0.0) * np.minimum(d, 0.0)))


def lp_solve(p: LpProblem, max_iter: int = 50_000) -> LpResult:
    """One-shot solve of an :class:`LpProblem`."""
    s = BoundedSimplex(p.senses, p.rhs, max_iter=max_iter)
    s.add_columns(p.c, p.A, p.ub)
    return s.solve()
