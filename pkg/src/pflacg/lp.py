"""Dense primal simplex method for polytope LMOs.

Every answer is a basic feasible solution, so the LMO always returns a
genuine vertex.  The polytope is brought to standard form once:

* variables with a finite lower bound are shifted, those with only an upper
  bound are reflected, free variables are split;
* finite upper bounds become explicit rows;
* inequality rows get slacks and every row is sign-normalised so the
  right-hand side is non-negative.

Phase 1 (artificial variables, Bland's rule) runs at construction.  Redundant
equality rows are dropped and the resulting feasible tableau is cached, so
each LMO call only copies it and runs phase 2.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import _kernels
from .errors import ConfigurationError, DimensionError, InfeasibleError

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-9


class LPStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration-limit"


_STATUS = {
    _kernels.LP_OPTIMAL: LPStatus.OPTIMAL,
    _kernels.LP_UNBOUNDED: LPStatus.UNBOUNDED,
    _kernels.LP_ITERLIMIT: LPStatus.ITERATION_LIMIT,
}


@dataclass
class LPResult:
    x: np.ndarray | None
    basis: np.ndarray
    status: LPStatus
    iterations: int
    objective: float = float("nan")


def _as_matrix(A, n: int, name: str) -> np.ndarray:
    if A is None:
        return np.zeros((0, n))
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    if A.size == 0:
        return np.zeros((0, n))
    if A.shape[1] != n:
        raise DimensionError(f"{name} has {A.shape[1]} columns, expected {n}")
    return A


class HPolytope:
    """{x : A_ub x <= b_ub, A_eq x = b_eq, lower <= x <= upper}.

    Construction certifies feasibility with a phase-1 solve and raises
    :class:`InfeasibleError` otherwise.
    """

    def __init__(self, n: int, A_ub=None, b_ub=None, A_eq=None, b_eq=None, lower=None, upper=None):
        if n < 1:
            raise ConfigurationError("polytope dimension must be positive")
        self.n = int(n)
        self.A_ub = _as_matrix(A_ub, n, "A_ub")
        self.b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=np.float64).ravel()
        self.A_eq = _as_matrix(A_eq, n, "A_eq")
        self.b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=np.float64).ravel()
        if self.b_ub.shape[0] != self.A_ub.shape[0] or self.b_eq.shape[0] != self.A_eq.shape[0]:
            raise DimensionError("right-hand side length does not match its matrix")
        self.lower = np.zeros(n) if lower is None else np.asarray(lower, dtype=np.float64).ravel()
        self.upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=np.float64).ravel()
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise DimensionError("bounds must have one entry per variable")
        if np.any(self.lower > self.upper + FEAS_TOL):
            raise InfeasibleError("a lower bound exceeds its upper bound")
        for arr in (self.A_ub, self.b_ub, self.A_eq, self.b_eq, self.lower, self.upper):
            arr.setflags(write=False)
        self._build()

    # -- standard form -----------------------------------------------------

    def _build(self):
        n = self.n
        lo, up = self.lower, self.upper
        # x_j = off_j + sgn_j * x'_j  (or x'_j+ - x'_j- when free)
        cols = []  # (var index, sign)
        off = np.zeros(n)
        for j in range(n):
            if np.isfinite(lo[j]):
                off[j] = lo[j]
                cols.append((j, 1.0))
            elif np.isfinite(up[j]):
                off[j] = up[j]
                cols.append((j, -1.0))
            else:
                cols.append((j, 1.0))
                cols.append((j, -1.0))
        nx = len(cols)
        E = np.zeros((n, nx))
        for k, (j, s) in enumerate(cols):
            E[j, k] = s
        self._E = E
        self._off = off

        ub_rows, ub_rhs = [], []
        for j in range(n):
            if np.isfinite(lo[j]) and np.isfinite(up[j]):
                r = np.zeros(nx)
                r[cols.index((j, 1.0))] = 1.0
                ub_rows.append(r)
                ub_rhs.append(up[j] - lo[j])
        if self.A_ub.shape[0]:
            ub_rows.extend(self.A_ub @ E)
            ub_rhs.extend(self.b_ub - self.A_ub @ off)
        eq_rows = list(self.A_eq @ E) if self.A_eq.shape[0] else []
        eq_rhs = list(self.b_eq - self.A_eq @ off) if self.A_eq.shape[0] else []

        m_ub, m_eq = len(ub_rows), len(eq_rows)
        m = m_ub + m_eq
        nstd = nx + m_ub
        A = np.zeros((m, nstd))
        b = np.zeros(m)
        for i in range(m_ub):
            A[i, :nx] = ub_rows[i]
            A[i, nx + i] = 1.0
            b[i] = ub_rhs[i]
        for i in range(m_eq):
            A[m_ub + i, :nx] = eq_rows[i]
            b[m_ub + i] = eq_rhs[i]
        neg = b < 0
        A[neg] *= -1.0
        b[neg] *= -1.0

        # slack columns can start basic on rows that kept their sign
        basis = np.full(m, -1, dtype=np.int64)
        for i in range(m_ub):
            if not neg[i]:
                basis[i] = nx + i
        need_art = np.flatnonzero(basis < 0)
        n_art = need_art.size
        T = np.zeros((m + 1, nstd + n_art + 1))
        T[:m, :nstd] = A
        T[:m, -1] = b
        for k, i in enumerate(need_art):
            T[i, nstd + k] = 1.0
            basis[i] = nstd + k
        # phase-1 objective: sum of artificials, priced out
        for i in need_art:
            T[m, :nstd] -= T[i, :nstd]
            T[m, -1] -= T[i, -1]
        max_iter = 50 * (m + nstd + n_art) + 1000
        status, it = _kernels.simplex_iterate(T, basis, nstd + n_art, max_iter, PIVOT_TOL)
        if status != _kernels.LP_OPTIMAL:
            raise InfeasibleError(f"phase 1 did not finish ({_STATUS[status].value})")
        scale = max(1.0, float(np.abs(b).max()) if m else 1.0)
        if -T[m, -1] > FEAS_TOL * scale:
            raise InfeasibleError("polytope description is infeasible")

        # drive artificial variables out of the basis or drop redundant rows
        keep = np.ones(m, dtype=bool)
        for i in range(m):
            if basis[i] >= nstd:
                row = T[i, :nstd]
                j = int(np.argmax(np.abs(row))) if nstd else -1
                if j >= 0 and abs(row[j]) > 1e-7:
                    _kernels.pivot_np(T, i, j)
                    basis[i] = j
                else:
                    keep[i] = False
        rows = np.append(np.flatnonzero(keep), m)
        T = np.ascontiguousarray(T[np.ix_(rows, np.r_[0:nstd, T.shape[1] - 1])])
        T[-1] = 0.0
        self._T0 = T
        self._basis0 = basis[keep].copy()
        self._nx = nx
        self._nstd = nstd
        self._T0.setflags(write=False)

    # -- solving -----------------------------------------------------------

    def priced_tableau(self, c) -> tuple[np.ndarray, np.ndarray, int]:
        """Fresh copy of the feasible tableau with cost row for ``c``.

        Returns ``(T, basis, ncols)`` ready for the pivoting kernel.
        """
        c = np.asarray(c, dtype=np.float64).ravel()
        if c.shape != (self.n,):
            raise DimensionError(f"cost has length {c.shape[0]}, expected {self.n}")
        T = np.array(self._T0)
        basis = self._basis0.copy()
        m = T.shape[0] - 1
        cstd = np.zeros(self._nstd)
        cstd[: self._nx] = c @ self._E
        # reduced costs relative to the current basis
        T[m, : self._nstd] = cstd
        T[m, -1] = 0.0
        if m:
            cb = cstd[basis]
            T[m] -= cb @ T[:m]
        return T, basis, self._nstd

    def solve(self, c) -> LPResult:
        """Minimize ``c . x`` with Bland's rule starting from the cached basis."""
        T, basis, _ = self.priced_tableau(c)
        m = T.shape[0] - 1
        max_iter = 50 * (m + self._nstd) + 1000
        status, it = _kernels.simplex_iterate(T, basis, self._nstd, max_iter, PIVOT_TOL)
        st = _STATUS[status]
        if st is not LPStatus.OPTIMAL:
            return LPResult(None, basis, st, it)
        xstd = np.zeros(self._nstd)
        xstd[basis] = T[:m, -1]
        x = self._off + self._E @ xstd[: self._nx]
        return LPResult(x, basis, st, it, float(c @ x))

    # -- introspection -----------------------------------------------------

    def residuals(self, x) -> float:
        """Largest constraint violation of ``x`` (0 when feasible)."""
        x = np.asarray(x, dtype=np.float64)
        r = [0.0]
        if self.A_ub.shape[0]:
            r.append(float(np.max(self.A_ub @ x - self.b_ub)))
        if self.A_eq.shape[0]:
            r.append(float(np.max(np.abs(self.A_eq @ x - self.b_eq))))
        r.append(float(np.max(self.lower - x)))
        r.append(float(np.max(x - self.upper)))
        return max(r)

    def active_constraints(self, x, tol: float = 1e-8) -> np.ndarray:
        """Rows (as a matrix) of all constraints tight at ``x``."""
        x = np.asarray(x, dtype=np.float64)
        rows = [self.A_eq] if self.A_eq.shape[0] else []
        if self.A_ub.shape[0]:
            rows.append(self.A_ub[np.abs(self.A_ub @ x - self.b_ub) <= tol])
        eye = np.eye(self.n)
        rows.append(eye[np.isfinite(self.lower) & (np.abs(x - self.lower) <= tol)])
        rows.append(eye[np.isfinite(self.upper) & (np.abs(x - self.upper) <= tol)])
        return np.vstack(rows) if rows else np.zeros((0, self.n))

    def description(self) -> str:
        return (
            f"HPolytope(n={self.n}, ub_rows={self.A_ub.shape[0]}, eq_rows={self.A_eq.shape[0]})"
        )

    # -- text format -------------------------------------------------------

    def to_text(self) -> str:
        """Render in the plain-text matrix format understood by :meth:`from_text`."""
        out = ["hpolytope 1", f"n {self.n}"]

        def block(tag, A, b):
            out.append(f"{tag} {A.shape[0]}")
            for row, rhs in zip(A, b):
                out.append(" ".join(repr(float(v)) for v in row) + " | " + repr(float(rhs)))

        block("ub", self.A_ub, self.b_ub)
        block("eq", self.A_eq, self.b_eq)
        out.append("lower " + " ".join(repr(float(v)) for v in self.lower))
        out.append("upper " + " ".join(repr(float(v)) for v in self.upper))
        return "\n".join(out) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "HPolytope":
        lines = [ln.strip() for ln in text.splitlines()]
        lines = [ln for ln in lines if ln and not ln.startswith("#")]
        try:
            it = iter(lines)
            head = next(it).split()
            if head != ["hpolytope", "1"]:
                raise ConfigurationError(f"unsupported header {' '.join(head)!r}")
            n = int(_expect(next(it), "n")[0])
            blocks = {}
            for tag in ("ub", "eq"):
                count = int(_expect(next(it), tag)[0])
                A = np.zeros((count, n))
                b = np.zeros(count)
                for i in range(count):
                    lhs, rhs = next(it).split("|")
                    A[i] = [float(t) for t in lhs.split()]
                    b[i] = float(rhs)
                blocks[tag] = (A, b)
            lower = np.array([float(t) for t in _expect(next(it), "lower")])
            upper = np.array([float(t) for t in _expect(next(it), "upper")])
        except (StopIteration, ValueError) as exc:
            raise ConfigurationError(f"malformed polytope text: {exc}") from exc
        return cls(n, *blocks["ub"], *blocks["eq"], lower, upper)


def _expect(line: str, tag: str) -> list[str]:
    parts = line.split()
    if not parts or parts[0] != tag:
        raise ConfigurationError(f"expected '{tag}' line, got {line!r}")
    return parts[1:]


def lp_solve(p: HPolytope, c) -> LPResult:
    """Optimal basic feasible solution of ``min c.x`` over ``p``."""
    return p.solve(c)
