"""Feasible regions and their linear minimization oracles."""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Iterable, Sequence

import numpy as np

from .activeset import Vertex
from .errors import ConfigurationError, DimensionError, InternalConsistencyError
from .lp import HPolytope, LPResult, LPStatus, lp_solve

__all__ = [
    "FeasibleRegion",
    "ProbabilitySimplex",
    "MergedL1Ball",
    "PolytopeRegion",
    "HPolytope",
    "LPResult",
    "LPStatus",
    "lp_solve",
    "lmo_simplex",
    "lmo_merged_l1",
    "lmo_hpolytope",
    "build_birkhoff_region",
    "simplex_as_hpolytope",
]


def _check(c, n: int) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    if c.shape != (n,):
        raise DimensionError(f"direction has shape {c.shape}, expected ({n},)")
    return c


class FeasibleRegion(ABC):
    """A polytope accessed through its linear minimization oracle."""

    dim: int

    @abstractmethod
    def lmo(self, c) -> Vertex:
        """Vertex minimizing ``<c, x>``."""

    def contains(self, x, tol: float = 1e-9) -> bool:
        raise NotImplementedError

    def vertices(self) -> list[Vertex] | None:
        """All vertices, when cheap to enumerate; ``None`` otherwise."""
        return None

    @property
    def description(self) -> str:
        return type(self).__name__


def lmo_simplex(c) -> Vertex:
    """Unit-simplex LMO: the coordinate vector of the smallest entry (first on ties)."""
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 1 or c.size == 0:
        raise DimensionError("direction must be a non-empty vector")
    i = int(np.argmin(c))  # argmin returns the first minimizer
    e = np.zeros(c.shape[0])
    e[i] = 1.0
    return Vertex(e)


class ProbabilitySimplex(FeasibleRegion):
    def __init__(self, n: int):
        if n < 1:
            raise ConfigurationError("simplex dimension must be positive")
        self.dim = int(n)
        self._cache: dict[int, Vertex] = {}

    def lmo(self, c) -> Vertex:
        c = _check(c, self.dim)
        i = int(np.argmin(c))
        v = self._cache.get(i)
        if v is None:
            v = lmo_simplex(c)
            self._cache[i] = v
        return v

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=np.float64)
        return bool(x.min() >= -tol and abs(x.sum() - 1.0) <= tol)

    def vertices(self) -> list[Vertex]:
        return [lmo_simplex(-np.eye(self.dim)[i]) for i in range(self.dim)]

    @property
    def description(self) -> str:
        return f"simplex(n={self.dim})"


class MergedL1Ball(FeasibleRegion):
    """{x : ||x||_1 <= tau, x_i = x_j within each group}.

    In group coordinates this is a weighted l1 ball: a group of size ``w``
    whose common value is ``t`` contributes ``w |t|`` to the norm.  Groups
    are numbered in order of their smallest member.
    """

    def __init__(self, n: int, tau: float = 1.0, pairs: Iterable[Sequence[int]] = ()):
        if n < 1:
            raise ConfigurationError("dimension must be positive")
        if not tau > 0.0:
            raise ConfigurationError("radius must be positive")
        parent = list(range(n))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for pair in pairs:
            idx = [int(i) for i in pair]
            if any(i < 0 or i >= n for i in idx):
                raise ConfigurationError(f"pair {pair} out of range")
            for j in idx[1:]:
                ri, rj = find(idx[0]), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
        roots = [find(i) for i in range(n)]
        order = sorted(set(roots))
        gid = {r: g for g, r in enumerate(order)}
        self.dim = int(n)
        self.tau = float(tau)
        self.group_of = np.array([gid[r] for r in roots], dtype=np.int64)
        self.multiplicity = np.bincount(self.group_of).astype(np.float64)
        self.n_groups = len(order)
        self.group_of.setflags(write=False)
        self.multiplicity.setflags(write=False)

    def lmo(self, c) -> Vertex:
        return lmo_merged_l1(self, c)

    def vertex_for(self, g: int, sign: float) -> Vertex:
        x = np.where(self.group_of == g, sign * self.tau / self.multiplicity[g], 0.0)
        return Vertex(x)

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=np.float64)
        if np.abs(x).sum() > self.tau + tol:
            return False
        means = np.bincount(self.group_of, weights=x) / self.multiplicity
        return bool(np.abs(x - means[self.group_of]).max() <= tol)

    def vertices(self) -> list[Vertex]:
        return [self.vertex_for(g, s) for g in range(self.n_groups) for s in (1.0, -1.0)]

    @property
    def description(self) -> str:
        merged = int((self.multiplicity > 1).sum())
        return f"merged-l1(n={self.dim}, tau={self.tau!r}, merged_groups={merged})"


def lmo_merged_l1(region: MergedL1Ball, c) -> Vertex:
    """Closed-form LMO of the merged l1 ball via group scores."""
    c = _check(c, region.dim)
    s = np.bincount(region.group_of, weights=c, minlength=region.n_groups)
    score = np.abs(s) / region.multiplicity
    g = int(np.argmax(score))
    sign = 1.0 if s[g] == 0.0 else -float(np.sign(s[g]))
    return region.vertex_for(g, sign)


class PolytopeRegion(FeasibleRegion):
    """Generic polytope whose LMO is a simplex-method LP solve."""

    def __init__(self, poly: HPolytope, name: str = "hpolytope"):
        self.poly = poly
        self.dim = poly.n
        self.name = name

    def lmo(self, c) -> Vertex:
        return lmo_hpolytope(self.poly, c)

    def contains(self, x, tol: float = 1e-9) -> bool:
        return self.poly.residuals(x) <= tol

    @property
    def description(self) -> str:
        return f"{self.name}:{self.poly.description()}"


def lmo_hpolytope(p: HPolytope, c) -> Vertex:
    """LMO over an H-polytope: the optimal basic solution as a vertex."""
    c = _check(c, p.n)
    res = lp_solve(p, c)
    if res.status is not LPStatus.OPTIMAL:
        raise InternalConsistencyError(f"LMO over a polytope returned {res.status.value}")
    x = res.x.copy()
    x[np.abs(x) < 1e-13] = 0.0
    return Vertex(x)


def simplex_as_hpolytope(n: int) -> HPolytope:
    return HPolytope(n, A_eq=np.ones((1, n)), b_eq=[1.0])


def build_birkhoff_region(
    n_side: int, zero_idx: Iterable[int] = (), cap_idx: Iterable[int] = (), cap: float = 0.5
) -> HPolytope:
    """Doubly stochastic matrices (row-major flattening) with extra bounds."""
    zero = sorted({int(i) for i in zero_idx})
    capped = sorted({int(i) for i in cap_idx})
    n = n_side * n_side
    if set(zero) & set(capped):
        raise ConfigurationError("zero and capacity index sets overlap")
    if any(i < 0 or i >= n for i in zero + capped):
        raise ConfigurationError("index outside the matrix")
    A = np.zeros((2 * n_side, n))
    for r in range(n_side):
        A[r, r * n_side : (r + 1) * n_side] = 1.0
        A[n_side + r, r::n_side] = 1.0
    upper = np.full(n, np.inf)
    upper[zero] = 0.0
    upper[capped] = cap
    return HPolytope(n, A_eq=A, b_eq=np.ones(2 * n_side), lower=np.zeros(n), upper=upper)

