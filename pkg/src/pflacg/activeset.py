"""Barycentric iterates, simplex projection and the hull subproblem.

An :class:`ActiveSet` is an immutable snapshot: every update returns a new
object, which is what lets the two coupled streams exchange them freely.

The hull subproblem minimizes ``<g, u> + rho/2 ||u - c||^2`` over
``conv(S)``.  Writing ``u = V' lam`` with ``lam`` on the probability simplex
turns it into a small dense QP in ``lam`` that the APGD kernel solves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .errors import AccuracyNotReached, ContractViolation, DimensionError

DROP_TOL = 1e-12
KEY_SCALE = 1e10
EPS = np.finfo(float).eps

CRITERIA = ("fw-gap", "grad-map")


def project_simplex(v) -> np.ndarray:
    """Euclidean projection of ``v`` onto the unit simplex."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise DimensionError("project_simplex expects a non-empty vector")
    return _kernels.project_simplex(v)


def vertex_key(coords: np.ndarray) -> bytes:
    """Identity key: coordinates rounded on a 1e-10 grid."""
    q = np.rint(np.asarray(coords, dtype=np.float64) * KEY_SCALE).astype(np.int64)
    return q.tobytes()


class Vertex:
    """A polytope vertex with a stable identity key.

    Two vertices compare equal exactly when their keys match, i.e. when
    their coordinates agree on the quantization grid.
    """

    __slots__ = ("key", "coords", "label")

    def __init__(self, coords, key: bytes | None = None, label=None):
        c = np.array(coords, dtype=np.float64)
        c.setflags(write=False)
        self.coords = c
        self.key = vertex_key(c) if key is None else key
        self.label = label

    @property
    def dim(self) -> int:
        return self.coords.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, Vertex) and self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    def __repr__(self) -> str:
        if self.label is not None:
            return f"Vertex({self.label!r})"
        nz = np.flatnonzero(self.coords)
        if nz.size <= 4:
            body = ", ".join(f"{i}:{self.coords[i]:.6g}" for i in nz)
            return f"Vertex({{{body}}})"
        return f"Vertex(n={self.dim}, nnz={nz.size})"


def _normalize(weights: np.ndarray) -> np.ndarray:
    s = weights.sum()
    return weights / s


class ActiveSet:
    """Ordered vertices with barycentric weights; immutable.

    Weights below ``DROP_TOL`` are pruned and the rest renormalized on
    construction.  ``x`` is the cached point ``sum_i w_i v_i``.
    """

    def __init__(self, vertices: Sequence[Vertex], weights, *, prune: bool = True):
        w = np.array(weights, dtype=np.float64)
        verts = tuple(vertices)
        if w.ndim != 1 or w.shape[0] != len(verts):
            raise DimensionError("one weight per vertex is required")
        if not verts:
            raise ContractViolation("an active set needs at least one vertex")
        if np.any(~np.isfinite(w)) or np.any(w < -1e-9):
            raise ContractViolation("weights must be finite and non-negative")
        if not np.maximum(w, 0.0).sum() > 0.0:
            raise ContractViolation("weights sum to zero")
        if prune:
            # prune after normalizing: the final renormalization only raises weights
            w = _normalize(np.maximum(w, 0.0))
            keep = w >= DROP_TOL
            if not keep.all():
                verts = tuple(v for v, k in zip(verts, keep) if k)
                w = w[keep]
        w = _normalize(np.maximum(w, 0.0))
        w.setflags(write=False)
        index = {}
        for i, v in enumerate(verts):
            if v.key in index:
                raise ContractViolation(f"duplicate vertex {v!r} in active set")
            index[v.key] = i
        self.vertices = verts
        self.weights = w
        self._index = index
        self._V = None
        self._x = None

    @classmethod
    def from_vertex(cls, v: Vertex) -> "ActiveSet":
        return cls((v,), np.ones(1))

    @classmethod
    def merged(cls, vertices: Iterable[Vertex], weights) -> "ActiveSet":
        """Build an active set, summing weights of repeated vertices."""
        acc: dict[bytes, float] = {}
        order: list[Vertex] = []
        for v, w in zip(vertices, weights):
            if v.key not in acc:
                acc[v.key] = 0.0
                order.append(v)
            acc[v.key] += float(w)
        return cls(order, [acc[v.key] for v in order])

    def __len__(self) -> int:
        return len(self.vertices)

    def __contains__(self, v: Vertex) -> bool:
        return v.key in self._index

    def index(self, v: Vertex) -> int:
        return self._index[v.key]

    def weight(self, v: Vertex) -> float:
        i = self._index.get(v.key)
        return 0.0 if i is None else float(self.weights[i])

    @property
    def dim(self) -> int:
        return self.vertices[0].dim

    @property
    def matrix(self) -> np.ndarray:
        """Vertex coordinates stacked as rows (k x n)."""
        if self._V is None:
            V = np.vstack([v.coords for v in self.vertices])
            V.setflags(write=False)
            self._V = V
        return self._V

    @property
    def x(self) -> np.ndarray:
        if self._x is None:
            x = self.weights @ self.matrix
            x.setflags(write=False)
            self._x = x
        return self._x

    @cached_property
    def hull(self) -> "Hull":
        return Hull(self.vertices)

    def __repr__(self) -> str:
        return f"ActiveSet(size={len(self)})"


def apply_fw_step(S: ActiveSet, v: Vertex, lam: float) -> ActiveSet:
    """Move ``lam`` of the mass towards vertex ``v``."""
    if not (-1e-15 <= lam <= 1.0 + 1e-12):
        raise ContractViolation(f"FW step size {lam} outside [0, 1]")
    lam = min(max(lam, 0.0), 1.0)
    if lam == 0.0:
        return S
    if lam >= 1.0:
        return ActiveSet.from_vertex(v)
    w = S.weights * (1.0 - lam)
    if v in S:
        w = w.copy()
        w[S.index(v)] += lam
        return ActiveSet(S.vertices, w)
    return ActiveSet(S.vertices + (v,), np.append(w, lam))


def away_lambda_max(alpha_s: float) -> float:
    return math.inf if alpha_s >= 1.0 else alpha_s / (1.0 - alpha_s)


def apply_away_step(S: ActiveSet, s: Vertex, lam: float) -> ActiveSet:
    """Move mass away from vertex ``s``; ``lam`` at its maximum drops ``s``."""
    if s not in S:
        raise ContractViolation("away vertex must belong to the active set")
    a = S.weight(s)
    lmax = away_lambda_max(a)
    if lam < -1e-15 or lam > lmax + 1e-12:
        raise ContractViolation(f"away step {lam} exceeds lambda_max={lmax}")
    if lam <= 0.0:
        return S
    i = S.index(s)
    w = S.weights * (1.0 + lam)
    w[i] -= lam
    if lam >= lmax * (1.0 - 1e-12) or w[i] < DROP_TOL:
        w[i] = 0.0
    return ActiveSet(S.vertices, w)


def apply_pairwise_step(S: ActiveSet, v: Vertex, s: Vertex, lam: float) -> ActiveSet:
    """Transfer weight ``lam`` from ``s`` to ``v``."""
    if s not in S:
        raise ContractViolation("away vertex must belong to the active set")
    a = S.weight(s)
    if lam < -1e-15 or lam > a + 1e-12:
        raise ContractViolation(f"pairwise step {lam} exceeds weight {a}")
    if lam <= 0.0 or v == s:
        return S
    lam = min(lam, a)
    w = S.weights.copy()
    i = S.index(s)
    w[i] = 0.0 if lam >= a * (1.0 - 1e-12) else w[i] - lam
    if v in S:
        w[S.index(v)] += lam
        return ActiveSet(S.vertices, w)
    return ActiveSet(S.vertices + (v,), np.append(w, lam))


# ---------------------------------------------------------------------------
# hull geometry
# ---------------------------------------------------------------------------


def power_iteration(B: np.ndarray, iters: int = 20, rtol: float = 1e-3) -> float:
    """Top eigenvalue estimate of a PSD matrix (deterministic start)."""
    k = B.shape[0]
    x = np.ones(k) + np.arange(k) / max(k, 1)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iters):
        y = B @ x
        nrm = float(np.linalg.norm(y))
        if nrm == 0.0:
            return 0.0
        new = float(x @ y)
        x = y / nrm
        if est > 0.0 and abs(new - est) <= rtol * est:
            est = new
            break
        est = new
    return est


def _tangent_basis(k: int) -> np.ndarray:
    """Orthonormal basis (k x (k-1)) of the vectors summing to zero."""
    h = np.eye(k)[:, : k - 1]
    h = h - 1.0 / k
    q, _ = np.linalg.qr(h)
    return q


@dataclass(frozen=True)
class Hull:
    """Vertex matrix of conv(S) with cached spectral data for the subproblem."""

    vertices: tuple

    @cached_property
    def V(self) -> np.ndarray:
        return np.vstack([v.coords for v in self.vertices])

    @property
    def size(self) -> int:
        return len(self.vertices)

    @cached_property
    def gram(self) -> np.ndarray:
        V = self.V
        return V @ V.T

    @cached_property
    def _spectrum(self) -> tuple[float, float]:
        k = self.size
        if k == 1:
            return 0.0, 0.0
        Q = _tangent_basis(k)
        M = Q.T @ self.gram @ Q
        ev = np.linalg.eigvalsh(0.5 * (M + M.T))
        return float(ev[0]), float(ev[-1])

    @cached_property
    def lipschitz(self) -> float:
        """Upper bound on the curvature of ``lam -> ||V' lam||^2 / 2``."""
        if self.size == 1:
            return 1.0
        est = 1.1 * power_iteration(self.gram)
        # power iteration may stall below the tangent-space maximum
        return max(est, self._spectrum[1] * (1.0 + 1e-9), 1e-300)

    @cached_property
    def mu(self) -> float:
        """Smallest curvature over directions that keep the weights summing to 1."""
        return max(self._spectrum[0], 0.0)

    @cached_property
    def strongly_convex(self) -> bool:
        mu, top = self._spectrum
        return self.size > 1 and mu > 1e-12 * max(1.0, top)

    def point(self, lam: np.ndarray) -> np.ndarray:
        return lam @ self.V


@dataclass
class HullSubproblem:
    """min over conv(S) of <g, u> + rho/2 ||u - c||^2 to additive accuracy eps.

    ``lam0`` warm-starts the solver.  ``dyn_coef`` and ``lam_ref`` enable a
    relative target ``max(eps, dyn_coef * ||V'(lam - lam_ref)||^2)`` that is
    re-evaluated at every iterate.
    """

    hull: Hull
    g: np.ndarray
    c: np.ndarray
    rho: float
    eps: float
    criterion: str = "grad-map"
    lam0: np.ndarray | None = None
    dyn_coef: float = 0.0
    lam_ref: np.ndarray | None = None

    def __post_init__(self):
        if not self.rho > 0.0:
            raise ContractViolation("rho must be positive")
        if not self.eps >= 0.0:
            raise ContractViolation("eps must be non-negative")
        if self.criterion not in CRITERIA:
            raise ContractViolation(f"unknown criterion {self.criterion!r}")

    def objective(self, lam: np.ndarray) -> float:
        u = self.hull.point(lam)
        d = u - self.c
        return float(self.g @ u + 0.5 * self.rho * (d @ d))


@dataclass
class HullSolution:
    lam: np.ndarray
    u: np.ndarray
    certificate: float
    target: float
    iterations: int = 0
    floored: bool = False
    criterion: str = "fw-gap"
    extra: dict = field(default_factory=dict)


def _iteration_cap(kappa: float, ratio: float) -> int:
    logs = max(1.0, math.log(1.0 / max(ratio, 1e-300)))
    cap = 10.0 * (1.0 + math.sqrt(kappa)) * logs
    return int(min(max(cap, 100.0), 200_000.0))


def solve_hull_subproblem(p: HullSubproblem) -> HullSolution:
    """Minimize the hull subproblem and certify its additive accuracy.

    The requested accuracy is raised to a rounding floor estimated from the
    data scale; ``floored`` reports when that happened.  Raises
    :class:`AccuracyNotReached` if the iteration cap is hit first.
    """
    hull = p.hull
    k = hull.size
    if k == 1:
        lam = np.ones(1)
        return HullSolution(lam, hull.V[0].copy(), 0.0, p.eps, 0, False, p.criterion)
    V = hull.V
    B = hull.gram
    q = V @ p.c - (V @ p.g) / p.rho
    use_gm = p.criterion == "grad-map" and hull.strongly_convex
    crit = _kernels.CRIT_GM if use_gm else _kernels.CRIT_FW
    mu = hull.mu if use_gm else 0.0

    # rounding floor of the certificate for gradients of size rho*(|B|+|q|)
    scale = p.rho * (np.abs(B).max() + np.abs(q).max())
    g_err = 4.0 * k * EPS * scale
    floor = 4.0 * g_err
    if use_gm:
        floor = min(floor, k * g_err * g_err / (2.0 * p.rho * mu))
    target = max(p.eps, floor)

    lam0 = np.full(k, 1.0 / k) if p.lam0 is None else np.asarray(p.lam0, dtype=np.float64)
    if lam0.shape != (k,):
        raise DimensionError("warm start has the wrong length")
    lam_ref = lam0 if p.lam_ref is None else np.asarray(p.lam_ref, dtype=np.float64)

    lip = hull.lipschitz
    if use_gm:
        kappa = lip / mu
    else:
        kappa = 2.0 * p.rho * lip / max(target, 1e-300)
    # rough initial certificate bound for the log factor
    grad0 = p.rho * (B @ lam0 - q)
    cert0 = float(lam0 @ grad0 - grad0.min())
    cap = _iteration_cap(kappa, target / max(cert0, target))
    lam, cert, it, status = _kernels.apgd_simplex_qp(
        B, q, p.rho, lam0, target, p.dyn_coef, lam_ref, crit, mu, lip, cap
    )
    if status != _kernels.STATUS_OK:
        raise AccuracyNotReached(
            f"hull subproblem (|S|={k}) stalled at certificate {cert:.3e} > {target:.3e}",
            cert,
            target,
            lam,
        )
    u = lam @ V
    return HullSolution(
        lam, u, cert, target, it, target > p.eps, "grad-map" if use_gm else "fw-gap"
    )


def inner_solver_apgd(
    hull: Hull,
    g,
    c,
    rho: float,
    eps: float,
    criterion: str = "grad-map",
    lam0=None,
) -> np.ndarray:
    """Barycentric minimizer of the hull subproblem (convenience wrapper)."""
    sol = solve_hull_subproblem(
        HullSubproblem(hull, np.asarray(g, float), np.asarray(c, float), rho, eps, criterion, lam0)
    )
    return sol.lam


def project_onto_hull(hull: Hull, x, eps: float = 1e-24, lam0=None) -> HullSolution:
    """Euclidean projection of ``x`` onto conv(S)."""
    x = np.asarray(x, dtype=np.float64)
    return solve_hull_subproblem(HullSubproblem(hull, np.zeros_like(x), x, 1.0, eps, "grad-map", lam0))


def hull_residual(hull: Hull, x) -> float:
    """Distance from ``x`` to conv(S), up to solver accuracy."""
    sol = project_onto_hull(hull, x)
    return float(np.linalg.norm(sol.u - np.asarray(x, dtype=np.float64)))
