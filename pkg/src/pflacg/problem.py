"""Objective oracles and the experiment generators.

Generated objectives have the form ``f(x) = 0.5 x'(M'M + alpha I)x + b'x``
with ``M`` and ``b`` drawn uniformly.  Randomness comes from
:class:`PortableRNG`, which turns raw PCG64 output into floats and
shuffles itself so that a seed always produces the same problem,
independent of numpy's distribution code.
"""

from __future__ import annotations

import configparser
from io import StringIO
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field, fields
from typing import Any, NamedTuple

import numpy as np

from .activeset import Vertex
from .errors import ConfigurationError, DegenerateInputError, DimensionError
from .region import (
    FeasibleRegion,
    MergedL1Ball,
    PolytopeRegion,
    ProbabilitySimplex,
    build_birkhoff_region,
)

KINDS = ("simplex", "structured-lasso", "constrained-birkhoff", "custom")


# ---------------------------------------------------------------------------
# oracles
# ---------------------------------------------------------------------------


class ObjectiveOracle(ABC):
    """First-order oracle for a smooth convex function on R^n."""

    dim: int

    @abstractmethod
    def value(self, x: np.ndarray) -> float: ...

    @abstractmethod
    def gradient(self, x: np.ndarray) -> np.ndarray: ...

    def value_and_gradient(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        return self.value(x), self.gradient(x)

    def curvature(self, x: np.ndarray, d: np.ndarray) -> float | None:
        """``d' H(x) d`` when cheaply available, else ``None``."""
        return None

    def bregman(self, x: np.ndarray, y: np.ndarray) -> float:
        """``f(y) - f(x) - <grad f(x), y - x>``."""
        return self.value(y) - self.value(x) - float(self.gradient(x) @ (y - x))

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise DimensionError(f"point has shape {x.shape}, expected ({self.dim},)")
        return x


class QuadraticObjective(ObjectiveOracle):
    """``f(x) = 0.5 x'Qx + b'x`` with symmetric PSD ``Q``."""

    def __init__(self, Q, b=None):
        Q = np.array(Q, dtype=np.float64)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise DimensionError("Q must be square")
        n = Q.shape[0]
        scale = max(1.0, float(np.abs(Q).max())) if Q.size else 1.0
        if np.abs(Q - Q.T).max(initial=0.0) > 1e-12 * scale:
            raise DegenerateInputError("Q is not symmetric")
        b = np.zeros(n) if b is None else np.array(b, dtype=np.float64)
        if b.shape != (n,):
            raise DimensionError("b must have one entry per row of Q")
        Q.setflags(write=False)
        b.setflags(write=False)
        self.Q = Q
        self.b = b
        self.dim = n

    def value(self, x):
        x = self.check_point(x)
        return float(0.5 * x @ (self.Q @ x) + self.b @ x)

    def gradient(self, x):
        x = self.check_point(x)
        return self.Q @ x + self.b

    def value_and_gradient(self, x):
        x = self.check_point(x)
        qx = self.Q @ x
        return float(0.5 * x @ qx + self.b @ x), qx + self.b

    def curvature(self, x, d):
        d = self.check_point(d)
        return float(d @ (self.Q @ d))

    def bregman(self, x, y):
        d = self.check_point(y) - self.check_point(x)
        return 0.5 * float(d @ (self.Q @ d))


@dataclass
class Counters:
    """Oracle call tallies owned by one algorithm run."""

    foo: int = 0
    lmo: int = 0

    def merge(self, other: "Counters") -> "Counters":
        return Counters(self.foo + other.foo, self.lmo + other.lmo)


def eval_foo(obj: ObjectiveOracle, x, counters: Counters | None = None) -> tuple[float, np.ndarray]:
    """Value and gradient at ``x``, counted as one first-order query."""
    x = obj.check_point(x)
    if counters is not None:
        counters.foo += 1
    return obj.value_and_gradient(x)


def curvature_along(obj: ObjectiveOracle, x, d) -> float | None:
    d = obj.check_point(d)
    if not np.any(d):
        raise DegenerateInputError("direction must be nonzero")
    return obj.curvature(obj.check_point(x), d)


def sigma0_estimate(obj: ObjectiveOracle, x, y) -> float:
    """Curvature estimate ``2 D_f(x, y) / ||y - x||^2``, which lies in [m, L]."""
    x = obj.check_point(x)
    y = obj.check_point(y)
    d = y - x
    nd2 = float(d @ d)
    if nd2 < 1e-28:
        raise DegenerateInputError("sigma0_estimate needs two distinct points")
    return 2.0 * obj.bregman(x, y) / nd2


# ---------------------------------------------------------------------------
# randomness
# ---------------------------------------------------------------------------


class PortableRNG:
    """Seeded PCG64 stream with our own float and shuffle conversions.

    Floats are ``(raw >> 11) * 2**-53`` from the raw 64-bit outputs of
    numpy's PCG64 bit generator (whose stream is fixed by its seeding
    algorithm), so results do not depend on numpy's sampling routines.
    """

    def __init__(self, seed: int):
        self._bg = np.random.PCG64(int(seed) & ((1 << 64) - 1))

    def raw(self, size: int) -> np.ndarray:
        return self._bg.random_raw(size).astype(np.uint64)

    def uniform(self, size, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        shape = (size,) if np.isscalar(size) else tuple(size)
        count = int(np.prod(shape))
        u = (self.raw(count) >> np.uint64(11)).astype(np.float64) * (2.0**-53)
        return (low + (high - low) * u).reshape(shape)

    def below(self, n: int) -> int:
        return min(int(self.uniform(1)[0] * n), n - 1)

    def sample_distinct(self, n: int, k: int) -> list[int]:
        """``k`` distinct integers from ``range(n)`` by a partial Fisher-Yates."""
        if k > n:
            raise ConfigurationError(f"cannot sample {k} distinct values from {n}")
        pool = list(range(n))
        for i in range(k):
            j = i + self.below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]


# ---------------------------------------------------------------------------
# experiment specs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProblemSpec:
    """Parameters of a generated experiment.

    ``n`` is the ambient dimension; for the Birkhoff family it must be a
    perfect square (``n = n_side**2``).  Family-specific extras default to
    ``None`` and are filled from the family defaults by :meth:`resolved`.
    """

    kind: str
    n: int
    alpha: float
    seed: int = 0
    tau: float | None = None
    n_pairs: int | None = None
    n_zero: int | None = None
    n_cap: int | None = None
    cap: float | None = None
    top_eig: float | None = None
    b_high: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown problem kind {self.kind!r}")
        if self.n < 2:
            raise ConfigurationError("n must be at least 2")
        if not self.alpha > 0.0:
            raise ConfigurationError("alpha must be positive")

    def resolved(self) -> "ProblemSpec":
        d: dict[str, Any] = {}
        if self.kind == "simplex":
            d = {"b_high": 1.0}
        elif self.kind == "structured-lasso":
            d = {"b_high": 100.0, "tau": 1.0, "n_pairs": self.n // 8}
        elif self.kind == "constrained-birkhoff":
            d = {
                "b_high": 1.0,
                "n_zero": self.n // 10,
                "n_cap": self.n // 10,
                "cap": 0.5,
                "top_eig": 1e5,
            }
        vals = asdict(self)
        for k, v in d.items():
            if vals[k] is None:
                vals[k] = v
        return ProblemSpec(**vals)

    def to_dict(self) -> dict[str, Any]:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_mapping(cls, m) -> "ProblemSpec":
        known = {f.name: f for f in fields(cls)}
        kw: dict[str, Any] = {}
        for key, raw in m.items():
            key = key.strip().replace("-", "_")
            if key not in known:
                raise ConfigurationError(f"unknown problem key {key!r}")
            kw[key] = _coerce(key, raw)
        for req in ("kind", "n", "alpha"):
            if req not in kw:
                raise ConfigurationError(f"problem section is missing {req!r}")
        return cls(**kw)

    def to_config(self) -> str:
        cp = configparser.ConfigParser()
        cp["problem"] = {k: repr(v) if isinstance(v, float) else str(v) for k, v in self.to_dict().items()}
        buf = StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_config(cls, text: str) -> "ProblemSpec":
        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigurationError(str(exc)) from exc
        if "problem" not in cp:
            raise ConfigurationError("missing [problem] section")
        return cls.from_mapping(cp["problem"])


_INT_KEYS = {"n", "seed", "n_pairs", "n_zero", "n_cap"}
_FLOAT_KEYS = {"alpha", "tau", "cap", "top_eig", "b_high"}


def _coerce(key: str, raw):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    try:
        if key in _INT_KEYS:
            return int(raw, 0)
        if key in _FLOAT_KEYS:
            return float(raw)
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {key}: {raw!r}") from exc
    return raw


class Experiment(NamedTuple):
    objective: QuadraticObjective
    region: FeasibleRegion
    x0: Vertex


@dataclass
class GeneratedData:
    """Raw ingredients of a generated experiment (kept for inspection)."""

    spec: ProblemSpec
    pairs: list = field(default_factory=list)
    zero_idx: list = field(default_factory=list)
    cap_idx: list = field(default_factory=list)


def generate(spec: ProblemSpec) -> tuple[Experiment, GeneratedData]:
    """Build objective, region and start vertex, plus the sampled extras.

    Draw order from the seeded stream: ``M`` (row-major), ``b``, then the
    family's index samples, then the start direction.
    """
    s = spec.resolved()
    if s.kind == "custom":
        raise ConfigurationError("custom problems are built directly, not generated")
    n = s.n
    if s.kind == "constrained-birkhoff":
        side = int(round(np.sqrt(n)))
        if side * side != n:
            raise ConfigurationError("Birkhoff problems need n to be a perfect square")
    rng = PortableRNG(s.seed)
    M = rng.uniform((n, n))
    b = rng.uniform(n, 0.0, s.b_high)
    MtM = M.T @ M
    MtM = 0.5 * (MtM + MtM.T)
    data = GeneratedData(s)
    if s.kind == "simplex":
        region: FeasibleRegion = ProbabilitySimplex(n)
    elif s.kind == "structured-lasso":
        if 2 * s.n_pairs > n:
            raise ConfigurationError("too many merged pairs for the dimension")
        idx = rng.sample_distinct(n, 2 * s.n_pairs)
        data.pairs = [(idx[2 * i], idx[2 * i + 1]) for i in range(s.n_pairs)]
        region = MergedL1Ball(n, s.tau, data.pairs)
    else:
        idx = rng.sample_distinct(n, s.n_zero + s.n_cap)
        data.zero_idx = sorted(idx[: s.n_zero])
        data.cap_idx = sorted(idx[s.n_zero :])
        poly = build_birkhoff_region(side, data.zero_idx, data.cap_idx, s.cap)
        region = PolytopeRegion(poly, "birkhoff")
        top = float(np.linalg.eigvalsh(MtM)[-1])
        MtM = MtM * (s.top_eig / top)
    Q = MtM + s.alpha * np.eye(n)
    direction = rng.uniform(n, -1.0, 1.0)
    obj = QuadraticObjective(Q, b)
    x0 = region.lmo(direction)
    return Experiment(obj, region, x0), data


def gen_experiment(spec: ProblemSpec) -> Experiment:
    """Objective, region and deterministic start vertex for ``spec``."""
    return generate(spec)[0]


def alpha_for_kappa(n: int, kappa: float) -> float:
    """Shift giving roughly ``L/m = kappa`` for uniform ``M`` (top eigenvalue ~ n^2/4)."""
    return n * n / (4.0 * kappa)
