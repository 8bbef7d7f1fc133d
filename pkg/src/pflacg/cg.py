"""Conditional-gradient methods: away-step, pairwise and lazified variants.

Every variant reuses the FW and away vertices found while evaluating the
strong Wolfe gap for its step, so an iteration costs one first-order query
and (except for lazy hits) one LMO call.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .activeset import (
    ActiveSet,
    Vertex,
    apply_away_step,
    apply_fw_step,
    apply_pairwise_step,
    away_lambda_max,
)
from .errors import ContractViolation
from .problem import Counters, ObjectiveOracle, eval_foo
from .records import Budget, TraceRecorder
from .region import FeasibleRegion

VARIANTS = ("afw", "pfw", "lazy-afw")
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def call_lmo(region: FeasibleRegion, c, counters: Counters | None = None) -> Vertex:
    if counters is not None:
        counters.lmo += 1
    return region.lmo(c)


@dataclass(frozen=True)
class WolfeGap:
    """Strong Wolfe gap at ``(x, S)`` with the vertices that attain it.

    ``fw_descent = <g, x - v>`` and ``away_descent = <g, s - x>``; their sum
    is ``w``.
    """

    w: float
    fw_vertex: Vertex
    away_vertex: Vertex
    grad: np.ndarray
    value: float
    fw_descent: float
    away_descent: float


def _gap_from(grad: np.ndarray, value: float, S: ActiveSet, v: Vertex) -> WolfeGap:
    gx = float(grad @ S.x)
    scores = S.matrix @ grad
    i = int(np.argmax(scores))
    fw_d = gx - float(grad @ v.coords)
    aw_d = float(scores[i]) - gx
    return WolfeGap(fw_d + aw_d, v, S.vertices[i], grad, value, fw_d, aw_d)


def strong_wolfe_gap(
    obj: ObjectiveOracle, region: FeasibleRegion, S: ActiveSet, counters: Counters | None = None
) -> WolfeGap:
    """``max_{s in S, z in X} <grad f(x), s - z>`` (one FOO and one LMO call)."""
    if S is None or len(S) == 0:
        raise ContractViolation("strong Wolfe gap needs a nonempty active set")
    value, grad = eval_foo(obj, S.x, counters)
    v = call_lmo(region, grad, counters)
    return _gap_from(grad, value, S, v)


@dataclass(frozen=True)
class StepChoice:
    kind: str  # "fw" | "away" | "pairwise" | "none"
    direction: np.ndarray
    lambda_max: float
    fw_vertex: Vertex | None = None
    away_vertex: Vertex | None = None


def afw_select_step(gap: WolfeGap, S: ActiveSet) -> StepChoice:
    """FW step when its descent is at least the away descent, else away."""
    x = S.x
    if gap.fw_descent >= gap.away_descent:
        return StepChoice("fw", gap.fw_vertex.coords - x, 1.0, gap.fw_vertex, gap.away_vertex)
    s = gap.away_vertex
    lmax = away_lambda_max(S.weight(s))
    return StepChoice("away", x - s.coords, lmax, gap.fw_vertex, s)


def pfw_step(gap: WolfeGap, S: ActiveSet) -> StepChoice:
    """Pairwise direction ``v - s``; at most the away weight can move."""
    d = gap.fw_vertex.coords - gap.away_vertex.coords
    return StepChoice("pairwise", d, S.weight(gap.away_vertex), gap.fw_vertex, gap.away_vertex)


def line_search(obj: ObjectiveOracle, x, d, lambda_max: float, grad=None) -> float:
    """Step in ``[0, lambda_max]`` minimizing ``f(x + t d)``."""
    x = np.asarray(x, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if not lambda_max > 0.0 or not np.any(d):
        return 0.0
    g = obj.gradient(x) if grad is None else grad
    slope = float(g @ d)
    if slope >= 0.0:
        return 0.0
    curv = obj.curvature(x, d)
    if curv is not None:
        if curv <= 0.0:
            return float(lambda_max) if math.isfinite(lambda_max) else 0.0
        return float(min(-slope / curv, lambda_max))
    return _golden_section(obj, x, d, lambda_max)


def _golden_section(obj, x, d, lambda_max) -> float:
    if not math.isfinite(lambda_max):
        # grow a bracket for the one unbounded case (away step from a singleton)
        hi = 1.0
        while obj.value(x + 2 * hi * d) < obj.value(x + hi * d) and hi < 1e12:
            hi *= 2.0
        lambda_max = 2.0 * hi
    lo, hi = 0.0, float(lambda_max)
    a = hi - GOLDEN * (hi - lo)
    b = lo + GOLDEN * (hi - lo)
    fa, fb = obj.value(x + a * d), obj.value(x + b * d)
    tol = 1e-10 * lambda_max
    while hi - lo > tol:
        if fa <= fb:
            hi, b, fb = b, a, fa
            a = hi - GOLDEN * (hi - lo)
            fa = obj.value(x + a * d)
        else:
            lo, a, fa = a, b, fb
            b = lo + GOLDEN * (hi - lo)
            fb = obj.value(x + b * d)
    t = 0.5 * (lo + hi)
    f0 = obj.value(x)
    cands = [(obj.value(x + t * d), t), (obj.value(x + lambda_max * d), lambda_max), (f0, 0.0)]
    return min(cands)[1]


def apply_step(S: ActiveSet, choice: StepChoice, lam: float) -> ActiveSet:
    if lam <= 0.0 or choice.kind == "none":
        return S
    if choice.kind == "fw":
        return apply_fw_step(S, choice.fw_vertex, lam)
    if choice.kind == "away":
        return apply_away_step(S, choice.away_vertex, min(lam, choice.lambda_max))
    return apply_pairwise_step(S, choice.fw_vertex, choice.away_vertex, min(lam, choice.lambda_max))


@dataclass
class LazyState:
    """Vertex cache and threshold for the lazified baseline."""

    phi: float
    cache: "OrderedDict[bytes, Vertex]" = field(default_factory=OrderedDict)
    capacity: int = 256

    def remember(self, v: Vertex) -> None:
        self.cache[v.key] = v
        self.cache.move_to_end(v.key)
        while len(self.cache) > self.capacity:
            self.cache.popitem(last=False)


def lazy_afw_step(
    obj: ObjectiveOracle,
    region: FeasibleRegion,
    S: ActiveSet,
    grad: np.ndarray,
    lazy: LazyState,
    counters: Counters | None = None,
) -> StepChoice:
    """Lazified AFW direction.

    A cached vertex (or the away vertex) making progress at least ``phi``
    is used without calling the LMO.  Otherwise the true LMO is queried; if
    it also falls short, ``phi`` is halved and no step is taken.
    """
    if not lazy.phi > 0.0:
        raise ContractViolation("lazy threshold must be positive")
    x = S.x
    gx = float(grad @ x)
    scores = S.matrix @ grad
    i = int(np.argmax(scores))
    s = S.vertices[i]
    away_val = float(scores[i]) - gx

    best_v, fw_val = None, -math.inf
    if lazy.cache:
        cached = list(lazy.cache.values())
        vals = gx - np.array([grad @ v.coords for v in cached])
        j = int(np.argmax(vals))
        best_v, fw_val = cached[j], float(vals[j])
    if max(fw_val, away_val) < lazy.phi:
        v = call_lmo(region, grad, counters)
        lazy.remember(v)
        val = gx - float(grad @ v.coords)
        if val > fw_val:
            best_v, fw_val = v, val
        if max(fw_val, away_val) < lazy.phi:
            lazy.phi /= 2.0
            return StepChoice("none", np.zeros_like(x), 0.0, best_v, s)
    if best_v is not None and fw_val >= away_val:
        return StepChoice("fw", best_v.coords - x, 1.0, best_v, s)
    return StepChoice("away", x - s.coords, away_lambda_max(S.weight(s)), best_v, s)


@dataclass
class StepInfo:
    kind: str
    lam: float
    drop: bool


class CGStream:
    """Stateful conditional-gradient iterator.

    ``gap()`` evaluates (and caches) the strong Wolfe gap at the current
    iterate; ``step()`` advances once using the cached gap data.  For the
    lazy variant the gap is a monitoring quantity whose LMO call is not
    counted, since the algorithm itself would not have made it.
    """

    def __init__(
        self,
        obj: ObjectiveOracle,
        region: FeasibleRegion,
        active: ActiveSet,
        variant: str = "afw",
        counters: Counters | None = None,
        lazy_capacity: int = 256,
    ):
        if variant not in VARIANTS:
            raise ContractViolation(f"unknown CG variant {variant!r}")
        self.obj = obj
        self.region = region
        self.active = active
        self.variant = variant
        self.counters = Counters() if counters is None else counters
        self.iteration = 0
        self._gap: WolfeGap | None = None
        self.lazy = LazyState(0.0, capacity=lazy_capacity) if variant == "lazy-afw" else None

    def gap(self) -> WolfeGap:
        if self._gap is None:
            if self.lazy is None:
                self._gap = strong_wolfe_gap(self.obj, self.region, self.active, self.counters)
            else:
                value, grad = eval_foo(self.obj, self.active.x, self.counters)
                v = self.region.lmo(grad)
                self.lazy.remember(v)
                self._gap = _gap_from(grad, value, self.active, v)
                if self.lazy.phi == 0.0:
                    self.lazy.phi = max(self._gap.w / 2.0, 1e-300)
        return self._gap

    def reseed(self, active: ActiveSet, gap: WolfeGap | None = None) -> None:
        self.active = active
        self._gap = gap
        if self.lazy is not None and gap is not None:
            self.lazy.phi = max(gap.w / 2.0, 1e-300)

    def choose(self) -> StepChoice:
        gap = self.gap()
        if self.variant == "afw":
            return afw_select_step(gap, self.active)
        if self.variant == "pfw":
            return pfw_step(gap, self.active)
        return lazy_afw_step(self.obj, self.region, self.active, gap.grad, self.lazy, self.counters)

    def step(self) -> StepInfo:
        gap = self.gap()
        choice = self.choose()
        lam = 0.0
        if choice.kind != "none":
            lam = line_search(self.obj, self.active.x, choice.direction, choice.lambda_max, gap.grad)
        before = len(self.active)
        self.active = apply_step(self.active, choice, lam)
        self._gap = None
        self.iteration += 1
        return StepInfo(choice.kind, lam, len(self.active) < before)


@dataclass
class AFWResult:
    active: ActiveSet
    w: float
    trace: TraceRecorder
    iterations: int
    exhausted: bool


def afw_run(
    obj: ObjectiveOracle,
    region: FeasibleRegion,
    x0: ActiveSet,
    budget: Budget | None = None,
    variant: str = "afw",
    counters: Counters | None = None,
) -> AFWResult:
    """Run until the strong Wolfe gap halves relative to its start value."""
    budget = budget or Budget()
    clock = budget.start()
    stream = CGStream(obj, region, x0, variant, counters)
    rec = TraceRecorder(variant, "afw_run", clock)
    g = stream.gap()
    w0 = g.w
    rec.add(0, g.value, g.w, len(stream.active), stream.counters.lmo, stream.counters.foo)
    exhausted = False
    while g.w > w0 / 2.0:
        if clock.exhausted(stream.iteration):
            exhausted = True
            break
        stream.step()
        g = stream.gap()
        rec.add(stream.iteration, g.value, g.w, len(stream.active), stream.counters.lmo, stream.counters.foo)
    return AFWResult(stream.active, g.w, rec, stream.iteration, exhausted)


@dataclass
class RunResult:
    """Outcome of a complete algorithm run."""

    x: np.ndarray
    active: ActiveSet
    w: float
    f: float
    iterations: int
    converged: bool
    trace: TraceRecorder
    counters: Counters
    extra: dict = field(default_factory=dict)


def run_cg(
    obj: ObjectiveOracle,
    region: FeasibleRegion,
    x0: Vertex,
    epsilon: float,
    variant: str = "afw",
    budget: Budget | None = None,
    run_id: str = "run",
) -> RunResult:
    """Restarted CG: repeated halving epochs until ``w <= epsilon``.

    Each time the gap halves relative to the epoch start a new epoch begins
    (the row carries ``restart=1``); the iterate and active set carry over.
    """
    budget = budget or Budget()
    clock = budget.start()
    stream = CGStream(obj, region, ActiveSet.from_vertex(x0), variant)
    rec = TraceRecorder(variant, run_id, clock)
    g = stream.gap()
    w_epoch = g.w
    epoch = 0
    c = stream.counters
    rec.add(0, g.value, g.w, len(stream.active), c.lmo, c.foo)
    while g.w > epsilon and not clock.exhausted(stream.iteration):
        stream.step()
        g = stream.gap()
        restart = g.w <= w_epoch / 2.0
        if restart:
            epoch += 1
            w_epoch = g.w
        rec.add(stream.iteration, g.value, g.w, len(stream.active), c.lmo, c.foo, restart, epoch)
    return RunResult(
        stream.active.x.copy(), stream.active, g.w, g.value, stream.iteration, g.w <= epsilon, rec, c
    )
