"""Coupling of restarted conditional gradients with restarted ACC.

Two streams run side by side: a CG stream over the whole polytope and an
accelerated stream over the hull of an active set handed over by the CG
stream.  Whenever the CG gap halves (a *restart*), both candidates are
scored by their strong Wolfe gap and the exchange rule in
:func:`restart_decision` decides which one becomes the output and which
stream gets reseeded.

``lockstep`` mode interleaves one CG step with one accelerated step and is
deterministic.  ``parallel`` mode moves the accelerated stream to a worker
thread that publishes immutable snapshots; the CG thread never waits for it.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass, field

import numpy as np

from .accel import AccOutput, AccStream
from .activeset import ActiveSet, Hull, Vertex
from .cg import CGStream, RunResult, WolfeGap, strong_wolfe_gap
from .errors import ConfigurationError, PflacgError
from .problem import Counters, ObjectiveOracle
from .records import Budget, TraceRecorder
from .region import FeasibleRegion

MODES = ("lockstep", "parallel")
COUPLED_VARIANTS = {"pflacg": "afw", "pflacg-pfw": "pfw", "pflacg-lazy": "lazy-afw"}


@dataclass(frozen=True)
class CouplingSnapshot:
    """An iterate with its support, scored by the strong Wolfe gap."""

    x: np.ndarray
    S: ActiveSet
    w: float
    source: str  # "afw" | "acc"
    stamp: int
    f: float = float("nan")

    @classmethod
    def score(
        cls, obj: ObjectiveOracle, region: FeasibleRegion, S: ActiveSet, source: str, stamp: int, counters=None
    ) -> "CouplingSnapshot":
        g = strong_wolfe_gap(obj, region, S, counters)
        return cls(S.x, S, g.w, source, stamp, g.value)

    @classmethod
    def from_gap(cls, S: ActiveSet, gap: WolfeGap, source: str, stamp: int) -> "CouplingSnapshot":
        return cls(S.x, S, gap.w, source, stamp, gap.value)


class Decision(enum.Enum):
    ADOPT_AFW = "adopt-afw"
    ADOPT_ACC = "adopt-acc"
    ADOPT_ACC_RESEED = "adopt-acc+reseed"


def restart_decision(afw: CouplingSnapshot, acc: CouplingSnapshot, acc_prev_w: float) -> Decision:
    """Exchange rule at a restart.

    The CG candidate wins when its gap is at most both the ACC gap and half
    the previous ACC gap.  Otherwise the ACC candidate wins, and the CG
    stream is restarted from it when its support is no larger.
    """
    if afw.w <= min(acc.w, acc_prev_w / 2.0):
        return Decision.ADOPT_AFW
    if len(acc.S) <= len(afw.S):
        return Decision.ADOPT_ACC_RESEED
    return Decision.ADOPT_ACC


@dataclass
class CouplingConfig:
    epsilon: float
    mode: str = "lockstep"
    budget: Budget = field(default_factory=Budget)
    variant: str = "afw"
    criterion: str = "grad-map"
    acc_errors: str = "raise"  # or "idle": park ACC until the next reseed

    def __post_init__(self):
        if not self.epsilon > 0.0:
            raise ConfigurationError("epsilon must be positive")
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if self.acc_errors not in ("raise", "idle"):
            raise ConfigurationError("acc_errors must be 'raise' or 'idle'")


@dataclass(frozen=True)
class RestartEvent:
    epoch: int
    iteration: int
    w_afw: float
    w_acc: float
    w_acc_prev: float
    w_out: float
    decision: Decision
    guarded: bool  # ACC picked by the rule but scored worse than AFW
    out_source: str
    acc_stamp: int
    acc_hull: Hull  # hull the ACC stream runs on after the decision


class _AccWorker(threading.Thread):
    """Runs an :class:`AccStream` and publishes its completed outputs."""

    def __init__(self, stream: AccStream, acc_errors: str):
        super().__init__(daemon=True, name="pflacg-acc")
        self.stream = stream
        self.acc_errors = acc_errors
        self._lock = threading.Lock()
        self._pending = None
        self._wake = threading.Event()
        self._halt = threading.Event()
        self.published: AccOutput = stream.output
        self.error: BaseException | None = None

    def request_swap(self, active: ActiveSet, stamp: int) -> None:
        with self._lock:
            self._pending = (active, stamp)
        self._wake.set()

    def stop(self) -> None:
        self._halt.set()
        self._wake.set()

    def run(self) -> None:
        s = self.stream
        while not self._halt.is_set():
            self._wake.clear()
            with self._lock:
                req, self._pending = self._pending, None
            if req is not None:
                s.reseed(*req)
                self.published = s.output
            if not s.active:
                self._wake.wait(0.05)
                continue
            try:
                if s.step():
                    self.published = s.output
            except PflacgError as exc:
                if self.acc_errors == "raise":
                    self.error = exc
                    return
                s.idle = True


def pflacg_run(
    obj: ObjectiveOracle,
    region: FeasibleRegion,
    x0: Vertex,
    cfg: CouplingConfig,
    run_id: str = "run",
    algorithm: str | None = None,
) -> RunResult:
    """Run the coupled method from vertex ``x0`` until ``w_out <= epsilon``.

    Trace rows report the output candidate, so ``wolfe_gap`` is
    non-increasing.  ``extra["restarts"]`` holds one :class:`RestartEvent`
    per restart.
    """
    tag = algorithm or {v: k for k, v in COUPLED_VARIANTS.items()}[cfg.variant]
    clock = cfg.budget.start()
    c_afw, c_acc, c_coord = Counters(), Counters(), Counters()
    S0 = ActiveSet.from_vertex(x0)
    cg = CGStream(obj, region, S0, cfg.variant, c_afw)
    gap = cg.gap()
    out = CouplingSnapshot.from_gap(S0, gap, "afw", 0)
    w_afw_prev = w_acc_prev = gap.w
    epoch = 0
    stream = AccStream(obj, S0, cfg.criterion, c_acc)
    worker = None
    if cfg.mode == "parallel":
        worker = _AccWorker(stream, cfg.acc_errors)
        worker.start()

    def totals():
        return (c_afw.lmo + c_acc.lmo + c_coord.lmo, c_afw.foo + c_acc.foo + c_coord.foo)

    rec = TraceRecorder(tag, run_id, clock)
    rec.add(0, out.f, out.w, len(out.S), *totals())
    restarts: list[RestartEvent] = []
    try:
        while out.w > cfg.epsilon and not clock.exhausted(cg.iteration):
            cg.step()
            if worker is None:
                if stream.active:
                    try:
                        stream.step()
                    except PflacgError as exc:
                        if cfg.acc_errors == "raise":
                            exc.epoch = epoch
                            raise
                        stream.idle = True
            elif worker.error is not None:
                worker.error.epoch = epoch
                raise worker.error
            gap = cg.gap()
            fired = gap.w <= w_afw_prev / 2.0
            if fired:
                epoch += 1
                w_afw_prev = gap.w
                afw = CouplingSnapshot.from_gap(cg.active, gap, "afw", epoch)
                published = worker.published if worker is not None else stream.output
                acc = CouplingSnapshot.score(
                    obj, region, published.active_set(), "acc", published.stamp, c_coord
                )
                decision = restart_decision(afw, acc, w_acc_prev)
                w_acc_prev_old, w_acc_prev = w_acc_prev, acc.w
                guarded = decision is not Decision.ADOPT_AFW and acc.w > afw.w
                if decision is Decision.ADOPT_AFW:
                    candidate = afw
                    if worker is None:
                        stream.reseed(cg.active, epoch)
                    else:
                        worker.request_swap(cg.active, epoch)
                    acc_hull = cg.active.hull
                else:
                    candidate = afw if guarded else acc
                    if decision is Decision.ADOPT_ACC_RESEED and not guarded:
                        cg.reseed(acc.S)
                    acc_hull = published.hull
                if candidate.w <= out.w:
                    out = candidate
                restarts.append(
                    RestartEvent(
                        epoch,
                        cg.iteration,
                        afw.w,
                        acc.w,
                        w_acc_prev_old,
                        out.w,
                        decision,
                        guarded,
                        out.source,
                        acc.stamp,
                        acc_hull,
                    )
                )
            rec.add(cg.iteration, out.f, out.w, len(out.S), *totals(), restart=fired, epoch=epoch)
    finally:
        if worker is not None:
            worker.stop()
            worker.join()

    counters = c_afw.merge(c_acc).merge(c_coord)
    extra = {
        "restarts": restarts,
        "acc_calls": stream.calls,
        "acc_iterations": stream.total_iterations,
        "counters_afw": c_afw,
        "counters_acc": c_acc,
        "counters_coordinator": c_coord,
        "mode": cfg.mode,
    }
    return RunResult(
        out.x.copy(), out.S, out.w, out.f, cg.iteration, out.w <= cfg.epsilon, rec, counters, extra
    )
