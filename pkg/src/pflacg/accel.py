"""Parameter-free accelerated method over the hull of an active set.

* :func:`agd_iter` is one accelerated step with smoothness backtracking on
  the estimate ``eta``.
* :class:`AccCall` runs one call of the adaptive-regularization procedure as
  a resumable state machine, one accelerated step per :meth:`AccCall.step`.
* :class:`AccStream` chains calls, threading ``(eta, sigma)`` through, and
  can be reseeded between steps.  The coupled method uses this form.
* :func:`acc` and :func:`acc_restarted` are blocking drivers.

All points carry barycentric coordinates over the hull, so ACC iterates
stay inside ``conv(S)`` by construction and can be handed back as active
sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .activeset import ActiveSet, Hull, HullSolution, HullSubproblem, project_onto_hull, solve_hull_subproblem
from .errors import ContractViolation, DegenerateInputError, DivergenceError
from .problem import Counters, ObjectiveOracle, eval_foo, sigma0_estimate
from .records import Budget

ETA_CEILING = 2.0**60
MEMBERSHIP_TOL = 1e-8


class RegularizedObjective(ObjectiveOracle):
    """``f(x) + sigma/2 ||x - anchor||^2``."""

    def __init__(self, base: ObjectiveOracle, sigma: float, anchor):
        self.base = base
        self.sigma = float(sigma)
        self.anchor = np.asarray(anchor, dtype=np.float64)
        self.dim = base.dim

    def value(self, x):
        d = x - self.anchor
        return self.base.value(x) + 0.5 * self.sigma * float(d @ d)

    def gradient(self, x):
        return self.base.gradient(x) + self.sigma * (x - self.anchor)

    def value_and_gradient(self, x):
        f, g = self.base.value_and_gradient(x)
        d = x - self.anchor
        return f + 0.5 * self.sigma * float(d @ d), g + self.sigma * d

    def curvature(self, x, d):
        c = self.base.curvature(x, d)
        return None if c is None else c + self.sigma * float(d @ d)

    def bregman(self, x, y):
        d = y - x
        return self.base.bregman(x, y) + 0.5 * self.sigma * float(d @ d)


@dataclass(frozen=True)
class GradMapValue:
    """A gradient mapping ``G`` with parameter ``rho``.

    ``eps_l`` is ``None`` for an exact mapping and the accuracy of the
    inner minimization otherwise.
    """

    vector: np.ndarray
    rho: float
    eps_l: float | None = None

    @property
    def exact(self) -> bool:
        return self.eps_l is None

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))

    @property
    def scaled_sq(self) -> float:
        """``||G||^2 / rho``."""
        return float(self.vector @ self.vector) / self.rho


def exact_gradient_mapping(
    obj: ObjectiveOracle,
    hull: Hull,
    x,
    rho: float,
    eps: float = 1e-20,
    lam0=None,
) -> GradMapValue:
    """``rho (x - P(x - grad f(x)/rho))`` with P the projection onto the hull.

    The projection is solved as ``min <grad, u> + rho/2 ||u - x||^2`` to
    additive accuracy ``eps`` (raised to the rounding floor when smaller).
    """
    if not rho > 0.0:
        raise ContractViolation("mapping parameter must be positive")
    x = np.asarray(x, dtype=np.float64)
    g = obj.gradient(x)
    sol = solve_hull_subproblem(HullSubproblem(hull, g, x, rho, eps, "grad-map", lam0))
    return GradMapValue(rho * (x - sol.u), rho)


# ---------------------------------------------------------------------------
# one accelerated step
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AgdState:
    """Iterates of the accelerated sequence with their barycentric weights."""

    y: np.ndarray
    v: np.ndarray
    z: np.ndarray
    yhat: np.ndarray
    A: float
    eta: float
    sigma: float
    eps0: float
    eta0: float
    x_anchor: np.ndarray
    lam_y: np.ndarray
    lam_v: np.ndarray
    lam_yhat: np.ndarray
    k: int = 0


@dataclass
class AgdInfo:
    theta: float
    a: float
    eps_l: float
    eps_m: float
    doublings: int
    floored: bool
    x: np.ndarray


def _smooth_ok(obj: ObjectiveOracle, x, y, eta: float) -> bool:
    d = y - x
    nd2 = float(d @ d)
    gap = obj.bregman(x, y)
    if obj.curvature(x, d) is None:
        slack = 1e-12 * max(1.0, abs(obj.value(x)))
    else:
        slack = 1e-14 * eta * nd2
    return gap <= 0.5 * eta * nd2 + slack


def agd_iter(
    state: AgdState,
    obj: ObjectiveOracle,
    hull: Hull,
    criterion: str = "grad-map",
    counters: Counters | None = None,
    eta_ceiling: float | None = None,
) -> tuple[AgdState, GradMapValue, AgdInfo]:
    """One accelerated step; doubles ``eta`` until both smoothness tests pass."""
    s = state
    sigma = s.sigma
    ceiling = (ETA_CEILING if eta_ceiling is None else eta_ceiling) * s.eta0
    eta = s.eta / 2.0
    doublings = -1
    while True:
        eta *= 2.0
        doublings += 1
        if eta > ceiling:
            raise DivergenceError(f"smoothness estimate {eta:.3e} exceeded its ceiling")
        theta = math.sqrt(sigma / (2.0 * (eta + sigma)))
        a = theta / (1.0 - theta) * s.A
        A_new = s.A + a
        eps_l = theta * s.eps0 / 4.0
        eps_m = a * s.eps0 / 4.0

        x = (s.y + theta * s.v) / (1.0 + theta)
        lam_x = (s.lam_y + theta * s.lam_v) / (1.0 + theta)
        _, gx = eval_foo(obj, x, counters)
        gsx = gx + sigma * (x - s.x_anchor)
        z = s.z - a * gsx + sigma * a * x

        sol_v = solve_hull_subproblem(
            HullSubproblem(hull, -z, np.zeros_like(z), sigma * A_new + s.eta0, eps_m, criterion, s.lam_v)
        )
        lam_yhat = (1.0 - theta) * s.lam_y + theta * sol_v.lam
        yhat = lam_yhat @ hull.V
        _, gyh = eval_foo(obj, yhat, counters)
        gsyh = gyh + sigma * (yhat - s.x_anchor)
        sol_y = solve_hull_subproblem(HullSubproblem(hull, gsyh, yhat, eta + sigma, eps_l, criterion, lam_yhat))
        y = sol_y.u
        if _smooth_ok(obj, x, yhat, eta) and _smooth_ok(obj, yhat, y, eta):
            break

    new = AgdState(
        y=y,
        v=sol_v.u,
        z=z,
        yhat=yhat,
        A=A_new,
        eta=eta,
        sigma=sigma,
        eps0=s.eps0,
        eta0=s.eta0,
        x_anchor=s.x_anchor,
        lam_y=sol_y.lam,
        lam_v=sol_v.lam,
        lam_yhat=lam_yhat,
        k=s.k + 1,
    )
    G = GradMapValue((eta + sigma) * (yhat - y), eta + sigma, eps_l)
    info = AgdInfo(theta, a, eps_l, eps_m, doublings, sol_v.floored or sol_y.floored, lam_x)
    return new, G, info


# ---------------------------------------------------------------------------
# one ACC call
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AccTraceRow:
    call: int
    pass_index: int
    k: int
    eta: float
    sigma: float
    theta: float
    A: float
    eps0: float
    eps_l: float
    gmap_sq: float
    doublings: int


@dataclass
class AccCallResult:
    y_hat: np.ndarray
    lam: np.ndarray
    eta: float
    sigma: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)
    passes: int = 0


class AccCall:
    """One call of the adaptive procedure, advanced one accelerated step at a time.

    The first step of each outer pass also solves the warm-start model
    around ``x0`` that fixes ``eps0``.  ``done`` becomes true when the
    proximity test passes, or immediately when ``x0`` is already optimal
    on the hull up to rounding (``converged``).
    """

    def __init__(
        self,
        obj: ObjectiveOracle,
        hull: Hull,
        x0,
        lam0,
        eta0: float,
        sigma_in: float,
        criterion: str = "grad-map",
        counters: Counters | None = None,
        call_index: int = 0,
        eta_ceiling: float | None = None,
    ):
        if not (eta0 > 0.0 and sigma_in > 0.0):
            raise ContractViolation("eta0 and sigma must be positive")
        self.obj = obj
        self.hull = hull
        self.x0 = np.asarray(x0, dtype=np.float64)
        self.lam0 = np.asarray(lam0, dtype=np.float64)
        self.eta0 = float(eta0)
        self.eta = float(eta0)
        self.sigma = 2.0 * float(sigma_in)
        self.criterion = criterion
        self.counters = counters
        self.call_index = call_index
        self.eta_ceiling = eta_ceiling
        self.state: AgdState | None = None
        self.passes = 0
        self.iterations = 0
        self.done = False
        self.result: AccCallResult | None = None
        self.trace: list[AccTraceRow] = []
        _, self._g0 = eval_foo(obj, self.x0, counters)
        self.last_G: GradMapValue | None = None
        self.last_info: AgdInfo | None = None

    def _finish(self, y, lam, converged: bool):
        self.done = True
        self.result = AccCallResult(
            np.array(y), np.array(lam), self.eta, self.sigma, self.iterations, converged, self.trace, self.passes
        )

    def _start_pass(self) -> bool:
        self.sigma /= 2.0
        self.passes += 1
        rho0 = self.eta0 + self.sigma
        sol = solve_hull_subproblem(
            HullSubproblem(
                self.hull,
                self._g0,
                self.x0,
                rho0,
                0.0,
                self.criterion,
                self.lam0,
                dyn_coef=rho0 / 32.0,
                lam_ref=self.lam0,
            )
        )
        d = sol.u - self.x0
        eps0 = rho0 / 32.0 * float(d @ d)
        if eps0 == 0.0 or sol.certificate > eps0:
            # the rounding floor was hit before the relative test: the model
            # cannot separate y0 from x0 any further
            self._finish(self.x0, self.lam0, True)
            return False
        y0 = sol.u
        self.state = AgdState(
            y=y0,
            v=y0,
            z=rho0 * self.x0 - self._g0,
            yhat=y0,
            A=1.0,
            eta=self.eta,
            sigma=self.sigma,
            eps0=eps0,
            eta0=self.eta0,
            x_anchor=self.x0,
            lam_y=sol.lam,
            lam_v=sol.lam,
            lam_yhat=sol.lam,
        )
        return True

    def step(self) -> bool:
        """Advance one accelerated step; returns ``done``."""
        if self.done:
            return True
        if self.state is None and not self._start_pass():
            return True
        st, G, info = agd_iter(self.state, self.obj, self.hull, self.criterion, self.counters, self.eta_ceiling)
        self.state = st
        self.eta = st.eta
        self.iterations += 1
        self.last_G, self.last_info = G, info
        self.trace.append(
            AccTraceRow(
                self.call_index,
                self.passes,
                st.k,
                st.eta,
                st.sigma,
                info.theta,
                st.A,
                st.eps0,
                info.eps_l,
                G.scaled_sq,
                info.doublings,
            )
        )
        if G.scaled_sq <= 2.25 * st.eps0:
            dist = float(np.linalg.norm(st.yhat - self.x0))
            if st.sigma / math.sqrt(st.eta + st.sigma) * dist <= math.sqrt(st.eps0):
                self._finish(st.yhat, st.lam_yhat, False)
            else:
                self.state = None
        return self.done


def _barycentric(hull: Hull, x0, lam0) -> np.ndarray:
    if lam0 is not None:
        lam0 = np.asarray(lam0, dtype=np.float64)
        if lam0.shape != (hull.size,):
            raise ContractViolation("barycentric weights do not match the hull")
        res = float(np.linalg.norm(lam0 @ hull.V - x0))
    else:
        sol = project_onto_hull(hull, x0)
        lam0 = sol.lam
        res = float(np.linalg.norm(sol.u - x0))
    if res > MEMBERSHIP_TOL:
        raise ContractViolation(f"start point is {res:.2e} away from the hull")
    return lam0


def acc(
    x0,
    S,
    eta0: float,
    sigma_in: float,
    obj: ObjectiveOracle,
    lam0=None,
    criterion: str = "grad-map",
    counters: Counters | None = None,
    max_iters: int = 1_000_000,
) -> AccCallResult:
    """Run one ACC call to completion and return ``(y_hat, eta, sigma)`` data."""
    hull = S.hull if isinstance(S, ActiveSet) else S
    x0 = np.asarray(x0, dtype=np.float64)
    lam0 = _barycentric(hull, x0, lam0)
    call = AccCall(obj, hull, x0, lam0, eta0, sigma_in, criterion, counters)
    while not call.step():
        if call.iterations >= max_iters:
            raise DivergenceError("ACC call exceeded its iteration cap")
    return call.result


def initial_estimates(obj: ObjectiveOracle, hull: Hull, x0) -> float:
    """sigma0 from the hull vertex farthest from ``x0`` (lowest index on ties)."""
    d = np.linalg.norm(hull.V - x0, axis=1)
    j = int(np.argmax(d))
    if d[j] < 1e-14:
        raise DegenerateInputError("hull collapses to the start point")
    return sigma0_estimate(obj, x0, hull.V[j])


@dataclass(frozen=True)
class AccOutput:
    """Most recent completed ACC output with its support."""

    x: np.ndarray
    lam: np.ndarray
    hull: Hull
    call: int
    stamp: int

    def active_set(self) -> ActiveSet:
        return ActiveSet(self.hull.vertices, self.lam)


class AccStream:
    """Restarted ACC as a resumable stream over a fixed hull.

    ``step`` performs one accelerated step of the running call.  Completed
    calls update :attr:`output`.  :meth:`reseed` swaps the hull and anchor
    and restarts the estimates.  A single-vertex hull idles.
    """

    def __init__(
        self,
        obj: ObjectiveOracle,
        active: ActiveSet,
        criterion: str = "grad-map",
        counters: Counters | None = None,
        eta0: float | None = None,
        sigma0: float | None = None,
        stamp: int = 0,
    ):
        self.obj = obj
        self.criterion = criterion
        self.counters = Counters() if counters is None else counters
        self.trace: list[AccTraceRow] = []
        self.calls = 0
        self.total_iterations = 0
        self.reseed(active, stamp, eta0, sigma0)

    def reseed(self, active: ActiveSet, stamp: int, eta0: float | None = None, sigma0: float | None = None):
        self.hull = active.hull
        x = np.array(active.x)
        lam = np.array(active.weights)
        self.output = AccOutput(x, lam, self.hull, self.calls, stamp)
        self.call: AccCall | None = None
        self.converged = False
        if self.hull.size == 1:
            self.idle = True
            self.eta = self.sigma = float("nan")
            return
        self.idle = False
        if sigma0 is None:
            sigma0 = initial_estimates(self.obj, self.hull, x)
        self.sigma = float(sigma0)
        self.eta = float(sigma0 if eta0 is None else eta0)
        self.stamp = stamp

    @property
    def active(self) -> bool:
        return not (self.idle or self.converged)

    def step(self) -> bool:
        """One accelerated step; returns True when a call completed."""
        if not self.active:
            return False
        if self.call is None:
            out = self.output
            self.call = AccCall(
                self.obj, self.hull, out.x, out.lam, self.eta, self.sigma, self.criterion, self.counters, self.calls
            )
        call = self.call
        before = call.iterations
        done = call.step()
        self.total_iterations += call.iterations - before
        if not done:
            return False
        res = call.result
        self.trace.extend(res.trace)
        self.call = None
        self.calls += 1
        if res.converged:
            self.converged = True
            return False
        self.eta, self.sigma = res.eta, res.sigma
        self.output = replace(self.output, x=res.y_hat, lam=res.lam, call=self.calls)
        return True


@dataclass
class AccCallSummary:
    """Per-call data recorded by :func:`acc_restarted`."""

    index: int
    eta_in: float
    sigma_in: float
    eta_out: float
    sigma_out: float
    iterations: int
    gmap_in: float  # ||G_{eta_in+sigma_in}(x_in)|| / sqrt(eta_in+sigma_in)
    gmap_out: float  # ||G_{eta_out+sigma_out}(x_out)|| / sqrt(eta_out+sigma_out)
    gmap_out_norm: float
    converged: bool


@dataclass
class AccRestartResult:
    x_out: np.ndarray
    lam: np.ndarray
    calls: list
    trace: list
    reached: bool
    exhausted: bool
    counters: Counters


def acc_restarted(
    x0,
    S,
    eta0: float | None,
    sigma0: float | None,
    obj: ObjectiveOracle,
    target_eps: float,
    budget: Budget | None = None,
    lam0=None,
    criterion: str = "grad-map",
    max_calls: int = 10_000,
) -> AccRestartResult:
    """Chain ACC calls until the exact mapping norm at the output is small.

    ``budget.max_iters`` caps accelerated steps across all calls.
    """
    hull = S.hull if isinstance(S, ActiveSet) else S
    x = np.asarray(x0, dtype=np.float64)
    lam = _barycentric(hull, x, lam0)
    if sigma0 is None:
        sigma0 = initial_estimates(obj, hull, x)
    eta = float(sigma0 if eta0 is None else eta0)
    sigma = float(sigma0)
    counters = Counters()
    budget = budget or Budget(max_iters=None)
    clock = budget.start()
    calls: list[AccCallSummary] = []
    trace: list[AccTraceRow] = []
    steps = 0
    G = exact_gradient_mapping(obj, hull, x, eta + sigma, lam0=lam)
    if G.norm <= target_eps:
        return AccRestartResult(x, lam, calls, trace, True, False, counters)
    for idx in range(max_calls):
        gin = G.norm / math.sqrt(G.rho)
        call = AccCall(obj, hull, x, lam, eta, sigma, criterion, counters, idx)
        exhausted = False
        while not call.step():
            steps += 1
            if clock.exhausted(steps):
                exhausted = True
                break
        if exhausted:
            return AccRestartResult(x, lam, calls, trace, False, True, counters)
        res = call.result
        trace.extend(res.trace)
        x, lam = res.y_hat, res.lam
        eta_in, sigma_in = eta, sigma
        eta, sigma = res.eta, res.sigma
        G = exact_gradient_mapping(obj, hull, x, eta + sigma, lam0=lam)
        calls.append(
            AccCallSummary(
                idx, eta_in, sigma_in, eta, sigma, res.iterations, gin, G.norm / math.sqrt(G.rho), G.norm, res.converged
            )
        )
        if G.norm <= target_eps:
            return AccRestartResult(x, lam, calls, trace, True, False, counters)
        if res.converged:
            break
    return AccRestartResult(x, lam, calls, trace, False, False, counters)
