"""Hot numerical kernels with two interchangeable backends.

Each kernel has a numba version (``*_nb``) and a plain numpy version
(``*_np``).  The module-level names (``project_simplex``, ``apgd_simplex_qp``,
``simplex_iterate``) point at the numba versions unless numba is missing or
the environment variable ``PFLACG_DISABLE_NUMBA`` is set to a truthy value
before import.  Both variants stay importable so tests and the benchmark can
compare them directly.

The APGD kernel minimizes the barycentric quadratic

    h(lam) = rho * (0.5 * lam' B lam - q' lam)

over the probability simplex and returns ``(lam, certificate, iterations,
status)`` with status 0 on success and 1 when the iteration cap was hit (the
best iterate seen is returned in that case).
"""

from __future__ import annotations

import math
import os

import numpy as np

_FLAG = os.environ.get("PFLACG_DISABLE_NUMBA", "").strip().lower()
NUMBA_REQUESTED = _FLAG not in ("1", "true", "yes", "on")

try:  # pragma: no cover - exercised implicitly by whichever backend is live
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover
    numba = None
    NUMBA_AVAILABLE = False

USE_NUMBA = NUMBA_REQUESTED and NUMBA_AVAILABLE

CRIT_FW = 0
CRIT_GM = 1

STATUS_OK = 0
STATUS_MAXITER = 1

LP_OPTIMAL = 0
LP_UNBOUNDED = 1
LP_ITERLIMIT = 2


# --------------------------------------------------------------------------
# numpy backend
# --------------------------------------------------------------------------


def project_simplex_np(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the unit simplex by sort-and-threshold."""
    v = np.asarray(v, dtype=np.float64)
    n = v.shape[0]
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, n + 1, dtype=np.float64)
    cond = u - (css - 1.0) / idx > 0.0
    r = int(np.flatnonzero(cond)[-1]) if cond.any() else 0
    theta = (css[r] - 1.0) / (r + 1.0)
    x = np.maximum(v - theta, 0.0)
    s = x.sum()
    if s <= 0.0:
        # only reachable with non-finite input; fall back to the top entry
        x = np.zeros(n)
        x[int(np.argmax(v))] = 1.0
        return x
    return x / s


def _certificate_np(lam, grad, crit, m):
    # h(lam) - h* <= <grad, lam - p> - m/2 |lam - p|^2 with p the m-step
    # projected point: minimize the strong-convexity lower model over the simplex
    fw = float(lam @ grad - grad.min())
    if crit == CRIT_GM:
        p = project_simplex_np(lam - grad / m)
        d = lam - p
        # d sums to zero exactly in exact arithmetic: center grad to drop the rounding term
        gm = float((grad - float(lam @ grad)) @ d) - 0.5 * m * float(d @ d)
        return min(fw, gm)
    return fw


def apgd_simplex_qp_np(B, q, rho, lam0, eps_abs, dyn_coef, lam_ref, crit, mu, lip, max_iter):
    """Accelerated projected gradient on the simplex (numpy backend)."""
    m = rho * mu
    step = 1.0 / (rho * lip)
    kappa = lip / mu if mu > 0.0 else 0.0
    beta_sc = (math.sqrt(kappa) - 1.0) / (math.sqrt(kappa) + 1.0) if kappa > 1.0 else 0.0
    b_ref = B @ lam_ref

    lam = lam0.copy()
    b_lam = B @ lam
    grad = rho * (b_lam - q)
    hv = rho * (0.5 * float(lam @ b_lam) - float(q @ lam))
    cert = _certificate_np(lam, grad, crit, m)
    d = lam - lam_ref
    target = max(eps_abs, dyn_coef * float(d @ (b_lam - b_ref)))
    if cert <= target:
        return lam, cert, 0, STATUS_OK
    best_cert = cert
    best_lam = lam.copy()
    y = lam.copy()
    t = 1.0
    for it in range(1, max_iter + 1):
        gy = rho * (B @ y - q)
        lam_new = project_simplex_np(y - step * gy)
        b_new = B @ lam_new
        h_new = rho * (0.5 * float(lam_new @ b_new) - float(q @ lam_new))
        if h_new > hv and t > 1.0:
            # function-value restart: drop momentum and redo from lam
            y = lam.copy()
            t = 1.0
            continue
        g_new = rho * (b_new - q)
        cert = _certificate_np(lam_new, g_new, crit, m)
        if cert < best_cert:
            best_cert = cert
            best_lam = lam_new.copy()
        if mu > 0.0:
            beta = beta_sc
            t_new = 2.0
        else:
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            beta = (t - 1.0) / t_new
        y = lam_new + beta * (lam_new - lam)
        lam = lam_new
        hv = h_new
        t = t_new
        d = lam - lam_ref
        target = max(eps_abs, dyn_coef * float(d @ (b_new - b_ref)))
        if cert <= target:
            return lam, cert, it, STATUS_OK
    return best_lam, best_cert, max_iter, STATUS_MAXITER


def simplex_iterate_np(T, basis, ncols, max_iter, tol):
    """Primal simplex with Bland's rule on a canonical tableau, in place.

    ``T`` has one row per constraint plus a final objective row of reduced
    costs; the last column is the right-hand side.  Only the first ``ncols``
    columns may enter the basis.
    """
    m = T.shape[0] - 1
    it = 0
    while it < max_iter:
        red = T[m, :ncols]
        cand = np.flatnonzero(red < -tol)
        if cand.size == 0:
            return LP_OPTIMAL, it
        c = int(cand[0])
        col = T[:m, c]
        rows = np.flatnonzero(col > tol)
        if rows.size == 0:
            return LP_UNBOUNDED, it
        ratios = T[rows, -1] / col[rows]
        rmin = ratios.min()
        ties = rows[ratios <= rmin + 1e-12 * max(1.0, abs(rmin))]
        r = int(ties[np.argmin(basis[ties])])
        pivot_np(T, r, c)
        basis[r] = c
        it += 1
    return LP_ITERLIMIT, it


def pivot_np(T, r, c):
    """Gauss-Jordan pivot on entry ``(r, c)`` in place."""
    T[r] /= T[r, c]
    colv = T[:, c].copy()
    colv[r] = 0.0
    T -= np.outer(colv, T[r])


# --------------------------------------------------------------------------
# numba backend
# --------------------------------------------------------------------------


if NUMBA_AVAILABLE:
    _jit = numba.njit(cache=True, nogil=True)
else:  # pragma: no cover

    def _jit(fn):
        return fn


@_jit
def project_simplex_nb(v):
    n = v.shape[0]
    u = np.sort(v)[::-1]
    css = 0.0
    theta = u[0] - 1.0
    for i in range(n):
        css += u[i]
        t = (css - 1.0) / (i + 1.0)
        if u[i] - t > 0.0:
            theta = t
    x = np.empty(n)
    s = 0.0
    for i in range(n):
        xi = v[i] - theta
        if xi < 0.0:
            xi = 0.0
        x[i] = xi
        s += xi
    if s <= 0.0:
        x[:] = 0.0
        x[np.argmax(v)] = 1.0
        return x
    for i in range(n):
        x[i] /= s
    return x


@_jit
def _matvec_nb(B, x, out):
    k = x.shape[0]
    for i in range(k):
        acc = 0.0
        for j in range(k):
            acc += B[i, j] * x[j]
        out[i] = acc


@_jit
def _certificate_nb(lam, grad, crit, m):
    k = lam.shape[0]
    gmin = grad[0]
    dot = 0.0
    for i in range(k):
        dot += lam[i] * grad[i]
        if grad[i] < gmin:
            gmin = grad[i]
    fw = dot - gmin
    if crit == 1:
        z = np.empty(k)
        for i in range(k):
            z[i] = lam[i] - grad[i] / m
        p = project_simplex_nb(z)
        s = 0.0
        gd = 0.0
        for i in range(k):
            d = lam[i] - p[i]
            s += d * d
            gd += (grad[i] - dot) * d
        gm = gd - 0.5 * m * s
        if gm < fw:
            return gm
    return fw


@_jit
def apgd_simplex_qp_nb(B, q, rho, lam0, eps_abs, dyn_coef, lam_ref, crit, mu, lip, max_iter):
    k = lam0.shape[0]
    m = rho * mu
    step = 1.0 / (rho * lip)
    beta_sc = 0.0
    if mu > 0.0:
        kappa = lip / mu
        if kappa > 1.0:
            beta_sc = (math.sqrt(kappa) - 1.0) / (math.sqrt(kappa) + 1.0)
    b_ref = np.empty(k)
    _matvec_nb(B, lam_ref, b_ref)

    lam = lam0.copy()
    b_lam = np.empty(k)
    _matvec_nb(B, lam, b_lam)
    grad = np.empty(k)
    hv = 0.0
    dd = 0.0
    for i in range(k):
        grad[i] = rho * (b_lam[i] - q[i])
        hv += 0.5 * lam[i] * b_lam[i] - q[i] * lam[i]
        dd += (lam[i] - lam_ref[i]) * (b_lam[i] - b_ref[i])
    hv *= rho
    cert = _certificate_nb(lam, grad, crit, m)
    target = max(eps_abs, dyn_coef * dd)
    if cert <= target:
        return lam, cert, 0, 0
    best_cert = cert
    best_lam = lam.copy()
    y = lam.copy()
    by = np.empty(k)
    z = np.empty(k)
    b_new = np.empty(k)
    g_new = np.empty(k)
    t = 1.0
    for it in range(1, max_iter + 1):
        _matvec_nb(B, y, by)
        for i in range(k):
            z[i] = y[i] - step * rho * (by[i] - q[i])
        lam_new = project_simplex_nb(z)
        _matvec_nb(B, lam_new, b_new)
        h_new = 0.0
        for i in range(k):
            h_new += 0.5 * lam_new[i] * b_new[i] - q[i] * lam_new[i]
        h_new *= rho
        if h_new > hv and t > 1.0:
            for i in range(k):
                y[i] = lam[i]
            t = 1.0
            continue
        for i in range(k):
            g_new[i] = rho * (b_new[i] - q[i])
        cert = _certificate_nb(lam_new, g_new, crit, m)
        if cert < best_cert:
            best_cert = cert
            best_lam[:] = lam_new
        if mu > 0.0:
            beta = beta_sc
            t_new = 2.0
        else:
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            beta = (t - 1.0) / t_new
        dd = 0.0
        for i in range(k):
            y[i] = lam_new[i] + beta * (lam_new[i] - lam[i])
            dd += (lam_new[i] - lam_ref[i]) * (b_new[i] - b_ref[i])
        lam = lam_new
        hv = h_new
        t = t_new
        target = max(eps_abs, dyn_coef * dd)
        if cert <= target:
            return lam, cert, it, 0
    return best_lam, best_cert, max_iter, 1



@_jit
def pivot_nb(T, r, c):
    rows, cols = T.shape
    piv = T[r, c]
    for j in range(cols):
        T[r, j] /= piv
    for i in range(rows):
        if i == r:
            continue
        f = T[i, c]
        if f != 0.0:
            for j in range(cols):
                T[i, j] -= f * T[r, j]


@_jit
def simplex_iterate_nb(T, basis, ncols, max_iter, tol):
    m = T.shape[0] - 1
    it = 0
    while it < max_iter:
        c = -1
        for j in range(ncols):
            if T[m, j] < -tol:
                c = j
                break
        if c < 0:
            return 0, it
        r = -1
        best = np.inf
        for i in range(m):
            a = T[i, c]
            if a > tol:
                ratio = T[i, -1] / a
                slack = 1e-12 * max(1.0, abs(best)) if best < np.inf else 0.0
                if r < 0 or ratio < best - slack:
                    r = i
                    best = ratio
                elif ratio <= best + slack and basis[i] < basis[r]:
                    r = i
                    if ratio < best:
                        best = ratio
        if r < 0:
            return 1, it
        pivot_nb(T, r, c)
        basis[r] = c
        it += 1
    return 2, it


if USE_NUMBA:
    BACKEND = "numba"
    _project_impl = project_simplex_nb
    _apgd_impl = apgd_simplex_qp_nb
    _simplex_impl = simplex_iterate_nb
else:
    BACKEND = "numpy"
    _project_impl = project_simplex_np
    _apgd_impl = apgd_simplex_qp_np
    _simplex_impl = simplex_iterate_np


# numpy's vectorized sort beats the jitted quicksort on long inputs
PROJECT_NUMPY_ABOVE = 2048


def project_simplex(v) -> np.ndarray:
    """Project ``v`` onto the unit simplex with the active backend."""
    v = np.ascontiguousarray(v, dtype=np.float64)
    if v.shape[0] > PROJECT_NUMPY_ABOVE:
        return project_simplex_np(v)
    return _project_impl(v)


def apgd_simplex_qp(B, q, rho, lam0, eps_abs, dyn_coef, lam_ref, crit, mu, lip, max_iter):
    """Run the simplex-constrained APGD loop with the active backend."""
    lam, cert, it, status = _apgd_impl(
        np.ascontiguousarray(B, dtype=np.float64),
        np.ascontiguousarray(q, dtype=np.float64),
        float(rho),
        np.ascontiguousarray(lam0, dtype=np.float64),
        float(eps_abs),
        float(dyn_coef),
        np.ascontiguousarray(lam_ref, dtype=np.float64),
        int(crit),
        float(mu),
        float(lip),
        int(max_iter),
    )
    return lam, float(cert), int(it), int(status)


def simplex_iterate(T, basis, ncols, max_iter, tol=1e-9):
    """Run Bland-rule simplex pivots in place with the active backend."""
    status, it = _simplex_impl(T, basis, int(ncols), int(max_iter), float(tol))
    return int(status), int(it)
