"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--repeat N] [--end-to-end]

Kernel timings call both implementations directly in one process, after one
warm-up call each so JIT compilation is excluded.  ``--end-to-end`` also
runs a desk-scale coupled solve in two subprocesses, one per backend
(selected through ``PFLACG_DISABLE_NUMBA``), and reports wall time.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from pflacg import _kernels as K
from pflacg.lp import HPolytope
from pflacg.region import build_birkhoff_region


def _best_of(fn, repeat: int) -> float:
    fn()
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def _apgd_case(k: int, rng):
    V = rng.uniform(size=(k, 3 * k))
    B = V @ V.T
    q = V @ rng.uniform(size=3 * k)
    lam0 = np.full(k, 1.0 / k)
    lip = 1.1 * float(np.linalg.eigvalsh(B)[-1])
    return (B, q, 1.0, lam0, 1e-10, 0.0, lam0, K.CRIT_FW, 0.0, lip, 100_000)


def _lp_case(n_side: int, rng):
    zero = [i * n_side + (i + 1) % n_side for i in range(n_side)]
    cap = [i * n_side + i for i in range(n_side)]
    poly: HPolytope = build_birkhoff_region(n_side, zero, cap)
    c = rng.standard_normal(poly.n)
    return poly, c


def kernel_table(repeat: int) -> list[tuple[str, float, float]]:
    rng = np.random.default_rng(0)
    rows = []
    for n in (100, 10_000):
        v = rng.standard_normal(n)
        rows.append(
            (
                f"project_simplex n={n}",
                _best_of(lambda: K.project_simplex_np(v), repeat),
                _best_of(lambda: K.project_simplex_nb(v), repeat),
            )
        )
    for k in (20, 100):
        args = _apgd_case(k, rng)
        rows.append(
            (
                f"apgd_simplex_qp k={k}",
                _best_of(lambda: K.apgd_simplex_qp_np(*args), repeat),
                _best_of(lambda: K.apgd_simplex_qp_nb(*args), repeat),
            )
        )
    for n_side in (8, 20):
        poly, c = _lp_case(n_side, rng)

        def solve(impl):
            def run():
                T, basis, ncols = poly.priced_tableau(c)
                impl(T, basis, ncols, 100_000, 1e-9)

            return run

        rows.append(
            (
                f"simplex pivots birkhoff n={n_side * n_side}",
                _best_of(solve(K.simplex_iterate_np), repeat),
                _best_of(solve(K.simplex_iterate_nb), repeat),
            )
        )
    return rows


_E2E = """
import time
from pflacg import BACKEND, CouplingConfig, ProblemSpec, gen_experiment, pflacg_run
from pflacg.problem import alpha_for_kappa
exp = gen_experiment(ProblemSpec("simplex", 500, alpha_for_kappa(500, 5e3), 0))
pflacg_run(exp.objective, exp.region, exp.x0, CouplingConfig(1e-4))
t = time.perf_counter()
r = pflacg_run(exp.objective, exp.region, exp.x0, CouplingConfig(1e-8))
print(BACKEND, time.perf_counter() - t, r.iterations)
"""


def end_to_end() -> list[str]:
    out = []
    for flag in ("0", "1"):
        env = dict(os.environ, PFLACG_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", _E2E], env=env, capture_output=True, text=True, check=True)
        backend, secs, iters = res.stdout.split()
        out.append(f"desk simplex coupled solve  backend={backend:<6} {float(secs):8.3f} s  ({iters} iterations)")
    return out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--end-to-end", action="store_true")
    args = ap.parse_args(argv)
    if not K.NUMBA_AVAILABLE:
        print("numba is not installed; nothing to compare")
        return 1
    print(f"{'kernel':<34}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>9}")
    for name, t_np, t_nb in kernel_table(args.repeat):
        print(f"{name:<34}{1e3 * t_np:12.3f}{1e3 * t_nb:12.3f}{t_np / t_nb:9.1f}")
    if args.end_to_end:
        for line in end_to_end():
            print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
