"""Projection-free constrained optimization with local acceleration.

The main entry points are :func:`pflacg_run` (the coupled method),
:func:`run_cg` (conditional-gradient baselines) and :func:`acc_restarted`
(the accelerated method over a fixed hull).  Problems come from
:func:`gen_experiment`.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .accel import acc, acc_restarted, agd_iter, exact_gradient_mapping
from .activeset import ActiveSet, Vertex, project_simplex, solve_hull_subproblem
from .cg import run_cg, strong_wolfe_gap
from .pflacg import CouplingConfig, pflacg_run, restart_decision
from .problem import ProblemSpec, QuadraticObjective, gen_experiment

__all__ = [
    "BACKEND",
    "ActiveSet",
    "CouplingConfig",
    "ProblemSpec",
    "QuadraticObjective",
    "Vertex",
    "acc",
    "acc_restarted",
    "agd_iter",
    "exact_gradient_mapping",
    "gen_experiment",
    "pflacg_run",
    "project_simplex",
    "restart_decision",
    "run_cg",
    "solve_hull_subproblem",
    "strong_wolfe_gap",
]
