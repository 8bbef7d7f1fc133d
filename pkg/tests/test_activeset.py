import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import grid_min_1d, hull_qp_reference, project_simplex_bruteforce
from pflacg import activeset as aset
from pflacg.activeset import (
    ActiveSet,
    Hull,
    HullSubproblem,
    Vertex,
    apply_away_step,
    apply_fw_step,
    apply_pairwise_step,
    away_lambda_max,
    hull_residual,
    inner_solver_apgd,
    power_iteration,
    project_onto_hull,
    project_simplex,
    solve_hull_subproblem,
)
from pflacg.errors import AccuracyNotReached, ContractViolation, DimensionError

E = [Vertex(np.eye(3)[i], label=f"e{i}") for i in range(3)]
a, b, c = E


def weights_of(S):
    return {v.label: w for v, w in zip(S.vertices, S.weights)}


# -- projection --------------------------------------------------------------


@pytest.mark.parametrize(
    "v, out",
    [((0.3, 0.3, 0.4), (0.3, 0.3, 0.4)), ((2.0, 0.0), (1.0, 0.0)), ((0.5, 0.5, 0.5), (1 / 3, 1 / 3, 1 / 3))],
)
def test_project_simplex_examples(v, out):
    np.testing.assert_allclose(project_simplex(v), out, atol=1e-15)


def test_project_simplex_random_vs_bruteforce():
    rng = np.random.default_rng(0)
    for _ in range(200):
        v = rng.standard_normal(6) * rng.uniform(0.1, 5)
        np.testing.assert_allclose(project_simplex(v), project_simplex_bruteforce(v), atol=1e-10)


def test_project_simplex_membership_exact():
    rng = np.random.default_rng(1)
    for n in (1, 3, 50, 3000):
        x = project_simplex(rng.standard_normal(n) * 10)
        assert x.min() >= 0.0 and abs(x.sum() - 1.0) <= 1e-12


def test_project_simplex_rejects_empty():
    with pytest.raises(DimensionError):
        project_simplex([])


# -- active-set algebra ------------------------------------------------------


def test_fw_step_examples():
    S = ActiveSet.from_vertex(a)
    assert weights_of(apply_fw_step(S, b, 1.0)) == {"e1": 1.0}
    S2 = ActiveSet([a, b], [0.5, 0.5])
    assert weights_of(apply_fw_step(S2, a, 0.5)) == pytest.approx({"e0": 0.75, "e1": 0.25})
    assert apply_fw_step(S2, c, 0.0) is S2
    with pytest.raises(ContractViolation):
        apply_fw_step(S2, c, 1.5)


def test_away_step_examples():
    S = ActiveSet([a, b], [0.5, 0.5])
    assert away_lambda_max(0.5) == pytest.approx(1.0)
    assert weights_of(apply_away_step(S, b, 1.0)) == {"e0": 1.0}
    assert apply_away_step(S, b, 0.0) is S
    S3 = ActiveSet([a, b], [0.75, 0.25])
    assert weights_of(apply_away_step(S3, b, 1.0 / 3.0)) == {"e0": 1.0}
    with pytest.raises(ContractViolation):
        apply_away_step(S3, b, 0.5)
    with pytest.raises(ContractViolation):
        apply_away_step(S3, c, 0.1)


def test_pairwise_step():
    S = ActiveSet([a, b], [0.25, 0.75])
    T = apply_pairwise_step(S, c, a, 0.25)
    assert weights_of(T) == pytest.approx({"e1": 0.75, "e2": 0.25})
    assert apply_pairwise_step(S, a, a, 0.1) is S
    with pytest.raises(ContractViolation):
        apply_pairwise_step(S, c, a, 0.3)


def test_active_set_validation():
    with pytest.raises(ContractViolation):
        ActiveSet([a, a], [0.5, 0.5])
    with pytest.raises(ContractViolation):
        ActiveSet([a, b], [1.5, -0.5])
    with pytest.raises(DimensionError):
        ActiveSet([a, b], [1.0])
    with pytest.raises(ContractViolation):
        ActiveSet([], [])
    S = ActiveSet([a, b, c], [0.5, 1e-14, 0.5])
    assert len(S) == 2 and S.weights.sum() == pytest.approx(1.0)
    M = ActiveSet.merged([a, b, a], [0.25, 0.5, 0.25])
    assert weights_of(M) == pytest.approx({"e0": 0.5, "e1": 0.5})


N_V = 5
POOL = [Vertex(np.eye(N_V)[i]) for i in range(N_V)] + [Vertex(np.full(N_V, 0.2))]

step = st.tuples(st.sampled_from(["fw", "away", "pair"]), st.integers(0, len(POOL) - 1), st.floats(0.0, 1.0))


@settings(max_examples=200, deadline=None)
@given(st.lists(step, min_size=1, max_size=30))
def test_step_sequences_keep_probability_weights(ops):
    S = ActiveSet.from_vertex(POOL[0])
    for kind, idx, frac in ops:
        v = POOL[idx]
        before = len(S)
        if kind == "fw":
            S = apply_fw_step(S, v, frac)
            if frac == 1.0:
                assert len(S) == 1
        else:
            s = S.vertices[idx % len(S)]
            if kind == "away":
                lmax = away_lambda_max(S.weight(s))
                lam = frac * (lmax if np.isfinite(lmax) else 10.0)
                S = apply_away_step(S, s, lam)
                if frac == 1.0 and np.isfinite(lmax):
                    assert len(S) < before
            else:
                S = apply_pairwise_step(S, v, s, frac * S.weight(s))
        assert len(S) <= before + 1
        w = S.weights
        assert w.min() >= aset.DROP_TOL and abs(w.sum() - 1.0) <= 1e-9
        assert np.linalg.norm(S.x - w @ S.matrix) <= 1e-9
        assert len({v.key for v in S.vertices}) == len(S)


# -- hull geometry -----------------------------------------------------------


def test_power_iteration_close_to_top():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((8, 8))
    B = X @ X.T
    top = np.linalg.eigvalsh(B)[-1]
    assert power_iteration(B, iters=200, rtol=1e-12) == pytest.approx(top, rel=1e-6)


def test_hull_spectral_data():
    H = Hull(tuple(E))
    # tangent directions of the standard simplex have unit curvature
    assert H.mu == pytest.approx(1.0)
    assert H.lipschitz >= 1.0 and H.strongly_convex
    dep = Hull((a, b, Vertex([0.5, 0.5, 0.0])))
    assert not dep.strongly_convex


# -- hull subproblem ---------------------------------------------------------


def test_singleton_hull():
    H = Hull((b,))
    sol = solve_hull_subproblem(HullSubproblem(H, np.ones(3), np.zeros(3), 1.0, 1e-6))
    assert sol.certificate == 0.0 and sol.iterations == 0
    np.testing.assert_array_equal(sol.u, b.coords)


def test_center_already_in_hull():
    H = Hull(tuple(E))
    c0 = np.full(3, 1 / 3)
    sol = solve_hull_subproblem(HullSubproblem(H, np.zeros(3), c0, 1.0, 1e-12))
    assert np.linalg.norm(sol.u - c0) <= 1e-6


@pytest.mark.parametrize("criterion", ["fw-gap", "grad-map"])
def test_segment_projection_against_grid(criterion):
    H = Hull((Vertex([1.0, 0.0]), Vertex([0.0, 1.0])))
    g, c0, rho = np.zeros(2), np.array([0.9, -0.2]), 2.0
    sol = solve_hull_subproblem(HullSubproblem(H, g, c0, rho, 1e-12, criterion))
    np.testing.assert_allclose(sol.u, [1.0, 0.0], atol=1e-6)

    def obj(t):
        u = np.array([t, 1 - t])
        return g @ u + rho / 2 * np.sum((u - c0) ** 2)

    t_star, v_star = grid_min_1d(obj, 0.0, 1.0, 1e-5)
    assert abs(sol.u[0] - t_star) <= 1e-5
    assert HullSubproblem(H, g, c0, rho, 1e-12).objective(sol.lam) <= v_star + 1e-12
    lam = inner_solver_apgd(H, g, c0, rho, 1e-12, criterion)
    assert abs(lam @ H.V[:, 0] - t_star) <= 1e-5


def test_huge_eps_returns_uniform_start():
    H = Hull(tuple(E))
    sol = solve_hull_subproblem(HullSubproblem(H, np.array([1.0, -2, 3]), np.zeros(3), 1.0, 1e6, "fw-gap"))
    assert sol.iterations == 0
    np.testing.assert_allclose(sol.lam, np.full(3, 1 / 3))


@pytest.mark.parametrize("criterion", ["fw-gap", "grad-map"])
def test_certificate_soundness(criterion):
    rng = np.random.default_rng(7)
    for _ in range(40):
        k = int(rng.integers(2, 4))
        n = int(rng.integers(2, 5))
        V = rng.standard_normal((k, n))
        H = Hull(tuple(Vertex(v) for v in V))
        g, c0 = rng.standard_normal(n), rng.standard_normal(n)
        rho = float(rng.uniform(0.1, 10))
        eps = float(10 ** rng.uniform(-10, -3))
        p = HullSubproblem(H, g, c0, rho, eps, criterion)
        sol = solve_hull_subproblem(p)
        _, _, val = hull_qp_reference(V, g, c0, rho)
        assert p.objective(sol.lam) - val <= max(eps, sol.target) + 1e-12
        assert sol.lam.min() >= 0 and abs(sol.lam.sum() - 1) <= 1e-12


def test_dependent_hull_falls_back_to_fw_gap():
    H = Hull((Vertex([0.0, 0.0]), Vertex([1.0, 0.0]), Vertex([0.5, 0.0])))
    sol = solve_hull_subproblem(HullSubproblem(H, np.zeros(2), np.array([0.3, 1.0]), 1.0, 1e-10))
    assert sol.criterion == "fw-gap"
    np.testing.assert_allclose(sol.u, [0.3, 0.0], atol=1e-5)


def test_tiny_eps_is_floored():
    H = Hull(tuple(E))
    sol = solve_hull_subproblem(HullSubproblem(H, np.array([1.0, 2.0, 0.5]), np.zeros(3), 1.0, 0.0))
    assert sol.floored and sol.target > 0.0 and sol.certificate <= sol.target


def test_iteration_cap_raises_with_certificate(monkeypatch):
    monkeypatch.setattr(aset, "_iteration_cap", lambda kappa, ratio: 1)
    rng = np.random.default_rng(8)
    V = rng.standard_normal((3, 4))
    H = Hull(tuple(Vertex(v) for v in V))
    with pytest.raises(AccuracyNotReached) as info:
        solve_hull_subproblem(HullSubproblem(H, rng.standard_normal(4), np.zeros(4), 1.0, 1e-14, "fw-gap"))
    assert info.value.certificate > info.value.target


def test_subproblem_validation():
    H = Hull(tuple(E))
    with pytest.raises(ContractViolation):
        HullSubproblem(H, np.zeros(3), np.zeros(3), 0.0, 1e-6)
    with pytest.raises(ContractViolation):
        HullSubproblem(H, np.zeros(3), np.zeros(3), 1.0, -1.0)
    with pytest.raises(ContractViolation):
        HullSubproblem(H, np.zeros(3), np.zeros(3), 1.0, 1e-6, "exact")
    with pytest.raises(DimensionError):
        solve_hull_subproblem(HullSubproblem(H, np.zeros(3), np.zeros(3), 1.0, 1e-6, lam0=np.ones(2) / 2))


def test_dynamic_target_stops_earlier():
    H = Hull(tuple(E))
    g = np.array([0.3, -0.1, 0.2])
    tight = solve_hull_subproblem(HullSubproblem(H, g, np.zeros(3), 1.0, 1e-14))
    loose = solve_hull_subproblem(HullSubproblem(H, g, np.zeros(3), 1.0, 1e-14, dyn_coef=1.0))
    assert loose.iterations <= tight.iterations


def test_projection_and_residual():
    H = Hull(tuple(E))
    sol = project_onto_hull(H, [1.0, 1.0, 1.0])
    np.testing.assert_allclose(sol.u, np.full(3, 1 / 3), atol=1e-9)
    assert hull_residual(H, [0.2, 0.3, 0.5]) <= 1e-9
    assert hull_residual(H, [1.0, 1.0, 1.0]) == pytest.approx(np.sqrt(3) * 2 / 3, abs=1e-8)
