import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from oracles import grid_search_two_nodes, nonconvex_model, project_reference, reference_convex
from phasetr.mesh import build_mesh
from phasetr.objective import GLParams
from phasetr.subproblem import (
    ProjectionError, SubproblemSpec, convex_objective, lipschitz_estimate, nonconvex_objective,
    project_box_ball, solve_convex, solve_nonconvex,
)


def _spec(mesh, w_bar, g, delta, eps=0.1, gamma=1e-2, variant="convex"):
    return SubproblemSpec(w_bar, g, delta, GLParams(eps, gamma), mesh.stiffness_unit, mesh.lumped, variant)


def _feasible(w, w_bar, weights, delta):
    return w.min() >= 0.0 and w.max() <= 1.0 and weights @ (w - w_bar) ** 2 <= delta * (1 + 1e-10)


def test_projection_examples():
    one = np.ones(1)
    assert project_box_ball(np.array([2.0]), np.array([0.5]), 0.09, one)[0] == pytest.approx(0.8, abs=1e-12)
    assert project_box_ball(np.array([2.0]), np.array([0.5]), 10.0, one)[0] == 1.0
    c = np.array([0.3, 0.6])
    np.testing.assert_array_equal(project_box_ball(c, np.array([0.35, 0.55]), 1.0, np.ones(2)), c)


def test_projection_brute_force_1d():
    grid = np.linspace(0.0, 1.0, 100001)
    for cand, wb, delta in ((2.0, 0.5, 0.09), (-0.7, 0.4, 0.01), (0.45, 0.5, 1e-4), (0.9, 0.2, 0.3)):
        feasible = grid[(grid - wb) ** 2 <= delta]
        best = feasible[np.argmin((feasible - cand) ** 2)]
        got = project_box_ball(np.array([cand]), np.array([wb]), delta, np.ones(1))[0]
        assert got == pytest.approx(best, abs=1e-5)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 30), log_delta=st.floats(-6, 1))
def test_projection_properties(seed, n, log_delta):
    rng = np.random.default_rng(seed)
    wb = rng.uniform(size=n)
    d = rng.uniform(0.05, 2.0, n)
    c = wb + rng.standard_normal(n) * rng.uniform(0.01, 3.0)
    delta = 10.0**log_delta
    w = project_box_ball(c, wb, delta, d)
    assert _feasible(w, wb, d, delta)
    np.testing.assert_allclose(project_box_ball(w, wb, delta, d), w, atol=1e-12)
    np.testing.assert_allclose(w, project_reference(c, wb, d, delta), atol=1e-7)


def test_projection_nonconvergence():
    c, wb = np.array([5.0, -3.0]), np.array([0.5, 0.5])
    with pytest.raises(ProjectionError):
        project_box_ball(c, wb, 1e-3, np.ones(2), max_bisect=3)


def test_spec_validation(unit_mesh):
    n = unit_mesh.n_nodes
    with pytest.raises(ValueError):
        _spec(unit_mesh, np.full(n, 0.5), np.zeros(n), 0.0)
    with pytest.raises(ValueError):
        _spec(unit_mesh, np.full(n, 1.5), np.zeros(n), 1.0)
    with pytest.raises(ValueError):
        _spec(unit_mesh, np.full(n, 0.5), np.zeros(n), 1.0, variant="other")


def test_lipschitz_estimate(unit_mesh):
    K, d = unit_mesh.stiffness_unit, unit_mesh.lumped
    s = 1.0 / np.sqrt(d)
    exact = np.linalg.eigvalsh(s[:, None] * K.toarray() * s[None, :]).max()
    est = lipschitz_estimate(K, d)
    assert exact <= est <= 1.1 * exact * (1 + 1e-12)


def test_convex_stationary(unit_mesh):
    n = unit_mesh.n_nodes
    res = solve_convex(_spec(unit_mesh, np.full(n, 0.5), np.zeros(n), 0.3))
    assert res.objective_value == 0.0 and res.converged
    np.testing.assert_array_equal(res.w_star, 0.5)


def test_convex_pure_descent(unit_mesh):
    m = unit_mesh
    n = m.n_nodes
    eps, gamma, g0 = 0.5, 1e-3, 0.2
    res = solve_convex(_spec(m, np.ones(n), np.full(n, g0), 10.0, eps, gamma), tol=1e-12)
    np.testing.assert_allclose(res.w_star, 0.0, atol=1e-12)
    expected = -np.sum(m.lumped * (g0 - gamma / eps))
    assert res.objective_value == pytest.approx(expected, rel=1e-12)


def test_convex_matches_reference(rng):
    for _ in range(20):
        nx, ny = rng.integers(1, 4, size=2)
        m = build_mesh((0, rng.uniform(0.5, 2), 0, rng.uniform(0.5, 2)), nx, ny)
        n = m.n_nodes
        wb, g = rng.uniform(size=n), 0.1 * rng.standard_normal(n)
        eps, gamma, delta = 10 ** rng.uniform(-2, 0), 10 ** rng.uniform(-3, -1), 10 ** rng.uniform(-3, 0)
        res = solve_convex(_spec(m, wb, g, delta, eps, gamma), tol=1e-12, max_iter=20000)
        _, ref = reference_convex(wb, g, m.stiffness_unit, m.lumped, delta, eps, gamma)
        assert res.objective_value == pytest.approx(ref, abs=1e-6)
        assert res.objective_value <= 0.0
        assert _feasible(res.w_star, wb, m.lumped, delta)


def test_convex_monotone_history(rng):
    m = build_mesh((0, 1, 0, 1), 16, 16)
    n = m.n_nodes
    spec = _spec(m, rng.uniform(size=n), 0.05 * rng.standard_normal(n), 0.05, 0.05, 1e-2)
    res = solve_convex(spec)
    assert (np.diff(res.history) <= 0).all()
    assert res.objective_value == pytest.approx(convex_objective(spec, res.w_star), abs=1e-15)


def test_convex_iteration_cap(rng):
    m = build_mesh((0, 1, 0, 1), 16, 16)
    n = m.n_nodes
    res = solve_convex(_spec(m, rng.uniform(size=n), rng.standard_normal(n), 0.5, 1.0, 1.0), tol=1e-14, max_iter=3)
    assert not res.converged and res.iterations == 3 and res.objective_value <= 0.0


def _two_node(rng):
    h = rng.uniform(0.2, 1.0)
    K = np.array([[1.0, -1.0], [-1.0, 1.0]]) / h
    d = rng.uniform(0.2, 1.0, 2)
    wb = rng.uniform(size=2)
    g = 0.05 * rng.standard_normal(2)
    eps = 10 ** rng.uniform(-2, -0.5)
    gamma = 10 ** rng.uniform(-3, -2)
    delta = 10 ** rng.uniform(-2, 0)
    return wb, g, K, d, delta, eps, gamma


def test_nonconvex_two_node_grid(rng):
    for _ in range(10):
        wb, g, K, d, delta, eps, gamma = _two_node(rng)
        spec = SubproblemSpec(wb, g, delta, GLParams(eps, gamma), sp.csr_matrix(K), d, "nonconvex")
        res = solve_nonconvex(spec, tol=1e-12)
        _, best = grid_search_two_nodes(wb, g, K, d, delta, eps, gamma)
        assert res.objective_value == pytest.approx(best, abs=1e-4)
        assert res.objective_value <= 0.0
        assert res.objective_value == pytest.approx(nonconvex_model(res.w_star, wb, g, K, d, eps, gamma), abs=1e-14)


def test_nonconvex_dominates_convex(rng, unit_mesh):
    n = unit_mesh.n_nodes
    wb = rng.uniform(size=n)
    g = 0.05 * rng.standard_normal(n)
    spec = _spec(unit_mesh, wb, g, 0.2, 0.05, 1e-2, "nonconvex")
    cvx = solve_convex(spec, tol=1e-12)
    res = solve_nonconvex(spec, tol=1e-12)
    assert res.objective_value <= min(0.0, nonconvex_objective(spec, cvx.w_star)) + 1e-15
    assert _feasible(res.w_star, wb, unit_mesh.lumped, 0.2)


def test_nonconvex_binary_center(unit_mesh):
    n = unit_mesh.n_nodes
    wb = (unit_mesh.nodes[:, 0] > 0.5).astype(float)
    res = solve_nonconvex(_spec(unit_mesh, wb, np.zeros(n), 0.1, variant="nonconvex"))
    assert res.objective_value <= 0.0


def test_nonconvex_deterministic_and_parallel(rng, unit_mesh):
    n = unit_mesh.n_nodes
    spec = _spec(unit_mesh, rng.uniform(size=n), 0.05 * rng.standard_normal(n), 0.2, 0.05, 1e-2, "nonconvex")
    a = solve_nonconvex(spec, n_starts=5, seed=3)
    b = solve_nonconvex(spec, n_starts=5, seed=3, workers=3)
    np.testing.assert_array_equal(a.w_star, b.w_star)
    assert a.history == b.history


def test_nonconvex_flip_polish_reaches_mixed_vertex():
    # every descent start ends at a corner one coordinate away from the optimum (0, 1)
    h = 0.7775955296613866
    K = sp.csr_matrix(np.array([[1.0, -1.0], [-1.0, 1.0]]) / h)
    d = np.array([0.4376089427798393, 0.5770763443629155])
    wb = np.array([0.7391818794487419, 0.8340747307980766])
    g = np.array([0.03619580689113609, -0.010552359151083726])
    spec = SubproblemSpec(wb, g, 0.5711247619328038, GLParams(0.04328102669267976, 0.008977604892527986),
                          K, d, "nonconvex")
    plain = solve_nonconvex(spec, tol=1e-12, max_flips=0)
    res = solve_nonconvex(spec, tol=1e-12)
    np.testing.assert_array_equal(res.w_star, [0.0, 1.0])
    assert res.objective_value < plain.objective_value - 1e-3


def test_convex_matches_cvxpy(rng):
    cp = pytest.importorskip("cvxpy")
    m = build_mesh((0, 1, 0, 1), 4, 4)
    n = m.n_nodes
    wb, g = rng.uniform(size=n), 0.1 * rng.standard_normal(n)
    eps, gamma, delta = 0.1, 1e-2, 0.05
    spec = _spec(m, wb, g, delta, eps, gamma)
    res = solve_convex(spec, tol=1e-12, max_iter=20000)

    K, d = m.stiffness_unit.toarray(), m.lumped
    w = cp.Variable(n)
    lin = (g + (gamma / eps) * (1 - 2 * wb)) * d
    obj = lin @ (w - wb) + 0.5 * gamma * eps * (cp.quad_form(w, cp.psd_wrap(K)) - wb @ K @ wb)
    cons = [w >= 0, w <= 1, cp.sum(cp.multiply(d, cp.square(w - wb))) <= delta]
    value = cp.Problem(cp.Minimize(obj), cons).solve()
    assert res.objective_value == pytest.approx(value, abs=1e-6)
    assert res.objective_value <= value + 1e-9
