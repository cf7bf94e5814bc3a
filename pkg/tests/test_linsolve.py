import numpy as np
import pytest
import scipy.sparse as sp

from phasetr import kernels
from phasetr.linsolve import CGInfo, ConvergenceError, SolverOptions, cg_solve
from phasetr.mesh import build_mesh


def _wave_step_matrix(n=8, tau=5.0 / 32, sigma=0.25, c_sq=20.0):
    m = build_mesh((-1, 1, -1, 2), n, n)
    return (m.mass + tau**2 * sigma * 1.5 * c_sq * m.stiffness_unit).tocsr()


def test_identity(rng):
    b = rng.standard_normal(7)
    x, info = cg_solve(sp.identity(7, format="csr"), b, return_info=True)
    np.testing.assert_allclose(x, b, rtol=1e-15)
    assert info.iterations == 1


def test_diagonal():
    x = cg_solve(sp.diags(np.arange(1.0, 6.0)).tocsr(), np.ones(5))
    np.testing.assert_allclose(x, 1.0 / np.arange(1.0, 6.0), atol=1e-12)


def test_wave_step_matches_dense(rng):
    A = _wave_step_matrix()
    b = rng.standard_normal(A.shape[0])
    x = cg_solve(A, b, opts=SolverOptions(tol=1e-12))
    np.testing.assert_allclose(x, np.linalg.solve(A.toarray(), b), atol=1e-9)
    assert np.linalg.norm(A @ x - b) <= 1e-12 * np.linalg.norm(b)


def test_permutation_invariance(rng):
    A = _wave_step_matrix()
    b = rng.standard_normal(A.shape[0])
    perm = rng.permutation(A.shape[0])
    P = sp.identity(A.shape[0], format="csr")[perm]
    opts = SolverOptions(tol=1e-13)
    x = cg_solve(A, b, opts=opts)
    xp = cg_solve((P @ A @ P.T).tocsr(), b[perm], opts=opts)
    np.testing.assert_allclose(xp, x[perm], atol=1e-10)


def test_deterministic(rng):
    A = _wave_step_matrix()
    b = rng.standard_normal(A.shape[0])
    assert np.array_equal(cg_solve(A, b), cg_solve(A, b))


def test_nonconvergence_error():
    m = build_mesh((0, 1, 0, 1), 16, 16)
    A = (m.stiffness_unit + 1e-3 * m.mass).tocsr()
    with pytest.raises(ConvergenceError) as exc:
        cg_solve(A, np.ones(m.n_nodes) - np.arange(m.n_nodes) % 2, opts=SolverOptions(tol=1e-14, max_iter=3))
    assert exc.value.iterations == 3 and exc.value.residual > 0


def test_options_validation():
    for bad in ({"tol": 0.0}, {"tol": -1.0}, {"max_iter": 0}, {"max_iter": 2.5}):
        with pytest.raises(ValueError):
            SolverOptions(**bad)


def test_shape_errors():
    with pytest.raises(ValueError):
        cg_solve(sp.identity(3, format="csr"), np.ones(4))
    with pytest.raises(ValueError):
        cg_solve(sp.identity(3, format="csr"), np.ones(3), x0=np.ones(2))


def test_zero_rhs():
    x, info = cg_solve(sp.identity(4, format="csr"), np.zeros(4), return_info=True)
    assert not x.any() and isinstance(info, CGInfo)


def test_preconditioned_residual_not_monotone_in_general(rng):
    # CG only guarantees a monotone error in the A-norm; the residual can oscillate
    m = build_mesh((0, 1, 0, 1), 16, 16)
    A = (m.stiffness_unit + 1e-3 * m.mass).tocsr()
    _, info = cg_solve(A, rng.standard_normal(A.shape[0]), opts=SolverOptions(tol=1e-12), return_info=True)
    assert (np.diff(info.history) > 0).any()


def test_error_monotone_in_energy_norm(rng):
    m = build_mesh((0, 1, 0, 1), 12, 12)
    A = (m.stiffness_unit + 1e-3 * m.mass).tocsr()
    b = rng.standard_normal(A.shape[0])
    exact = np.linalg.solve(A.toarray(), b)
    errs = []
    for k in range(1, 60):
        x, *_ = kernels.pcg(A, b, np.zeros_like(b), 1e-30, k)
        e = x - exact
        errs.append(e @ (A @ e))
    assert (np.diff(errs) <= 1e-12 * errs[0]).all()
