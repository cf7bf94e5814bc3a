"""Reduced problems ``j(w)`` consumed by the homotopy trust-region driver.

A problem exposes ``mesh``, ``gamma``, ``value(w)`` and ``gradient(w)``
(lumped-Riesz representative).  Forward solves are cached for the most recent
control so that evaluating and then differentiating at an accepted trial
point costs one forward solve.
"""
from __future__ import annotations

import numpy as np

from .elliptic import EllipticConfig, elliptic_gradient, solve_elliptic, solve_elliptic_adjoint
from .linsolve import SolverOptions
from .mesh import MeshCG1
from .objective import ObjectiveEval, gl_energy, reduced_gradient_wave, tracking_objective
from .wave import WaveConfig, WaveOperator, solve_adjoint, solve_forward

__all__ = ["ReducedProblem", "QuadraticProblem", "EllipticProblem", "WaveProblem", "gradient_check"]


class ReducedProblem:
    mesh: MeshCG1
    gamma: float

    @property
    def weights(self) -> np.ndarray:
        return self.mesh.lumped

    @property
    def stiffness(self):
        return self.mesh.stiffness_unit

    def value(self, w) -> float:
        raise NotImplementedError

    def gradient(self, w) -> np.ndarray:
        raise NotImplementedError

    def total(self, w, eps: float) -> float:
        return self.value(w) + self.gamma * gl_energy(w, eps, self.mesh)

    def evaluate(self, w, eps: float, with_gradient: bool = False) -> ObjectiveEval:
        grad = self.gradient(w) if with_gradient else None
        return ObjectiveEval.build(self.value(w), gl_energy(w, eps, self.mesh), self.gamma, grad)


class QuadraticProblem(ReducedProblem):
    """``j(w) = 1/2 ||w - target||^2`` in the lumped L2 norm."""

    def __init__(self, mesh: MeshCG1, gamma: float, target=0.3):
        self.mesh, self.gamma = mesh, float(gamma)
        self.target = np.broadcast_to(np.asarray(target, dtype=float), (mesh.n_nodes,)).copy()

    def value(self, w):
        r = np.asarray(w) - self.target
        return float(0.5 * self.weights @ (r * r))

    def gradient(self, w):
        return np.asarray(w, dtype=float) - self.target


class _Cached:
    def __init__(self):
        self._key = None
        self._val = None

    def get(self, w, compute):
        key = np.asarray(w, dtype=float).tobytes()
        if key != self._key:
            self._val = compute()
            self._key = key
        return self._val


class EllipticProblem(ReducedProblem):
    """Tracking of ``u_d`` by the elliptic state, weighted by ``focal_mask``."""

    def __init__(self, mesh: MeshCG1, cfg: EllipticConfig, u_d, gamma: float,
                 focal_mask=None, opts: SolverOptions | None = None):
        self.mesh, self.cfg, self.gamma = mesh, cfg, float(gamma)
        self.u_d = np.asarray(u_d, dtype=float)
        self.mask = np.ones(mesh.n_nodes) if focal_mask is None else np.asarray(focal_mask, dtype=float)
        self.opts = opts
        self._state = _Cached()

    def state(self, w):
        return self._state.get(w, lambda: solve_elliptic(self.mesh, w, self.cfg, self.opts))

    def value(self, w):
        r = self.state(w) - self.u_d
        return float(0.5 * (self.weights * self.mask) @ (r * r))

    def gradient(self, w):
        r = self.state(w) - self.u_d
        p = solve_elliptic_adjoint(self.mesh, r, self.cfg, self.opts, weights=self.weights * self.mask)
        return elliptic_gradient(self.mesh, p, self.cfg)


class WaveProblem(ReducedProblem):
    """Tracking of ``u_d`` on the focal region by the damped wave state."""

    def __init__(self, mesh: MeshCG1, cfg: WaveConfig, u_d, focal_mask, gamma: float,
                 opts: SolverOptions | None = None):
        self.mesh, self.cfg, self.gamma = mesh, cfg, float(gamma)
        self.u_d = np.asarray(u_d, dtype=float)
        self.mask = np.asarray(focal_mask, dtype=float)
        self.opts = opts or SolverOptions()
        self._forward = _Cached()
        self.n_forward = 0
        self.n_adjoint = 0

    def _solve(self, w):
        op = WaveOperator(self.mesh, w, self.cfg, self.opts)
        self.n_forward += 1
        return op, solve_forward(self.mesh, w, self.cfg, operator=op)

    def state(self, w):
        return self._forward.get(w, lambda: self._solve(w))[1]

    def residual(self, w):
        U = self.state(w).frames
        return U - (self.u_d[None, :] if self.u_d.ndim == 1 else self.u_d)

    def value(self, w):
        return tracking_objective(self.state(w), self.u_d, self.mask, self.mesh)

    def gradient(self, w):
        op, fwd = self._forward.get(w, lambda: self._solve(w))
        adj = solve_adjoint(self.mesh, w, self.cfg, self.residual(w), weights=self.weights * self.mask, operator=op)
        self.n_adjoint += 1
        return reduced_gradient_wave(self.mesh, w, self.cfg, fwd, adj)


def gradient_check(problem: ReducedProblem, w, n_directions: int = 5, h: float = 1e-4,
                   seed: int = 0) -> np.ndarray:
    """Relative errors between ``(grad j, xi)_d`` and central differences.

    Directions are standard normal draws; ``w +- h xi`` must stay in ``[0, 1]``.
    """
    w = np.asarray(w, dtype=float)
    rng = np.random.default_rng(seed)
    g = problem.gradient(w)
    errors = []
    for _ in range(n_directions):
        xi = rng.standard_normal(w.size)
        xi /= np.abs(xi).max()
        fd = (problem.value(w + h * xi) - problem.value(w - h * xi)) / (2.0 * h)
        ad = (g * problem.weights) @ xi
        errors.append(abs(fd - ad) / max(abs(fd), abs(ad), 1e-300))
    return np.asarray(errors)
