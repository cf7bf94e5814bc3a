"""Reduced objectives, the Ginzburg-Landau energy and interface diagnostics.

Nodal gradients come in two flavours.  ``gl_gradient`` returns the plain
derivative with respect to the coefficient vector.  Gradients of reduced
objectives (``reduced_gradient_wave`` and the problem classes) are Riesz
representatives in the lumped-mass inner product, i.e. the coefficient
derivative divided by the lumped mass.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .mesh import MeshCG1, _check_field
from .wave import StateTrajectory, WaveConfig, averaged_frames, time_weights

__all__ = [
    "GLParams",
    "ObjectiveEval",
    "FeasibilityError",
    "BOUND_SLACK",
    "double_well",
    "gl_energy",
    "gl_gradient",
    "reduced_gradient_wave",
    "tracking_objective",
    "interface_diagnostics",
    "interface_length",
    "modica_mortola_constant",
    "interface_profile",
]

BOUND_SLACK = 1e-12


class FeasibilityError(ValueError):
    """A control left the box [0, 1]."""


@dataclass(frozen=True)
class GLParams:
    epsilon: float
    gamma: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")


@dataclass(frozen=True, eq=False)
class ObjectiveEval:
    j_value: float
    gl_energy: float
    total: float
    gradient: np.ndarray | None = None

    @classmethod
    def build(cls, j_value, gl_value, gamma, gradient=None):
        return cls(float(j_value), float(gl_value), float(j_value) + gamma * float(gl_value), gradient)


def modica_mortola_constant() -> float:
    """``int_0^1 sqrt(2 s (1 - s)) ds = sqrt(2) pi / 8``."""
    return np.sqrt(2.0) * np.pi / 8.0


def interface_profile(x, eps: float, half_width: float) -> np.ndarray:
    """Minimizer of the 1D energy on ``(-l, l)`` with ``w(-l) = 0`` and ``w(l) = 1``.

    Solves ``eps^2 w'' = 1 - 2 w``: a sine layer of half-width ``pi eps / (2 sqrt 2)``
    flanked by pure phases, or a sine through the boundary values when ``l`` is
    smaller than that half-width.
    """
    x = np.asarray(x, dtype=float)
    k = np.sqrt(2.0) / eps
    if half_width < 0.5 * np.pi / k:
        return 0.5 + 0.5 * np.sin(k * x) / np.sin(k * half_width)
    return 0.5 + 0.5 * np.sin(np.clip(k * x, -0.5 * np.pi, 0.5 * np.pi))


def _feasible(mesh: MeshCG1, w) -> np.ndarray:
    w = _check_field(mesh, w)
    if w.min() < -BOUND_SLACK or w.max() > 1.0 + BOUND_SLACK:
        raise FeasibilityError(
            f"control outside [0, 1]: min {w.min():.3e}, max {w.max():.3e}"
        )
    return w


def double_well(w):
    return w * (1.0 - w)


def gl_energy(w, eps: float, mesh: MeshCG1) -> float:
    """``(eps/2) |w|_{H1}^2 + (1/eps) sum_i d_i w_i (1 - w_i)``."""
    w = _feasible(mesh, w)
    grad_term = w @ (mesh.stiffness_unit @ w)
    well = mesh.lumped @ double_well(w)
    # tiny negative wells from the bound slack are clipped off
    return float(0.5 * eps * grad_term + max(well, 0.0) / eps)


def gl_gradient(w, eps: float, mesh: MeshCG1) -> np.ndarray:
    """Coefficient derivative ``eps K w + (1/eps) d (1 - 2 w)`` of :func:`gl_energy`."""
    w = _feasible(mesh, w)
    return eps * (mesh.stiffness_unit @ w) + mesh.lumped * (1.0 - 2.0 * w) / eps


def reduced_gradient_wave(mesh: MeshCG1, w, cfg: WaveConfig, forward: StateTrajectory,
                          adjoint: StateTrajectory) -> np.ndarray:
    """Riesz gradient of the tracking functional with respect to the speed control.

    Accumulates ``-tau^2 a'(w) lam_m^T K_T ubar_m`` over the time steps on every
    triangle, spreads a third of each triangle's value to its vertices and
    divides by the lumped mass.  ``ubar_m`` are the sigma-weighted frame
    combinations of the scheme, which makes this the exact derivative of the
    discrete objective.
    """
    U, P = forward.frames, adjoint.frames
    if U.shape != P.shape:
        raise ValueError(f"trajectory shapes differ: {U.shape} vs {P.shape}")
    if U.shape != (cfg.n_steps + 1, mesh.n_nodes):
        raise ValueError(f"trajectory shape {U.shape} does not match the configuration")
    ubar = averaged_frames(U, cfg.sigma)
    lam = np.zeros_like(P)
    lam[1:] = P[:-1]
    per_tri = kernels.triangle_pair_sums(lam[1:], ubar[1:], mesh.triangles, mesh.local_stiffness)
    per_tri *= -(cfg.tau**2) * cfg.c_sq / 3.0
    coeff = np.bincount(mesh.triangles.ravel(), weights=np.repeat(per_tri, 3), minlength=mesh.n_nodes)
    return coeff / mesh.lumped


def tracking_objective(forward, u_d, focal_mask, mesh: MeshCG1, tau: float | None = None) -> float:
    """``1/2 int_0^T int_D (u - u_d)^2`` with trapezoidal time and lumped space quadrature."""
    U = forward.frames if isinstance(forward, StateTrajectory) else np.asarray(forward)
    if tau is None:
        tau = forward.tau
    ud = np.asarray(u_d, dtype=float)
    r = U - (ud[None, :] if ud.ndim == 1 else ud)
    weights = mesh.lumped * np.asarray(focal_mask, dtype=float)
    omega = time_weights(U.shape[0] - 1, tau)
    return float(0.5 * omega @ ((r * r) @ weights))


def interface_length(mesh: MeshCG1, w, level: float = 0.5) -> float:
    """Length of the ``level`` contour of the piecewise-linear interpolant of ``w``."""
    w = _check_field(mesh, w)
    phase = w[mesh.triangles] > level
    cut = phase.any(axis=1) & ~phase.all(axis=1)
    tri = mesh.triangles[cut]
    vals = w[tri]
    pts = mesh.nodes[tri]
    ph = phase[cut]
    crossings = []
    for a, b in ((0, 1), (1, 2), (2, 0)):
        crosses = ph[:, a] != ph[:, b]
        denom = np.where(crosses, vals[:, b] - vals[:, a], 1.0)
        s = (level - vals[:, a]) / denom
        crossings.append(np.where(crosses[:, None], pts[:, a] + s[:, None] * (pts[:, b] - pts[:, a]), np.nan))
    crossings = np.stack(crossings, axis=1)  # (k, 3 edges, 2)
    # exactly two edges of a cut triangle change phase; move them to the front
    order = np.argsort(np.isnan(crossings[..., 0]), axis=1, kind="stable")[:, :2]
    ends = np.take_along_axis(crossings, order[..., None], axis=1)
    return float(np.linalg.norm(ends[:, 1] - ends[:, 0], axis=1).sum())


def interface_diagnostics(w, mesh: MeshCG1) -> dict[str, float]:
    """Fraction of the domain with intermediate values and perimeter of ``{w > 1/2}``."""
    w = _check_field(mesh, w)
    band = (w >= 0.1) & (w <= 0.9)
    return {
        "nonbinary_fraction": float(mesh.lumped @ band / mesh.area),
        "tv_binarized": interface_length(mesh, w),
    }
