"""Strongly damped acoustic wave equation with a controlled sound speed.

Space is discretized with CG1 elements, time with continuous piecewise-linear
elements, which yields a three-level implicit scheme.  With ``A = K_a(w)``
the speed stiffness, ``B`` the unit stiffness and ``M`` the consistent mass,
every step solves

    S u^{m} = P u^{m-1} - Q u^{m-2} + G_m,

    S = M + tau^2 sigma A + (b tau / 2) B
    P = 2 M - tau^2 (1 - 2 sigma) A
    Q = M + tau^2 sigma A - (b tau / 2) B

and the first step uses ``S u^1 = C u^0 + G_1`` with
``C = M - tau^2 (1/2 - sigma) A + (b tau / 2) B``.  The adjoint march in
:meth:`WaveOperator.adjoint` applies exactly the transposed recursion, so the
gradient it produces is the derivative of the discrete objective.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .linsolve import SolverOptions, cg_solve
from .mesh import MeshCG1, assemble_stiffness, l2_project, triangle_average, write_field

__all__ = [
    "SourceSpec",
    "WaveConfig",
    "StateTrajectory",
    "WaveBlowupError",
    "WaveOperator",
    "ricker",
    "source_profile",
    "source_loads",
    "speed_coefficient",
    "time_weights",
    "solve_forward",
    "solve_adjoint",
    "adjoint_loads",
    "averaged_frames",
    "discrete_energy",
    "write_snapshots",
]

BLOWUP_LIMIT = 1e12


class WaveBlowupError(RuntimeError):
    """A time step produced non-finite or exploding values."""


@dataclass(frozen=True)
class SourceSpec:
    """Ricker wavelet in time times an isotropic Gaussian bump in space."""

    amplitude: float = 1.0
    center: tuple[float, float] = (0.0, 0.0)
    spatial_width: float = 0.1
    f0: float = 1.0
    t0: float = 1.0

    def __post_init__(self):
        if not self.spatial_width > 0:
            raise ValueError(f"spatial_width must be positive, got {self.spatial_width}")
        if not self.f0 > 0:
            raise ValueError(f"f0 must be positive, got {self.f0}")


@dataclass(frozen=True, eq=False)
class WaveConfig:
    c_sq: float
    b: float
    sigma: float
    T: float
    n_steps: int
    source: SourceSpec | None = None
    u0: np.ndarray | Callable | None = None
    u1: np.ndarray | None = None

    def __post_init__(self):
        if not self.c_sq > 0:
            raise ValueError(f"c_sq must be positive, got {self.c_sq}")
        if not self.b > 0:
            raise ValueError(f"damping b must be positive, got {self.b}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise ValueError(f"n_steps must be an integer >= 2, got {self.n_steps}")

    @property
    def tau(self) -> float:
        return self.T / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_steps + 1)


@dataclass(frozen=True, eq=False)
class StateTrajectory:
    """Nodal frames at the ``n_steps + 1`` time levels, shape ``(N + 1, n_nodes)``."""

    frames: np.ndarray
    tau: float

    @property
    def n_steps(self) -> int:
        return self.frames.shape[0] - 1


def ricker(t, spec: SourceSpec):
    """Ricker wavelet ``(1 - 2 pi^2 f0^2 s^2) exp(-pi^2 f0^2 s^2)`` with ``s = t - t0``."""
    arg = (np.pi * spec.f0 * (np.asarray(t, dtype=float) - spec.t0)) ** 2
    return spec.amplitude * (1.0 - 2.0 * arg) * np.exp(-arg)


def source_profile(mesh: MeshCG1, spec: SourceSpec) -> np.ndarray:
    dx = mesh.nodes - np.asarray(spec.center, dtype=float)
    return np.exp(-(dx * dx).sum(axis=1) / (2.0 * spec.spatial_width**2))


def speed_coefficient(mesh: MeshCG1, w, c_sq: float) -> np.ndarray:
    """Per-triangle ``a(w) = c^2 (1 + w)`` from vertex averages of ``w``."""
    return c_sq * (1.0 + triangle_average(mesh, w))


def _hat_integrals(spec: SourceSpec, times: np.ndarray) -> np.ndarray:
    # int r(t) e_i(t) dt for every time hat function, two-point Gauss per interval.
    t_left, t_right = times[:-1], times[1:]
    half = 0.5 * (t_right - t_left)
    mid = 0.5 * (t_right + t_left)
    out = np.zeros(times.size)
    for xi in (-1.0 / np.sqrt(3.0), 1.0 / np.sqrt(3.0)):
        t = mid + xi * half
        r = ricker(t, spec) * half
        lam = (t - t_left) / (t_right - t_left)  # rising hat of the right node
        out[1:] += r * lam
        out[:-1] += r * (1.0 - lam)
    return out


def source_loads(mesh: MeshCG1, cfg: WaveConfig) -> np.ndarray:
    """Right-hand sides ``G_m`` (row ``m``) of the time-stepping recursion.

    Row 0 is unused and left at zero.
    """
    n, N, tau = mesh.n_nodes, cfg.n_steps, cfg.tau
    loads = np.zeros((N + 1, n))
    if cfg.source is not None:
        shape = mesh.mass @ source_profile(mesh, cfg.source)
        hats = _hat_integrals(cfg.source, cfg.times)
        # equation m (m >= 1) is tested with the hat of node m - 1
        loads[1:] = tau * hats[:-1, None] * shape[None, :]
    if cfg.u1 is not None:
        loads[1] += tau * (mesh.mass @ np.asarray(cfg.u1, dtype=float))
    return loads


def _initial_frame(mesh: MeshCG1, cfg: WaveConfig) -> np.ndarray:
    if cfg.u0 is None:
        return np.zeros(mesh.n_nodes)
    if callable(cfg.u0):
        return l2_project(mesh, cfg.u0)
    # the projection of a CG1 field onto CG1 is the field itself
    u0 = np.asarray(cfg.u0, dtype=float)
    if u0.shape != (mesh.n_nodes,):
        raise ValueError(f"u0 has shape {u0.shape}, expected ({mesh.n_nodes},)")
    return u0.copy()


def time_weights(n_steps: int, tau: float) -> np.ndarray:
    """Trapezoidal weights on the uniform time grid."""
    w = np.full(n_steps + 1, tau)
    w[0] = w[-1] = 0.5 * tau
    return w


class WaveOperator:
    """Assembled step matrices for one control ``w``."""

    def __init__(self, mesh: MeshCG1, w, cfg: WaveConfig, opts: SolverOptions | None = None):
        w = np.asarray(w, dtype=float)
        if w.shape != (mesh.n_nodes,):
            raise ValueError(f"control has shape {w.shape}, expected ({mesh.n_nodes},)")
        if w.min() < -1e-12 or w.max() > 1 + 1e-12:
            raise ValueError("control values must lie in [0, 1]")
        self.mesh, self.cfg = mesh, cfg
        self.opts = opts or SolverOptions()
        tau, s, b = cfg.tau, cfg.sigma, cfg.b
        M, B = mesh.mass, mesh.stiffness_unit
        A = assemble_stiffness(mesh, speed_coefficient(mesh, w, cfg.c_sq))
        self.A = A
        self.S = (M + tau**2 * s * A + 0.5 * b * tau * B).tocsr()
        self.P = (2.0 * M - tau**2 * (1.0 - 2.0 * s) * A).tocsr()
        self.Q = (M + tau**2 * s * A - 0.5 * b * tau * B).tocsr()
        self.C = (M - tau**2 * (0.5 - s) * A + 0.5 * b * tau * B).tocsr()

    def _solve(self, rhs, guess, m):
        x = cg_solve(self.S, rhs, guess, self.opts)
        if not np.isfinite(x).all() or np.abs(x).max() > BLOWUP_LIMIT:
            raise WaveBlowupError(f"solution exceeded {BLOWUP_LIMIT:g} at step {m}")
        return x

    def forward(self, u0, loads) -> np.ndarray:
        N = self.cfg.n_steps
        U = np.empty((N + 1, self.mesh.n_nodes))
        U[0] = u0
        U[1] = self._solve(self.C @ U[0] + loads[1], U[0], 1)
        for m in range(2, N + 1):
            rhs = self.P @ U[m - 1] - self.Q @ U[m - 2] + loads[m]
            U[m] = self._solve(rhs, 2.0 * U[m - 1] - U[m - 2], m)
        return U

    def adjoint(self, loads) -> np.ndarray:
        """Multipliers ``lam_m`` (row ``m``, rows 1..N) of the transposed recursion.

        Row 0 is zero; the state frame 0 does not depend on the control.
        """
        N = self.cfg.n_steps
        L = np.zeros((N + 3, self.mesh.n_nodes))
        for m in range(N, 0, -1):
            rhs = loads[m] + self.P @ L[m + 1] - self.Q @ L[m + 2]
            L[m] = self._solve(rhs, 2.0 * L[m + 1] - L[m + 2], m)
        return L[: N + 1]



def averaged_frames(U, sigma: float) -> np.ndarray:
    """Frame combinations multiplying ``tau^2 A`` in equation ``m`` (row 0 unused)."""
    out = np.zeros_like(U)
    out[1] = sigma * U[1] + (0.5 - sigma) * U[0]
    out[2:] = sigma * U[2:] + (1.0 - 2.0 * sigma) * U[1:-1] + sigma * U[:-2]
    return out


def solve_forward(mesh: MeshCG1, w, cfg: WaveConfig, opts: SolverOptions | None = None,
                  operator: WaveOperator | None = None) -> StateTrajectory:
    """March the state from ``P0 u0`` to ``T``."""
    op = operator or WaveOperator(mesh, w, cfg, opts)
    U = op.forward(_initial_frame(mesh, cfg), source_loads(mesh, cfg))
    return StateTrajectory(U, cfg.tau)


def adjoint_loads(residual, cfg: WaveConfig, weights) -> np.ndarray:
    """Derivative of ``1/2 sum_m omega_m r_m^T W r_m`` with respect to each frame."""
    r = residual.frames if isinstance(residual, StateTrajectory) else np.asarray(residual)
    omega = time_weights(cfg.n_steps, cfg.tau)
    return omega[:, None] * np.asarray(weights)[None, :] * r


def solve_adjoint(mesh: MeshCG1, w, cfg: WaveConfig, residual, opts: SolverOptions | None = None,
                  weights=None, operator: WaveOperator | None = None) -> StateTrajectory:
    """Backward adjoint march driven by the misfit ``u - u_d``.

    ``weights`` is the spatial quadrature weight of the misfit (defaults to
    the lumped mass; pass ``lumped * focal_mask`` for a focal region).  The
    returned frame ``k`` holds the multiplier of step ``k + 1``, so the last
    frame is identically zero.
    """
    op = operator or WaveOperator(mesh, w, cfg, opts)
    r = residual.frames if isinstance(residual, StateTrajectory) else np.asarray(residual)
    if r.shape != (cfg.n_steps + 1, mesh.n_nodes):
        raise ValueError(f"residual has shape {r.shape}, expected {(cfg.n_steps + 1, mesh.n_nodes)}")
    weights = mesh.lumped if weights is None else weights
    lam = op.adjoint(adjoint_loads(r, cfg, weights))
    frames = np.zeros_like(lam)
    frames[:-1] = lam[1:]
    return StateTrajectory(frames, cfg.tau)


def discrete_energy(mesh: MeshCG1, w, cfg: WaveConfig, traj: StateTrajectory) -> np.ndarray:
    """``||(u^{i+1} - u^i)/tau||_M^2 + (u^i)^T K_a u^i`` for ``i = 0..N-1``."""
    U = traj.frames
    A = assemble_stiffness(mesh, speed_coefficient(mesh, w, cfg.c_sq))
    V = (U[1:] - U[:-1]) / traj.tau
    kinetic = np.einsum("ij,ij->i", V, (mesh.mass @ V.T).T)
    potential = np.einsum("ij,ij->i", U[:-1], (A @ U[:-1].T).T)
    return kinetic + potential


def write_snapshots(directory, mesh: MeshCG1, traj: StateTrajectory, frames, prefix="u") -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    return [write_field(directory / f"{prefix}_{i:05d}.field", mesh, traj.frames[i]) for i in frames]
