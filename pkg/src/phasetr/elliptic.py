"""Source control of ``-nu Lap u = B w + f`` with homogeneous Dirichlet data."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .linsolve import SolverOptions, cg_solve
from .mesh import MeshCG1

__all__ = [
    "EllipticConfig",
    "control_operator",
    "solve_elliptic",
    "solve_elliptic_adjoint",
    "elliptic_gradient",
]

_DEFAULT_OPTS = SolverOptions(tol=1e-13, max_iter=20_000)


@dataclass(frozen=True, eq=False)
class EllipticConfig:
    """``B`` is ``"identity"`` or ``"mollifier"`` (normalized Gaussian of ``radius``)."""

    nu: float
    f: np.ndarray | None = None
    B: str = "identity"
    radius: float | None = None

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if self.B not in ("identity", "mollifier"):
            raise ValueError(f"unknown control operator {self.B!r}")
        if self.B == "mollifier" and not (self.radius is not None and self.radius > 0):
            raise ValueError("mollifier needs a positive radius")


@lru_cache(maxsize=8)
def _mollifier(mesh: MeshCG1, radius: float) -> sp.csr_matrix:
    tree = cKDTree(mesh.nodes)
    dist = tree.sparse_distance_matrix(tree, 4.0 * radius, output_type="coo_matrix")
    # sparse_distance_matrix drops the zero self-distances
    rows = np.concatenate([dist.row, np.arange(mesh.n_nodes)])
    cols = np.concatenate([dist.col, np.arange(mesh.n_nodes)])
    d = np.concatenate([dist.data, np.zeros(mesh.n_nodes)])
    G = sp.csr_matrix((np.exp(-0.5 * (d / radius) ** 2), (rows, cols)), shape=(mesh.n_nodes,) * 2)
    scale = 1.0 / np.asarray(G.sum(axis=1)).ravel()
    return sp.diags(scale) @ G


def control_operator(mesh: MeshCG1, cfg: EllipticConfig) -> sp.csr_matrix:
    """Nodal matrix of ``B``; mollifier rows sum to one."""
    if cfg.B == "identity":
        return sp.identity(mesh.n_nodes, format="csr")
    return _mollifier(mesh, float(cfg.radius)).tocsr()


def _interior(mesh: MeshCG1) -> np.ndarray:
    mask = np.ones(mesh.n_nodes, dtype=bool)
    mask[mesh.boundary_nodes] = False
    return np.flatnonzero(mask)


def _dirichlet_solve(mesh, nu, rhs, opts):
    inner = _interior(mesh)
    K = (nu * mesh.stiffness_unit)[inner][:, inner]
    u = np.zeros(mesh.n_nodes)
    if inner.size:
        u[inner] = cg_solve(K, rhs[inner], None, opts)
    return u


def solve_elliptic(mesh: MeshCG1, w, cfg: EllipticConfig, opts: SolverOptions | None = None) -> np.ndarray:
    """Discrete state: ``nu K u = M (B w + f)`` on interior nodes, ``u = 0`` on the boundary."""
    w = np.asarray(w, dtype=float)
    src = control_operator(mesh, cfg) @ w
    if cfg.f is not None:
        src = src + np.asarray(cfg.f, dtype=float)
    return _dirichlet_solve(mesh, cfg.nu, mesh.mass @ src, opts or _DEFAULT_OPTS)


def solve_elliptic_adjoint(mesh: MeshCG1, residual, cfg: EllipticConfig,
                           opts: SolverOptions | None = None, weights=None) -> np.ndarray:
    """Adjoint state for ``J(u) = 1/2 sum_i weights_i (u_i - u_d,i)^2`` given ``residual = u - u_d``.

    ``weights`` defaults to the lumped mass.
    """
    weights = mesh.lumped if weights is None else np.asarray(weights)
    return _dirichlet_solve(mesh, cfg.nu, weights * np.asarray(residual, dtype=float), opts or _DEFAULT_OPTS)


def elliptic_gradient(mesh: MeshCG1, p, cfg: EllipticConfig) -> np.ndarray:
    """Riesz representative ``B* p`` of the reduced derivative in the lumped inner product."""
    return (control_operator(mesh, cfg).T @ (mesh.mass @ p)) / mesh.lumped
