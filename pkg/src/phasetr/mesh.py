"""Structured CG1 triangulations of rectangles and the operators built on them.

Every square cell is split along its lower-left to upper-right diagonal and
nodes are numbered row-major (x fastest).  Sparse operators are returned as
canonical :class:`scipy.sparse.csr_matrix` objects (sorted, duplicate-free
column indices).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

__all__ = [
    "MeshError",
    "MeshCG1",
    "build_mesh",
    "assemble_mass",
    "assemble_stiffness",
    "lumped_mass",
    "norms",
    "triangle_average",
    "quadrature_points",
    "interpolate",
    "l2_project",
    "write_field",
    "read_field",
    "write_vtk",
]

_MASS_REF = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0

# Degree-5 seven-point rule on the reference triangle (barycentric, weights sum to 1).
_A1 = (6.0 - np.sqrt(15.0)) / 21.0
_A2 = (6.0 + np.sqrt(15.0)) / 21.0
_W1 = (155.0 - np.sqrt(15.0)) / 1200.0
_W2 = (155.0 + np.sqrt(15.0)) / 1200.0
_QUAD_BARY = np.array(
    [
        [1 / 3, 1 / 3, 1 / 3],
        [_A1, _A1, 1 - 2 * _A1],
        [_A1, 1 - 2 * _A1, _A1],
        [1 - 2 * _A1, _A1, _A1],
        [_A2, _A2, 1 - 2 * _A2],
        [_A2, 1 - 2 * _A2, _A2],
        [1 - 2 * _A2, _A2, _A2],
    ]
)
_QUAD_W = np.array([9 / 40, _W1, _W1, _W1, _W2, _W2, _W2])


class MeshError(ValueError):
    """Invalid mesh parameters or a field that does not fit the mesh."""


@dataclass(frozen=True, eq=False)
class MeshCG1:
    """Uniform triangulation of ``[x_min, x_max] x [y_min, y_max]``.

    Attributes
    ----------
    nodes : (n_nodes, 2) float array
    triangles : (n_triangles, 3) int array, counter-clockwise
    boundary_nodes : sorted int array of nodes on the outer boundary
    """

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nx: int
    ny: int
    nodes: np.ndarray
    triangles: np.ndarray
    boundary_nodes: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    @property
    def hx(self) -> float:
        return (self.x_max - self.x_min) / self.nx

    @property
    def hy(self) -> float:
        return (self.y_max - self.y_min) / self.ny

    @cached_property
    def triangle_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """Gradients of the three hat functions on each triangle, shape (T, 3, 2)."""
        p = self.nodes[self.triangles]
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns e1, e2
        inv_t = np.linalg.inv(jac).transpose(0, 2, 1)
        ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        return np.einsum("tij,kj->tki", inv_t, ref)

    @cached_property
    def local_stiffness(self) -> np.ndarray:
        """Unit-coefficient element stiffness matrices, shape (T, 3, 3)."""
        g = self.basis_gradients
        return self.triangle_areas[:, None, None] * np.einsum("tik,tjk->tij", g, g)

    @cached_property
    def _pattern(self) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        # Sparsity pattern plus a (nnz x 9T) scatter map from element entries to CSR data.
        n, t = self.n_nodes, self.n_triangles
        rows = np.repeat(self.triangles, 3, axis=1).ravel()
        cols = np.tile(self.triangles, (1, 3)).ravel()
        keys = rows * n + cols
        uniq = np.unique(keys)  # sorted by row, then column: CSR order
        pos = np.searchsorted(uniq, keys)
        indptr = np.searchsorted(uniq // n, np.arange(n + 1)).astype(np.int32)
        indices = (uniq % n).astype(np.int32)
        pattern = sp.csr_matrix((np.zeros(uniq.size), indices, indptr), shape=(n, n))
        scatter = sp.csr_matrix(
            (np.ones(9 * t), (pos, np.arange(9 * t))), shape=(uniq.size, 9 * t)
        )
        return pattern, scatter

    def _assemble(self, local: np.ndarray) -> sp.csr_matrix:
        pattern, scatter = self._pattern
        data = scatter @ local.reshape(-1)
        mat = sp.csr_matrix(
            (data, pattern.indices.copy(), pattern.indptr.copy()), shape=pattern.shape
        )
        mat.has_sorted_indices = True
        return mat

    @cached_property
    def mass(self) -> sp.csr_matrix:
        return self._assemble(self.triangle_areas[:, None, None] * _MASS_REF[None])

    @cached_property
    def stiffness_unit(self) -> sp.csr_matrix:
        return self._assemble(self.local_stiffness)

    @cached_property
    def lumped(self) -> np.ndarray:
        return np.asarray(self.mass.sum(axis=1)).ravel()


def build_mesh(bounds, nx: int, ny: int) -> MeshCG1:
    """Triangulate the rectangle ``bounds = (x_min, x_max, y_min, y_max)``.

    >>> m = build_mesh((0.0, 1.0, 0.0, 1.0), 2, 3)
    >>> m.n_nodes, m.n_triangles
    (12, 12)
    """
    try:
        x_min, x_max, y_min, y_max = (float(v) for v in bounds)
    except (TypeError, ValueError) as exc:
        raise MeshError(f"bounds must be four numbers, got {bounds!r}") from exc
    if not (np.isfinite([x_min, x_max, y_min, y_max]).all()):
        raise MeshError("bounds must be finite")
    if not (x_max > x_min and y_max > y_min):
        raise MeshError(f"empty rectangle {bounds!r}")
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise MeshError(f"cell counts must be positive integers, got nx={nx}, ny={ny}")
    nx, ny = int(nx), int(ny)

    xs = np.linspace(x_min, x_max, nx + 1)
    ys = np.linspace(y_min, y_max, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    ll = (j * (nx + 1) + i).ravel()
    lr = ll + 1
    ul = ll + nx + 1
    ur = ul + 1
    lower = np.column_stack([ll, lr, ur])
    upper = np.column_stack([ll, ur, ul])
    triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    jj, ii = np.divmod(np.arange(nodes.shape[0]), nx + 1)
    on_boundary = (ii == 0) | (ii == nx) | (jj == 0) | (jj == ny)
    boundary = np.flatnonzero(on_boundary)

    for arr in (nodes, triangles, boundary):
        arr.setflags(write=False)
    return MeshCG1(x_min, x_max, y_min, y_max, nx, ny, nodes, triangles, boundary)


def assemble_mass(mesh: MeshCG1) -> sp.csr_matrix:
    """Consistent P1 mass matrix."""
    return mesh.mass.copy()


def assemble_stiffness(mesh: MeshCG1, coeff=1.0) -> sp.csr_matrix:
    """Stiffness matrix of ``div(coeff grad .)`` with a per-triangle coefficient.

    ``coeff`` is a scalar or an array with one value per triangle.  No boundary
    conditions are applied, so rows sum to zero.
    """
    c = np.asarray(coeff, dtype=float)
    if c.ndim == 0:
        c = np.full(mesh.n_triangles, float(c))
    if c.shape != (mesh.n_triangles,):
        raise MeshError(f"coefficient needs {mesh.n_triangles} values, got shape {c.shape}")
    if not np.isfinite(c).all():
        raise MeshError("stiffness coefficient contains NaN or Inf")
    return mesh._assemble(c[:, None, None] * mesh.local_stiffness)


def lumped_mass(mesh: MeshCG1) -> np.ndarray:
    """Row sums of the consistent mass matrix."""
    return mesh.lumped.copy()


def _check_field(mesh: MeshCG1, field) -> np.ndarray:
    w = np.asarray(field, dtype=float)
    if w.shape != (mesh.n_nodes,):
        raise MeshError(f"field has shape {w.shape}, mesh has {mesh.n_nodes} nodes")
    return w


def norms(field, mesh: MeshCG1) -> dict[str, float]:
    """Lumped L1 and squared L2 norms and the squared H1 seminorm of a nodal field."""
    w = _check_field(mesh, field)
    d = mesh.lumped
    return {
        "l1": float(d @ np.abs(w)),
        "l2_sq": float(d @ (w * w)),
        "h1_semi_sq": float(w @ (mesh.stiffness_unit @ w)),
    }


def triangle_average(mesh: MeshCG1, nodal) -> np.ndarray:
    """Mean of the three vertex values on every triangle."""
    v = _check_field(mesh, nodal)
    return v[mesh.triangles].mean(axis=1)


def quadrature_points(mesh: MeshCG1) -> tuple[np.ndarray, np.ndarray]:
    """Points (T, 7, 2) and weights (T, 7) of a degree-5 rule on every triangle."""
    p = mesh.nodes[mesh.triangles]
    pts = np.einsum("qi,tik->tqk", _QUAD_BARY, p)
    wts = mesh.triangle_areas[:, None] * _QUAD_W[None, :]
    return pts, wts


def interpolate(mesh: MeshCG1, func) -> np.ndarray:
    """Nodal interpolant of a vectorized callable ``func(x, y)``."""
    return np.asarray(func(mesh.nodes[:, 0], mesh.nodes[:, 1]), dtype=float) * np.ones(mesh.n_nodes)


def l2_project(mesh: MeshCG1, func, tol: float = 1e-13) -> np.ndarray:
    """L2 projection onto CG1 using the consistent mass matrix."""
    from .linsolve import SolverOptions, cg_solve

    pts, wts = quadrature_points(mesh)
    vals = np.asarray(func(pts[..., 0], pts[..., 1]), dtype=float) * np.ones(pts.shape[:2])
    local = np.einsum("tq,qi->ti", wts * vals, _QUAD_BARY)
    rhs = np.bincount(mesh.triangles.ravel(), weights=local.ravel(), minlength=mesh.n_nodes)
    return cg_solve(mesh.mass, rhs, None, SolverOptions(tol=tol, max_iter=10 * mesh.n_nodes))


def write_field(path, mesh: MeshCG1, values) -> Path:
    """Write a nodal field in the plain-text dump format."""
    w = _check_field(mesh, values)
    path = Path(path)
    lines = [f"{mesh.nx} {mesh.ny} {mesh.x_min!r} {mesh.x_max!r} {mesh.y_min!r} {mesh.y_max!r}"]
    lines.extend(repr(float(v)) for v in w)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_field(path) -> tuple[MeshCG1, np.ndarray]:
    """Read a field dump; returns the mesh it was defined on and the values."""
    text = Path(path).read_text().split("\n")
    head = text[0].split()
    if len(head) != 6:
        raise MeshError(f"{path}: malformed header {text[0]!r}")
    nx, ny = int(head[0]), int(head[1])
    mesh = build_mesh(tuple(float(v) for v in head[2:]), nx, ny)
    values = np.array([float(v) for v in text[1:] if v.strip()])
    return mesh, _check_field(mesh, values)


def write_vtk(path, mesh: MeshCG1, values, name: str = "w") -> Path:
    """Legacy-VTK structured-points file with the nodal values."""
    w = _check_field(mesh, values)
    path = Path(path)
    with path.open("w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"{name}\nASCII\nDATASET STRUCTURED_POINTS\n")
        fh.write(f"DIMENSIONS {mesh.nx + 1} {mesh.ny + 1} 1\n")
        fh.write(f"ORIGIN {mesh.x_min!r} {mesh.y_min!r} 0\n")
        fh.write(f"SPACING {mesh.hx!r} {mesh.hy!r} 1\n")
        fh.write(f"POINT_DATA {mesh.n_nodes}\nSCALARS {name} double 1\nLOOKUP_TABLE default\n")
        fh.write("\n".join(repr(float(v)) for v in w) + "\n")
    return path
