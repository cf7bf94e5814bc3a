"""Homotopy trust-region optimization of binary controls in PDE-constrained problems.

Controls ``w`` take values in ``[0, 1]`` on a CG1 mesh; perimeter regularization
is approximated by a Ginzburg-Landau energy whose interface width ``eps`` is
driven to zero while a trust-region method minimizes the reduced objective.
"""
from .kernels import BACKEND
from .mesh import MeshCG1, build_mesh
from .linsolve import SolverOptions, cg_solve
from .wave import SourceSpec, WaveConfig, solve_forward, solve_adjoint
from .elliptic import EllipticConfig, solve_elliptic
from .objective import GLParams, gl_energy, interface_diagnostics
from .problems import EllipticProblem, QuadraticProblem, WaveProblem, gradient_check
from .subproblem import SubproblemSpec, project_box_ball, solve_convex, solve_nonconvex
from .homotopy import HomotopyParams, run
from .config import RunConfig, load_config

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "MeshCG1",
    "build_mesh",
    "SolverOptions",
    "cg_solve",
    "SourceSpec",
    "WaveConfig",
    "solve_forward",
    "solve_adjoint",
    "EllipticConfig",
    "solve_elliptic",
    "GLParams",
    "gl_energy",
    "interface_diagnostics",
    "EllipticProblem",
    "QuadraticProblem",
    "WaveProblem",
    "gradient_check",
    "SubproblemSpec",
    "project_box_ball",
    "solve_convex",
    "solve_nonconvex",
    "HomotopyParams",
    "run",
    "RunConfig",
    "load_config",
]
