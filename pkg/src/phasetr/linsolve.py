"""Jacobi-preconditioned conjugate gradients for the SPD systems of the solvers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels

__all__ = ["SolverOptions", "ConvergenceError", "CGInfo", "cg_solve"]


@dataclass(frozen=True)
class SolverOptions:
    """Relative residual tolerance and iteration cap for :func:`cg_solve`."""

    tol: float = 1e-10
    max_iter: int = 10_000

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError(f"max_iter must be a positive integer, got {self.max_iter}")


class ConvergenceError(RuntimeError):
    """CG did not reach the requested tolerance."""

    def __init__(self, message, residual, iterations):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class CGInfo:
    iterations: int
    residual: float
    history: np.ndarray


def cg_solve(A, b, x0=None, opts: SolverOptions | None = None, return_info=False):
    """Solve ``A x = b`` for symmetric positive-definite ``A``.

    Stops once ``||A x - b||_2 <= tol * ||b||_2``.  With ``return_info`` the
    iteration count, final residual and the history of preconditioned
    residual norms ``sqrt(r^T D^{-1} r)`` are returned as well.

    Raises
    ------
    ConvergenceError
        If the tolerance is not met within ``opts.max_iter`` iterations.
    """
    opts = opts or SolverOptions()
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or b.shape != (n,):
        raise ValueError(f"incompatible shapes {A.shape} and {b.shape}")
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    if x0.shape != (n,):
        raise ValueError(f"x0 has shape {x0.shape}, expected ({n},)")

    x, it, res, hist = kernels.pcg(A, b, x0, opts.tol, opts.max_iter)
    bnorm = float(np.linalg.norm(b))
    if res > opts.tol * bnorm:
        raise ConvergenceError(
            f"CG stopped after {it} iterations with residual {res:.3e} "
            f"(target {opts.tol * bnorm:.3e})",
            residual=res,
            iterations=it,
        )
    if return_info:
        return x, CGInfo(it, float(res), np.asarray(hist))
    return x
