"""Trust-region subproblems over ``{w in [0,1]^n : ||w - w_bar||_d^2 <= delta}``.

All inner products, norms and gradients use the lumped-mass weights ``d``.
The convex model linearizes the double well at ``w_bar``::

    (g + (gamma/eps)(1 - 2 w_bar), w - w_bar)_d + (gamma eps / 2)(w'Kw - w_bar'K w_bar)

and the nonconvex model keeps it::

    (g, w - w_bar)_d + gamma (E_eps(w) - E_eps(w_bar)).

Both optimal values are nonpositive because ``w_bar`` is feasible with value 0;
the solvers fall back to ``w_bar`` if an iterate would violate that.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .objective import GLParams

__all__ = [
    "ProjectionError",
    "SubproblemSpec",
    "SubproblemResult",
    "project_box_ball",
    "convex_objective",
    "nonconvex_objective",
    "lipschitz_estimate",
    "solve_convex",
    "solve_nonconvex",
]


class ProjectionError(RuntimeError):
    """Bisection for the ball multiplier did not converge."""


@dataclass(frozen=True, eq=False)
class SubproblemSpec:
    w_bar: np.ndarray
    g: np.ndarray
    delta: float
    gl: GLParams
    stiffness: object
    weights: np.ndarray
    variant: str = "convex"

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"trust-region radius must be positive, got {self.delta}")
        if self.variant not in ("convex", "nonconvex"):
            raise ValueError(f"unknown variant {self.variant!r}")
        w = np.asarray(self.w_bar)
        if w.min() < -1e-12 or w.max() > 1 + 1e-12:
            raise ValueError("linearization point is not in [0, 1]")


@dataclass(frozen=True, eq=False)
class SubproblemResult:
    w_star: np.ndarray
    objective_value: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list, repr=False)


def project_box_ball(candidate, w_bar, delta: float, weights, max_bisect: int = 200) -> np.ndarray:
    """Weighted-L2 projection onto the box ``[0,1]^n`` intersected with the trust region.

    The minimizer has the form ``clip(w_bar + t (candidate - w_bar), 0, 1)`` with
    ``t = 1 / (1 + lambda)`` for the ball multiplier ``lambda >= 0``; ``t`` is
    found by bisection and the returned point is always on the feasible side.
    """
    w, _, steps = kernels.project_box_ball(candidate, w_bar, weights, delta, max_bisect)
    if steps < 0:
        raise ProjectionError(f"ball multiplier bisection did not converge in {max_bisect} steps")
    return w


def _linear_coeff(spec: SubproblemSpec) -> np.ndarray:
    eps, gamma = spec.gl.epsilon, spec.gl.gamma
    return spec.g + (gamma / eps) * (1.0 - 2.0 * spec.w_bar)


def _quad_diff(spec: SubproblemSpec, w) -> float:
    # w'Kw - wb'K wb written to avoid cancellation
    return float((w - spec.w_bar) @ (spec.stiffness @ (w + spec.w_bar)))


def convex_objective(spec: SubproblemSpec, w) -> float:
    eps, gamma = spec.gl.epsilon, spec.gl.gamma
    lin = (_linear_coeff(spec) * spec.weights) @ (w - spec.w_bar)
    return float(lin + 0.5 * gamma * eps * _quad_diff(spec, w))


def nonconvex_objective(spec: SubproblemSpec, w) -> float:
    eps, gamma = spec.gl.epsilon, spec.gl.gamma
    wb = spec.w_bar
    lin = (spec.g * spec.weights) @ (w - wb)
    # Psi(w) - Psi(wb) = (w - wb)(1 - w - wb)
    well = spec.weights @ ((w - wb) * (1.0 - w - wb))
    return float(lin + gamma * (0.5 * eps * _quad_diff(spec, w) + well / eps))


def lipschitz_estimate(stiffness, weights, iterations: int = 100) -> float:
    """Largest eigenvalue of ``D^{-1} K`` by power iteration, capped by Gershgorin."""
    n = weights.size
    absrow = np.asarray(abs(stiffness).sum(axis=1)).ravel()
    bound = float(np.max(absrow / weights)) if n else 0.0
    if bound == 0.0:
        return 0.0
    v = np.random.default_rng(0).standard_normal(n)
    lam = 0.0
    for _ in range(iterations):
        kv = stiffness @ v
        nrm = np.sqrt(v @ (weights * v))
        if nrm == 0.0:
            break
        lam = (v @ kv) / nrm**2
        v = kv / weights
        v /= np.sqrt(v @ (weights * v))
    return min(1.1 * lam, bound)


def _dnorm(spec, v) -> float:
    return float(np.sqrt(spec.weights @ (v * v)))


def solve_convex(spec: SubproblemSpec, tol: float = 1e-9, max_iter: int = 5000) -> SubproblemResult:
    """Monotone accelerated projected gradient on the convex model.

    Stops when the weighted norm of the gradient mapping drops below ``tol``
    times its value at ``w_bar``, or when an accepted step changes the
    objective by less than ``tol**2`` relative.
    """
    eps, gamma = spec.gl.epsilon, spec.gl.gamma
    wb, d, K = np.asarray(spec.w_bar, dtype=float), spec.weights, spec.stiffness
    c = _linear_coeff(spec)
    L = gamma * eps * lipschitz_estimate(K, d)
    # a tiny curvature still gives the exact projected minimizer of the linear part
    L = max(L, 1e-12 * max(float(np.abs(c).max()), 1e-300))

    def grad(w):
        return c + gamma * eps * (K @ w) / d

    def project(v):
        return project_box_ball(v, wb, spec.delta, d)

    x = wb.copy()
    fx = 0.0
    z = project(wb - grad(wb) / L)
    g0 = L * _dnorm(spec, z - wb)
    if g0 == 0.0:
        return SubproblemResult(wb.copy(), 0.0, 0, True, [0.0])

    y, t = x.copy(), 1.0
    history = [fx]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        z = project(y - grad(y) / L)
        gmap = L * _dnorm(spec, z - y)
        fz = convex_objective(spec, z)
        if fz <= fx:
            x_new, f_new = z, fz
        else:
            x_new, f_new = x, fx
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = x_new + (t / t_new) * (z - x_new) + ((t - 1.0) / t_new) * (x_new - x)
        change = fx - f_new
        x, fx, t = x_new, f_new, t_new
        history.append(fx)
        if gmap <= tol * g0 or (0.0 < change <= tol**2 * abs(fx)):
            converged = True
            break

    if fx > 0.0:
        return SubproblemResult(wb.copy(), 0.0, it, converged, history)
    return SubproblemResult(x, fx, it, converged, history)


def _descend(spec: SubproblemSpec, start, L0: float, tol: float, g_scale: float, max_iter: int):
    eps, gamma = spec.gl.epsilon, spec.gl.gamma
    wb, d, K = spec.w_bar, spec.weights, spec.stiffness

    def grad(w):
        return spec.g + gamma * eps * (K @ w) / d + (gamma / eps) * (1.0 - 2.0 * w)

    x = start
    fx = nonconvex_objective(spec, x)
    step = 1.0 / L0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        gx = grad(x)
        s = step
        while True:
            z = project_box_ball(x - s * gx, wb, spec.delta, d)
            fz = nonconvex_objective(spec, z)
            dz = z - x
            model = fx + (gx * d) @ dz + (d @ (dz * dz)) / (2.0 * s)
            if fz <= model + 1e-15 * abs(fx) or s < 1e-30 * step:
                break
            s *= 0.5
        if fz > fx:  # numerical noise; keep the better point
            converged = True
            break
        gmap = _dnorm(spec, dz) / s
        change = fx - fz
        x, fx = z, fz
        if gmap <= tol * g_scale or change <= tol**2 * max(abs(fx), 1e-300):
            converged = True
            break
    return x, fx, it, converged


def _best_flip(spec: SubproblemSpec, x):
    """Most decreasing move of one coordinate towards the opposite pure phase.

    Each coordinate moves as far as the trust region allows with the others
    fixed, so every candidate is feasible.
    Returns ``(index, value, change)``; ``index`` is -1 when no feasible flip
    lowers the objective.  All ``n`` candidates cost one sparse product.
    """
    eps, gamma = spec.gl.epsilon, spec.gl.gamma
    wb, d, K = spec.w_bar, spec.weights, spec.stiffness
    # room for coordinate i alone with all others fixed
    slack = spec.delta - d @ (x - wb) ** 2 + d * (x - wb) ** 2
    reach = np.sqrt(np.maximum(slack, 0.0) / d)
    y = np.clip((x < 0.5).astype(float), wb - reach, wb + reach)
    step = y - x
    kx = K @ x
    diag = K.diagonal()
    change = (spec.g * d * step + 0.5 * gamma * eps * (2.0 * step * kx + step * step * diag)
              + (gamma / eps) * d * (y * (1.0 - y) - x * (1.0 - x)))
    i = int(np.argmin(change))
    if not change[i] < 0.0:
        return -1, 0.0, 0.0
    return i, y[i], float(change[i])


def solve_nonconvex(spec: SubproblemSpec, tol: float = 1e-9, n_starts: int = 4,
                    max_iter: int = 5000, seed: int = 0, workers: int = 1,
                    max_flips: int = 20) -> SubproblemResult:
    """Multi-start projected gradient on the nonconvex model.

    Starts, in order: ``w_bar``, the convex-model solution, the binarized
    ``w_bar`` and random feasible points; the best final value wins, ties go
    to the earlier start.  The winner is then polished by up to ``max_flips``
    rounds of moving the single most profitable coordinate to the opposite
    pure phase and descending again.  This is a local heuristic, not a
    global solver.
    """
    eps, gamma = spec.gl.epsilon, spec.gl.gamma
    wb, d = np.asarray(spec.w_bar, dtype=float), spec.weights
    cvx = solve_convex(spec, tol=tol, max_iter=max_iter)
    rng = np.random.default_rng(seed)

    def binarized(v):
        return project_box_ball((v > 0.5).astype(float), wb, spec.delta, d)

    starts = [wb.copy(), cvx.w_star, binarized(wb)]
    while len(starts) < n_starts:
        starts.append(project_box_ball(rng.uniform(0.0, 1.0, wb.size), wb, spec.delta, d))
    starts = starts[: max(n_starts, 2)]

    L0 = gamma * eps * lipschitz_estimate(spec.stiffness, d)
    L0 = max(L0, 1e-12 * max(float(np.abs(spec.g).max()) + gamma / eps, 1e-300))
    g_scale = max(_dnorm(spec, spec.g + (gamma / eps) * (1.0 - 2.0 * wb)), 1e-300)

    def run(start):
        return _descend(spec, start, L0, tol, g_scale, max_iter)

    # each descent owns its state; the reduction below is order-deterministic
    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run, starts))
    else:
        outcomes = [run(s) for s in starts]

    best = None
    values = [fx for _, fx, _, _ in outcomes]
    total_iters = sum(it for _, _, it, _ in outcomes)
    all_converged = all(conv for _, _, _, conv in outcomes)
    for x, fx, _, _ in outcomes:
        if best is None or fx < best[1]:
            best = (x, fx)
    x, fx = best
    for _ in range(max_flips):
        i, value, _ = _best_flip(spec, x)
        if i < 0:
            break
        z = x.copy()
        z[i] = value
        z, fz, it, _ = _descend(spec, z, L0, tol, g_scale, max_iter)
        total_iters += it
        if not fz < fx:
            break
        x, fx = z, fz
        values.append(fx)
    if fx > 0.0:
        return SubproblemResult(wb.copy(), 0.0, total_iters, all_converged, values)
    return SubproblemResult(x, fx, total_iters, all_converged, values)
