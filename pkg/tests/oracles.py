"""Independent reference solvers used as test oracles.

They share no code with the package solvers: the projection solves for the
ball multiplier with Brent's method in the form ``(c + lam w_bar)/(1 + lam)``
and the descent is plain projected gradient with a fixed step.
"""
import numpy as np
from scipy.optimize import brentq


def project_reference(c, w_bar, weights, delta):
    def clipped(lam):
        return np.clip((c + lam * w_bar) / (1.0 + lam), 0.0, 1.0)

    def excess(lam):
        v = clipped(lam) - w_bar
        return weights @ (v * v) - delta

    if excess(0.0) <= 0.0:
        return clipped(0.0)
    hi = 1.0
    while excess(hi) > 0.0:
        hi *= 2.0
    # the root may sit a rounding error outside the ball; callers allow 1e-10 relative slack
    lam = brentq(excess, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return clipped(lam)


def convex_model(w, w_bar, g, K, weights, eps, gamma):
    c = g + (gamma / eps) * (1.0 - 2.0 * w_bar)
    return (c * weights) @ (w - w_bar) + 0.5 * gamma * eps * (w @ K @ w - w_bar @ K @ w_bar)


def nonconvex_model(w, w_bar, g, K, weights, eps, gamma):
    def energy(v):
        return 0.5 * eps * (v @ K @ v) + (weights @ (v * (1.0 - v))) / eps

    return (g * weights) @ (w - w_bar) + gamma * (energy(w) - energy(w_bar))


def reference_convex(w_bar, g, K, weights, delta, eps, gamma, iterations=20000):
    """Long-run projected gradient with step ``1/L``, ``L`` from a dense eigensolve."""
    Kd = np.asarray(K.todense()) if hasattr(K, "todense") else np.asarray(K)
    s = 1.0 / np.sqrt(weights)
    L = gamma * eps * np.linalg.eigvalsh(s[:, None] * Kd * s[None, :]).max()
    L = max(L, 1e-12)
    c = g + (gamma / eps) * (1.0 - 2.0 * w_bar)
    w = w_bar.copy()
    for _ in range(iterations):
        grad = c + gamma * eps * (Kd @ w) / weights
        w_new = project_reference(w - grad / L, w_bar, weights, delta)
        if np.max(np.abs(w_new - w)) < 1e-15:
            w = w_new
            break
        w = w_new
    return w, convex_model(w, w_bar, g, Kd, weights, eps, gamma)


def grid_search_two_nodes(w_bar, g, K, weights, delta, eps, gamma, resolution=1e-3):
    """Exhaustive minimization of the nonconvex model over the 2-node feasible set.

    Candidates are a uniform grid of ``[0, 1]^2`` plus a dense sampling of the
    trust-region boundary (where grid points rarely lie), followed by a fine
    grid around the best candidate.
    """
    w_bar, weights, Kd = np.asarray(w_bar), np.asarray(weights), np.asarray(K)

    def values(W):
        D = W - w_bar
        W = W[(D * D) @ weights <= delta * (1 + 1e-12)]
        quad = np.einsum("pi,ij,pj->p", W, Kd, W)
        energy = 0.5 * eps * quad + (W * (1.0 - W)) @ weights / eps
        e_bar = 0.5 * eps * (w_bar @ Kd @ w_bar) + weights @ (w_bar * (1.0 - w_bar)) / eps
        return W, (W - w_bar) @ (g * weights) + gamma * (energy - e_bar)

    t = np.linspace(0.0, 1.0, int(round(1.0 / resolution)) + 1)
    A, B = np.meshgrid(t, t, indexing="ij")
    theta = np.linspace(0.0, 2.0 * np.pi, 200001)
    ring = w_bar + np.sqrt(delta / weights) * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    # clipping towards w_bar keeps ring points feasible
    W, vals = values(np.vstack([np.stack([A.ravel(), B.ravel()], axis=1), np.clip(ring, 0.0, 1.0)]))
    k = np.argmin(vals)
    fine = np.linspace(-2 * resolution, 2 * resolution, 401)
    FA, FB = np.meshgrid(fine, fine, indexing="ij")
    local = np.clip(W[k] + np.stack([FA.ravel(), FB.ravel()], axis=1), 0.0, 1.0)
    W2, vals2 = values(np.vstack([W[k][None, :], local]))
    k2 = np.argmin(vals2)
    return W2[k2], vals2[k2]
