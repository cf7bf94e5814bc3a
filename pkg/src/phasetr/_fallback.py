"""NumPy implementations of the compiled kernels in ``_kernels.pyx``.

Signatures and return conventions are identical so :mod:`phasetr.kernels`
can swap one for the other.
"""
import numpy as np
import scipy.sparse as sp


def csr_matvec(indptr, indices, data, x):
    n = len(indptr) - 1
    return sp.csr_matrix((data, indices, indptr), shape=(n, len(x))) @ x


def pcg(indptr, indices, data, b, x0, tol, max_iter):
    n = len(b)
    A = sp.csr_matrix((data, indices, indptr), shape=(n, n))
    diag = A.diagonal()
    dinv = np.where(diag > 0.0, 1.0 / np.where(diag > 0.0, diag, 1.0), 1.0)
    x = np.array(x0, dtype=float, copy=True)
    b = np.asarray(b, dtype=float)
    bnorm = np.sqrt(b @ b)
    r = b - A @ x
    z = dinv * r
    p = z.copy()
    rz = r @ z
    rnorm = np.sqrt(r @ r)
    hist = [np.sqrt(abs(rz))]
    it = 0
    while rnorm > tol * bnorm and it < max_iter:
        ap = A @ p
        pap = p @ ap
        if pap <= 0.0:
            break
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
        it += 1
        rnorm = np.sqrt(r @ r)
        hist.append(np.sqrt(abs(rz)))
    return x, it, rnorm, np.array(hist)


def _clip_step(cand, wbar, weights, t):
    w = np.clip(wbar + t * (cand - wbar), 0.0, 1.0)
    dev = w - wbar
    return w, weights @ (dev * dev)


def project_box_ball(cand, wbar, weights, delta, max_bisect):
    w, dist = _clip_step(cand, wbar, weights, 1.0)
    if dist <= delta:
        return w, 1.0, 0
    lo, hi, k = 0.0, 1.0, 0
    while k < max_bisect and hi - lo > 1e-15 * hi:
        mid = 0.5 * (lo + hi)
        if _clip_step(cand, wbar, weights, mid)[1] > delta:
            hi = mid
        else:
            lo = mid
        k += 1
    if hi - lo > 1e-15 * hi:
        k = -1
    return _clip_step(cand, wbar, weights, lo)[0], lo, k


def triangle_pair_sums(a, b, triangles, local, chunk=16):
    out = np.zeros(triangles.shape[0])
    for start in range(0, a.shape[0], chunk):
        at = a[start:start + chunk][:, triangles]
        bt = b[start:start + chunk][:, triangles]
        out += np.einsum("fti,tij,ftj->t", at, local, bt, optimize=True)
    return out
