# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: Jacobi-PCG on CSR data, box/ball projection and
per-triangle bilinear-form accumulation.  Semantics match ``_fallback``."""
import numpy as np

from libc.math cimport sqrt, fabs


cdef inline void _matvec(const int[::1] indptr, const int[::1] indices,
                         const double[::1] data, const double[::1] x,
                         double[::1] y) noexcept nogil:
    cdef Py_ssize_t i, k
    cdef double s
    for i in range(indptr.shape[0] - 1):
        s = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            s += data[k] * x[indices[k]]
        y[i] = s


cdef inline double _dot(const double[::1] a, const double[::1] b) noexcept nogil:
    cdef Py_ssize_t i
    cdef double s = 0.0
    for i in range(a.shape[0]):
        s += a[i] * b[i]
    return s


def csr_matvec(const int[::1] indptr, const int[::1] indices,
               const double[::1] data, const double[::1] x):
    y = np.empty(indptr.shape[0] - 1)
    _matvec(indptr, indices, data, x, y)
    return y


def pcg(const int[::1] indptr, const int[::1] indices, const double[::1] data,
        const double[::1] b, const double[::1] x0, double tol, int max_iter):
    """Returns (x, iterations, final residual 2-norm, preconditioned-norm history)."""
    cdef Py_ssize_t n = b.shape[0], i, k
    cdef int it = 0
    cdef double bnorm, rnorm, rz, rz_new, alpha, beta, pap
    x_arr = np.array(x0, dtype=np.float64, copy=True)
    r_arr = np.empty(n)
    z_arr = np.empty(n)
    p_arr = np.empty(n)
    ap_arr = np.empty(n)
    dinv_arr = np.empty(n)
    hist_arr = np.zeros(max_iter + 1)
    cdef double[::1] x = x_arr, r = r_arr, z = z_arr, p = p_arr, ap = ap_arr
    cdef double[::1] dinv = dinv_arr, hist = hist_arr

    with nogil:
        for i in range(n):
            dinv[i] = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                if indices[k] == i:
                    dinv[i] += data[k]
            dinv[i] = 1.0 / dinv[i] if dinv[i] > 0.0 else 1.0
        bnorm = sqrt(_dot(b, b))
        _matvec(indptr, indices, data, x, ap)
        for i in range(n):
            r[i] = b[i] - ap[i]
            z[i] = dinv[i] * r[i]
            p[i] = z[i]
        rz = _dot(r, z)
        rnorm = sqrt(_dot(r, r))
        hist[0] = sqrt(fabs(rz))
        while rnorm > tol * bnorm and it < max_iter:
            _matvec(indptr, indices, data, p, ap)
            pap = _dot(p, ap)
            if pap <= 0.0:
                break
            alpha = rz / pap
            for i in range(n):
                x[i] += alpha * p[i]
                r[i] -= alpha * ap[i]
                z[i] = dinv[i] * r[i]
            rz_new = _dot(r, z)
            beta = rz_new / rz
            rz = rz_new
            for i in range(n):
                p[i] = z[i] + beta * p[i]
            it += 1
            rnorm = sqrt(_dot(r, r))
            hist[it] = sqrt(fabs(rz))
    return x_arr, it, rnorm, hist_arr[: it + 1]


cdef double _ball_dist(const double[::1] cand, const double[::1] wbar,
                       const double[::1] weights, double t, double[::1] out) noexcept nogil:
    cdef Py_ssize_t i
    cdef double v, s = 0.0
    for i in range(cand.shape[0]):
        v = wbar[i] + t * (cand[i] - wbar[i])
        if v < 0.0:
            v = 0.0
        elif v > 1.0:
            v = 1.0
        out[i] = v
        v -= wbar[i]
        s += weights[i] * v * v
    return s


def project_box_ball(const double[::1] cand, const double[::1] wbar,
                     const double[::1] weights, double delta, int max_bisect):
    """Returns (w, t, steps) with steps = -1 when bisection did not converge."""
    cdef Py_ssize_t n = cand.shape[0]
    cdef double lo = 0.0, hi = 1.0, mid
    cdef int k = 0
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    with nogil:
        if _ball_dist(cand, wbar, weights, 1.0, out) <= delta:
            lo = 1.0
        else:
            while k < max_bisect and hi - lo > 1e-15 * hi:
                mid = 0.5 * (lo + hi)
                if _ball_dist(cand, wbar, weights, mid, out) > delta:
                    hi = mid
                else:
                    lo = mid
                k += 1
            if hi - lo > 1e-15 * hi:
                k = -1
        _ball_dist(cand, wbar, weights, lo, out)
    return out_arr, lo, k


def triangle_pair_sums(const double[:, ::1] a, const double[:, ::1] b,
                       const long[:, ::1] triangles, const double[:, :, ::1] local):
    """out[t] = sum_f a[f, tri_t]^T local[t] b[f, tri_t]."""
    cdef Py_ssize_t nf = a.shape[0], nt = triangles.shape[0], f, t, i, j
    cdef long vi, vj
    out_arr = np.zeros(nt)
    cdef double[::1] out = out_arr
    cdef double s
    with nogil:
        for f in range(nf):
            for t in range(nt):
                s = 0.0
                for i in range(3):
                    vi = triangles[t, i]
                    for j in range(3):
                        vj = triangles[t, j]
                        s += a[f, vi] * local[t, i, j] * b[f, vj]
                out[t] += s
    return out_arr
