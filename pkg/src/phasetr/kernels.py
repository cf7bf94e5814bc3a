"""Backend selection for the hot kernels.

The compiled extension ``phasetr._kernels`` is used when it imports; setting
``PHASETR_PURE_PYTHON=1`` forces the NumPy fallback.  ``BACKEND`` names the
active implementation.
"""
import os

import numpy as np

from . import _fallback

if os.environ.get("PHASETR_PURE_PYTHON", "") == "1":
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _fallback
        BACKEND = "python"
    else:
        BACKEND = "compiled"

IMPLEMENTATIONS = {"python": _fallback}
if BACKEND == "compiled":
    IMPLEMENTATIONS["compiled"] = _impl


def _csr_arrays(A):
    return (
        np.ascontiguousarray(A.indptr, dtype=np.int32),
        np.ascontiguousarray(A.indices, dtype=np.int32),
        np.ascontiguousarray(A.data, dtype=np.float64),
    )


def csr_matvec(A, x, impl=None):
    impl = impl or _impl
    return impl.csr_matvec(*_csr_arrays(A), np.ascontiguousarray(x, dtype=np.float64))


def pcg(A, b, x0, tol, max_iter, impl=None):
    """Jacobi-preconditioned CG; returns ``(x, iterations, residual, history)``."""
    impl = impl or _impl
    return impl.pcg(
        *_csr_arrays(A),
        np.ascontiguousarray(b, dtype=np.float64),
        np.ascontiguousarray(x0, dtype=np.float64),
        float(tol),
        int(max_iter),
    )


def project_box_ball(cand, wbar, weights, delta, max_bisect, impl=None):
    impl = impl or _impl
    return impl.project_box_ball(
        np.ascontiguousarray(cand, dtype=np.float64),
        np.ascontiguousarray(wbar, dtype=np.float64),
        np.ascontiguousarray(weights, dtype=np.float64),
        float(delta),
        int(max_bisect),
    )


def triangle_pair_sums(a, b, triangles, local, impl=None):
    impl = impl or _impl
    return impl.triangle_pair_sums(
        np.ascontiguousarray(a, dtype=np.float64),
        np.ascontiguousarray(b, dtype=np.float64),
        np.ascontiguousarray(triangles, dtype=np.int64),
        np.ascontiguousarray(local, dtype=np.float64),
    )
