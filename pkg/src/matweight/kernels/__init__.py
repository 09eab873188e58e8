"""Hot pair kernels with a compiled backend and a numpy fallback.

The compiled extension is preferred when importable; set
MATW_PURE_PYTHON=1 to force the numpy reference implementation.
"""

import os

import numpy as np

from . import _pyref

BACKEND = "python"
_impl = _pyref

if os.environ.get("MATW_PURE_PYTHON") != "1":
    try:
        from . import _fast as _impl  # type: ignore

        BACKEND = "cython"
    except ImportError:
        pass


def mean_opnorm_pow(A, B, expo):
    """out[i] = mean_j ||A[i] @ B[j]||_op ** expo for stacks of n x n matrices."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    B = np.ascontiguousarray(B, dtype=np.float64)
    return _impl.mean_opnorm_pow(A, B, float(expo))


def mean_abs_matvec(A, G):
    """out[i] = mean_j |A[i] @ G[j]| (Euclidean norm of the product vector)."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    G = np.asarray(G)
    if np.iscomplexobj(G):
        # compiled kernel is real-only; complex data takes the numpy path
        return _pyref.mean_abs_matvec(A, G)
    G = np.ascontiguousarray(G, dtype=np.float64)
    return _impl.mean_abs_matvec(A, G)
