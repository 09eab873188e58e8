"""Pure-numpy reference implementations of the hot pair kernels.

These are the fallback backend; matweight.kernels._fast holds the
compiled versions.  Both must agree to float accuracy (see the kernel
tests and benchmarks/bench_kernels.py).
"""

import numpy as np

_CHUNK = 64


def _sigma_max(C):
    """Largest singular value of a stack of small matrices C (..., n, n)."""
    n = C.shape[-1]
    if n == 1:
        return np.abs(C[..., 0, 0])
    if n == 2:
        # closed form: s^2 = (T + sqrt(T^2 - 4 det^2)) / 2
        T = np.einsum("...ij,...ij->...", C, C)
        det = C[..., 0, 0] * C[..., 1, 1] - C[..., 0, 1] * C[..., 1, 0]
        disc = np.maximum(T * T - 4.0 * det * det, 0.0)
        return np.sqrt(0.5 * (T + np.sqrt(disc)))
    G = np.einsum("...ki,...kj->...ij", C, C)
    ev = np.linalg.eigvalsh(G)[..., -1]
    return np.sqrt(np.maximum(ev, 0.0))


def mean_opnorm_pow(A, B, expo):
    """out[i] = mean_j sigma_max(A[i] @ B[j])**expo.

    A: (Ma, n, n), B: (Mb, n, n) float64.  Returns (Ma,) float64.
    """
    A = np.ascontiguousarray(A, dtype=np.float64)
    B = np.ascontiguousarray(B, dtype=np.float64)
    Ma = A.shape[0]
    out = np.empty(Ma)
    for i0 in range(0, Ma, _CHUNK):
        Ac = A[i0 : i0 + _CHUNK]
        C = np.einsum("aij,bjk->abik", Ac, B)
        s = _sigma_max(C)
        out[i0 : i0 + _CHUNK] = np.mean(s**expo, axis=1)
    return out


def mean_abs_matvec(A, G):
    """out[i] = mean_j |A[i] @ G[j]|  (Euclidean norm).

    A: (Ma, n, n) float64, G: (Mb, n) float64 or complex128.
    """
    A = np.ascontiguousarray(A, dtype=np.float64)
    G = np.ascontiguousarray(G)
    Ma = A.shape[0]
    out = np.empty(Ma)
    for i0 in range(0, Ma, _CHUNK):
        Ac = A[i0 : i0 + _CHUNK]
        V = np.einsum("ank,bk->abn", Ac, G)
        out[i0 : i0 + _CHUNK] = np.mean(
            np.linalg.norm(V, axis=-1), axis=1
        )
    return out
