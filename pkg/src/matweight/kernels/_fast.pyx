# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled pair kernels: spectral-norm power means and |A g| means.

Same contracts as matweight.kernels._pyref; real float64 only.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, pow, sqrt
from libc.stdlib cimport free, malloc

cnp.import_array()

DEF MAXITER = 1000


cdef double _sigma_max(double* P, int n, double* scratch) nogil:
    """Largest singular value of the n x n matrix P (row-major)."""
    cdef int i, j, k, it
    cdef double T, det, disc, nrm, prev, s
    cdef double *G
    cdef double *v
    cdef double *w
    if n == 1:
        return fabs(P[0])
    if n == 2:
        T = P[0] * P[0] + P[1] * P[1] + P[2] * P[2] + P[3] * P[3]
        det = P[0] * P[3] - P[1] * P[2]
        disc = T * T - 4.0 * det * det
        if disc < 0.0:
            disc = 0.0
        return sqrt(0.5 * (T + sqrt(disc)))
    # general n: power iteration on G = P^T P
    G = scratch
    v = scratch + n * n
    w = scratch + n * n + n
    for i in range(n):
        for j in range(n):
            s = 0.0
            for k in range(n):
                s += P[k * n + i] * P[k * n + j]
            G[i * n + j] = s
    for i in range(n):
        v[i] = 1.0 / sqrt(<double> n)
    prev = 0.0
    for it in range(MAXITER):
        nrm = 0.0
        for i in range(n):
            s = 0.0
            for j in range(n):
                s += G[i * n + j] * v[j]
            w[i] = s
            nrm += s * s
        nrm = sqrt(nrm)
        if nrm == 0.0:
            return 0.0
        for i in range(n):
            v[i] = w[i] / nrm
        if fabs(nrm - prev) <= 1e-15 * nrm:
            break
        prev = nrm
    return sqrt(nrm)


def mean_opnorm_pow(double[:, :, ::1] A, double[:, :, ::1] B, double expo):
    """out[i] = mean_j sigma_max(A[i] @ B[j])**expo."""
    cdef Py_ssize_t Ma = A.shape[0]
    cdef Py_ssize_t Mb = B.shape[0]
    cdef int n = <int> A.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(Ma)
    cdef double[::1] ov = out
    cdef double *P
    cdef double *scratch
    cdef Py_ssize_t i, j
    cdef int r, c, k
    cdef double acc, s
    P = <double*> malloc(n * n * sizeof(double))
    scratch = <double*> malloc((n * n + 2 * n) * sizeof(double))
    if P == NULL or scratch == NULL:
        free(P)
        free(scratch)
        raise MemoryError()
    with nogil:
        for i in range(Ma):
            acc = 0.0
            for j in range(Mb):
                for r in range(n):
                    for c in range(n):
                        s = 0.0
                        for k in range(n):
                            s += A[i, r, k] * B[j, k, c]
                        P[r * n + c] = s
                acc += pow(_sigma_max(P, n, scratch), expo)
            ov[i] = acc / Mb
    free(P)
    free(scratch)
    return out


def mean_abs_matvec(double[:, :, ::1] A, double[:, ::1] G):
    """out[i] = mean_j |A[i] @ G[j]|."""
    cdef Py_ssize_t Ma = A.shape[0]
    cdef Py_ssize_t Mb = G.shape[0]
    cdef int n = <int> A.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(Ma)
    cdef double[::1] ov = out
    cdef Py_ssize_t i, j
    cdef int r, k
    cdef double acc, s, comp
    with nogil:
        for i in range(Ma):
            acc = 0.0
            for j in range(Mb):
                s = 0.0
                for r in range(n):
                    comp = 0.0
                    for k in range(n):
                        comp += A[i, r, k] * G[j, k]
                    s += comp * comp
                acc += sqrt(s)
            ov[i] = acc / Mb
    return out
