# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the p x p preconditioner updates.

All matrices are C-contiguous float64. A row-major array handed to Fortran BLAS
is read as its transpose; the symmetric operands make that harmless, and the
non-symmetric ones are passed with the transposition worked out below.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log
from scipy.linalg.cython_blas cimport dgemm, ddot, daxpy, dsymv, dsyr

cnp.import_array()


class NumericalBreakdown(FloatingPointError):
    pass


def smw_batch_update(double[:, ::1] Hinv, double[:, ::1] G, double alpha):
    """In-place ``Hinv <- (H + alpha G^T G)^{-1}`` as B successive Sherman-Morrison steps.

    Returns ``(logdet_increment, denominators)`` where ``denominators[j]`` is
    ``1 + alpha g_j^T H_{j-1}^{-1} g_j`` for the j-th rank-1 step.
    """
    cdef int p = Hinv.shape[0]
    cdef int B = G.shape[0]
    if Hinv.shape[1] != p or G.shape[1] != p:
        raise ValueError("dimension mismatch between H_inv and the Jacobian rows")
    denom_arr = np.empty(B)
    if B == 0:
        return 0.0, denom_arr
    cdef double[::1] denom = denom_arr
    Yt_arr = np.empty((B, p))
    cdef double[:, ::1] Yt = Yt_arr
    coef_arr = np.empty(B)
    cdef double[::1] coef = coef_arr

    cdef char *tn = b"N"
    cdef char *tt = b"T"
    cdef double one = 1.0, zero = 0.0, neg
    cdef int inc = 1
    cdef int i, j
    cdef double dot, s, d, logdet = 0.0

    # Yt[j] = H0^{-1} g_j for every row at once
    dgemm(tn, tn, &p, &B, &p, &one, &Hinv[0, 0], &p, &G[0, 0], &p, &zero, &Yt[0, 0], &p)

    for j in range(B):
        # H_{j-1}^{-1} g_j = H0^{-1} g_j - sum_{i<j} coef_i y_i (y_i^T g_j)
        for i in range(j):
            dot = ddot(&p, &Yt[i, 0], &inc, &G[j, 0], &inc)
            neg = -coef[i] * dot
            daxpy(&p, &neg, &Yt[i, 0], &inc, &Yt[j, 0], &inc)
        s = ddot(&p, &G[j, 0], &inc, &Yt[j, 0], &inc)
        d = 1.0 + alpha * s
        if not d > 0.0:
            raise NumericalBreakdown(
                f"Sherman-Morrison denominator {d!r} <= 0 at row {j}; preconditioner state is corrupted"
            )
        denom[j] = d
        coef[j] = alpha / d
        logdet += log(d)

    # Hinv -= sum_j coef_j y_j y_j^T, done as one rank-B product
    Ysc_arr = Yt_arr * coef_arr[:, None]
    cdef double[:, ::1] Ysc = Ysc_arr
    neg = -1.0
    dgemm(tn, tt, &p, &p, &B, &neg, &Ysc[0, 0], &p, &Yt[0, 0], &p, &one, &Hinv[0, 0], &p)
    return logdet, denom_arr


def gram_update(double[:, ::1] H, double[:, ::1] G, double alpha):
    """In-place ``H <- H + alpha G^T G``."""
    cdef int p = H.shape[0]
    cdef int B = G.shape[0]
    if H.shape[1] != p or G.shape[1] != p:
        raise ValueError("dimension mismatch between H and the Jacobian rows")
    if B == 0:
        return
    cdef char *tn = b"N"
    cdef char *tt = b"T"
    cdef double one = 1.0
    dgemm(tn, tt, &p, &p, &B, &alpha, &G[0, 0], &p, &G[0, 0], &p, &one, &H[0, 0], &p)


def smw_rank1_sequential(double[:, ::1] Hinv, double[:, ::1] G, double alpha):
    """Textbook variant: one symmetric matvec and one rank-1 write per row.

    Only the lower triangle (in Fortran terms) is written by ``dsyr``; the
    matrix is mirrored at the end so callers always see a full symmetric array.
    """
    cdef int p = Hinv.shape[0]
    cdef int B = G.shape[0]
    if Hinv.shape[1] != p or G.shape[1] != p:
        raise ValueError("dimension mismatch between H_inv and the Jacobian rows")
    denom_arr = np.empty(B)
    cdef double[::1] denom = denom_arr
    y_arr = np.empty(p)
    cdef double[::1] y = y_arr
    cdef char *lo = b"L"
    cdef double one = 1.0, zero = 0.0, neg
    cdef int inc = 1
    cdef int j
    cdef double s, d, logdet = 0.0
    for j in range(B):
        dsymv(lo, &p, &one, &Hinv[0, 0], &p, &G[j, 0], &inc, &zero, &y[0], &inc)
        s = ddot(&p, &G[j, 0], &inc, &y[0], &inc)
        d = 1.0 + alpha * s
        if not d > 0.0:
            _mirror(Hinv)
            raise NumericalBreakdown(
                f"Sherman-Morrison denominator {d!r} <= 0 at row {j}; preconditioner state is corrupted"
            )
        denom[j] = d
        logdet += log(d)
        neg = -alpha / d
        dsyr(lo, &p, &neg, &y[0], &inc, &Hinv[0, 0], &p)
    _mirror(Hinv)
    return logdet, denom_arr


cdef void _mirror(double[:, ::1] A) noexcept nogil:
    # Fortran "L" on a row-major buffer is the upper triangle in C order
    cdef Py_ssize_t n = A.shape[0]
    cdef Py_ssize_t a, b
    for a in range(n):
        for b in range(a + 1, n):
            A[b, a] = A[a, b]
