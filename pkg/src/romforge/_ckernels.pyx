# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Mirrors ``romforge._pykernels`` operation for operation."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()


cdef inline double _dot(const double[:, ::1] h, Py_ssize_t p, Py_ssize_t q, Py_ssize_t m) noexcept nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t i
    for i in range(m):
        acc += h[p, i] * h[q, i]
    return acc


cdef inline void _rotate(double[:, ::1] h, Py_ssize_t p, Py_ssize_t q, Py_ssize_t m,
                         double c, double s) noexcept nogil:
    cdef Py_ssize_t i
    cdef double a, b
    for i in range(m):
        a = h[p, i]
        b = h[q, i]
        h[p, i] = c * a - s * b
        h[q, i] = s * a + c * b


def jacobi_sweeps(double[:, ::1] h, double[:, ::1] q, double tol, int max_sweeps):
    """One-sided Jacobi on the rows of ``h`` (rotations mirrored into ``q``).

    Works in place. Returns ``(sweeps, off)`` where ``off`` is the largest
    relative row inner product seen in the last sweep.
    """
    cdef Py_ssize_t n = h.shape[0]
    cdef Py_ssize_t m = h.shape[1]
    cdef Py_ssize_t nq = q.shape[1]
    cdef Py_ssize_t p, r
    cdef int sweep = 0
    cdef int rotated
    cdef double alpha, beta, gamma, rel, off, zeta, t, c, s
    off = 0.0
    with nogil:
        while sweep < max_sweeps:
            sweep += 1
            rotated = 0
            off = 0.0
            for p in range(n - 1):
                for r in range(p + 1, n):
                    alpha = _dot(h, p, p, m)
                    beta = _dot(h, r, r, m)
                    if alpha == 0.0 or beta == 0.0:
                        continue
                    gamma = _dot(h, p, r, m)
                    rel = fabs(gamma) / sqrt(alpha * beta)
                    if rel > off:
                        off = rel
                    if rel <= tol:
                        continue
                    rotated = 1
                    zeta = (beta - alpha) / (2.0 * gamma)
                    if zeta >= 0.0:
                        t = 1.0 / (zeta + sqrt(1.0 + zeta * zeta))
                    else:
                        t = -1.0 / (-zeta + sqrt(1.0 + zeta * zeta))
                    c = 1.0 / sqrt(1.0 + t * t)
                    s = c * t
                    _rotate(h, p, r, m, c, s)
                    _rotate(q, p, r, nq, c, s)
            if not rotated:
                break
    return sweep, off


def csr_matmat(const long[::1] indptr, const long[::1] indices, const double[::1] data,
               const double[:, ::1] x):
    """Return ``A @ x`` for a CSR matrix ``A`` and a C-ordered dense ``x``."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t k = x.shape[1]
    out = np.zeros((n, k), dtype=np.float64)
    cdef double[:, ::1] y = out
    cdef Py_ssize_t i, e, j, col
    cdef double w
    with nogil:
        for i in range(n):
            for e in range(indptr[i], indptr[i + 1]):
                col = indices[e]
                w = data[e]
                for j in range(k):
                    y[i, j] += w * x[col, j]
    return out
