# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled scoring kernels: float64-accumulated inner products over
float32 rows, and a clamped logistic squash. Semantics match
comret._kernels.fallback up to floating-point summation order."""

from libc.math cimport exp as c_exp

import numpy as np

# Open-interval clamp bounds; keep in sync with comret._kernels.
DEF SIGMOID_FLOOR = 2.2250738585072014e-308
DEF SIGMOID_CEIL = 0.9999999999999999


def inner_products(const float[:, ::1] matrix, const double[::1] query):
    """Inner product of ``query`` (float64) with every float32 row."""
    cdef Py_ssize_t m = matrix.shape[0]
    cdef Py_ssize_t d = matrix.shape[1]
    if query.shape[0] != d:
        raise ValueError("query length does not match matrix dim")
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t i, j
    # Eight independent accumulator chains so the compiler can keep the
    # strict-IEEE float64 adds in SIMD lanes.
    cdef double s0, s1, s2, s3, s4, s5, s6, s7
    with nogil:
        for i in range(m):
            s0 = s1 = s2 = s3 = s4 = s5 = s6 = s7 = 0.0
            j = 0
            while j + 8 <= d:
                s0 = s0 + query[j] * <double> matrix[i, j]
                s1 = s1 + query[j + 1] * <double> matrix[i, j + 1]
                s2 = s2 + query[j + 2] * <double> matrix[i, j + 2]
                s3 = s3 + query[j + 3] * <double> matrix[i, j + 3]
                s4 = s4 + query[j + 4] * <double> matrix[i, j + 4]
                s5 = s5 + query[j + 5] * <double> matrix[i, j + 5]
                s6 = s6 + query[j + 6] * <double> matrix[i, j + 6]
                s7 = s7 + query[j + 7] * <double> matrix[i, j + 7]
                j += 8
            while j < d:
                s0 = s0 + query[j] * <double> matrix[i, j]
                j += 1
            ov[i] = ((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7))
    return out


def logistic(values):
    """Elementwise 1/(1+exp(-x)), clamped to stay strictly inside (0, 1)."""
    cdef const double[::1] xv = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    cdef double v
    with nogil:
        for i in range(n):
            v = 1.0 / (1.0 + c_exp(-xv[i]))
            if v < SIGMOID_FLOOR:
                v = SIGMOID_FLOOR
            elif v > SIGMOID_CEIL:
                v = SIGMOID_CEIL
            ov[i] = v
    return out
