# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled row kernels: softmax, cross-entropy rows and the fused SGD update."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, sqrt

cnp.import_array()


def softmax_rows(const double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], k = x.shape[1], i, j
    cdef double m, s
    out = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in range(n):
        m = x[i, 0]
        for j in range(1, k):
            if x[i, j] > m:
                m = x[i, j]
        s = 0.0
        for j in range(k):
            o[i, j] = exp(x[i, j] - m)
            s += o[i, j]
        for j in range(k):
            o[i, j] /= s
    return out


def xent_rows(const double[:, ::1] x, const long[::1] labels):
    cdef Py_ssize_t n = x.shape[0], k = x.shape[1], i, j
    cdef double m, s
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(n):
        m = x[i, 0]
        for j in range(1, k):
            if x[i, j] > m:
                m = x[i, j]
        s = 0.0
        for j in range(k):
            s += exp(x[i, j] - m)
        o[i] = m + log(s) - x[i, labels[i]]
    return out


def sq_norm(const double[::1] g):
    # four independent accumulators let the compiler pipeline the loop
    cdef Py_ssize_t i, n = g.shape[0], m = n - n % 4
    cdef double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0
    for i in range(0, m, 4):
        s0 += g[i] * g[i]
        s1 += g[i + 1] * g[i + 1]
        s2 += g[i + 2] * g[i + 2]
        s3 += g[i + 3] * g[i + 3]
    for i in range(m, n):
        s0 += g[i] * g[i]
    return (s0 + s1) + (s2 + s3)


def sgd_update(const double[::1] p, const double[::1] g, double lr,
               double weight_decay, double grad_scale):
    cdef Py_ssize_t i, n = p.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(n):
        o[i] = p[i] - lr * (g[i] * grad_scale + weight_decay * p[i])
    return out
