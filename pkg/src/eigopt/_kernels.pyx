# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: contrast-axis log-sum-exp and stable logistic maps."""
import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, log1p, fabs, INFINITY

cnp.import_array()

BACKEND = "cython"


def lse_middle(double[:, :, ::1] a):
    """Log-sum-exp over the middle axis of a ``(pre, K, post)`` array."""
    cdef Py_ssize_t P = a.shape[0], K = a.shape[1], Q = a.shape[2]
    cdef Py_ssize_t i, k, j
    out = np.empty((P, Q), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double[::1] m = np.empty(Q, dtype=np.float64)
    cdef double v, mm, acc
    if Q == 1:
        # contrast axis last: contiguous rows
        for i in range(P):
            mm = -INFINITY
            for k in range(K):
                if a[i, k, 0] > mm:
                    mm = a[i, k, 0]
            if mm == -INFINITY or mm == INFINITY:
                o[i, 0] = mm
                continue
            acc = 0.0
            for k in range(K):
                acc += exp(a[i, k, 0] - mm)
            o[i, 0] = mm + log(acc)
        return out
    for i in range(P):
        for j in range(Q):
            m[j] = -INFINITY
        for k in range(K):
            for j in range(Q):
                v = a[i, k, j]
                if v > m[j]:
                    m[j] = v
        for j in range(Q):
            o[i, j] = 0.0
        for k in range(K):
            for j in range(Q):
                if m[j] != -INFINITY and m[j] != INFINITY:
                    o[i, j] += exp(a[i, k, j] - m[j])
        for j in range(Q):
            if m[j] == -INFINITY or m[j] == INFINITY:
                o[i, j] = m[j]
            else:
                o[i, j] = m[j] + log(o[i, j])
    return out


def softmax_middle(double[:, :, ::1] a, double[:, ::1] lse):
    """Normalised weights ``exp(a - lse)`` over the middle axis."""
    cdef Py_ssize_t P = a.shape[0], K = a.shape[1], Q = a.shape[2]
    cdef Py_ssize_t i, k, j
    out = np.empty((P, K, Q), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    cdef double s
    for i in range(P):
        for k in range(K):
            for j in range(Q):
                s = lse[i, j]
                if s == -INFINITY or s == INFINITY:
                    o[i, k, j] = 0.0
                else:
                    o[i, k, j] = exp(a[i, k, j] - s)
    return out


def sigmoid(double[::1] x):
    cdef Py_ssize_t n = x.shape[0], i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double z
    for i in range(n):
        if x[i] >= 0:
            o[i] = 1.0 / (1.0 + exp(-x[i]))
        else:
            z = exp(x[i])
            o[i] = z / (1.0 + z)
    return out


def softplus(double[::1] x):
    cdef Py_ssize_t n = x.shape[0], i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(n):
        o[i] = (x[i] if x[i] > 0 else 0.0) + log1p(exp(-fabs(x[i])))
    return out


def log_sigmoid(double[::1] x):
    cdef Py_ssize_t n = x.shape[0], i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(n):
        o[i] = (x[i] if x[i] < 0 else 0.0) - log1p(exp(-fabs(x[i])))
    return out
