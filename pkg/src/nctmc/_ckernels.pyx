# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see ``_pykernels`` for the reference semantics."""
import numpy as np
from libc.math cimport log, INFINITY

BACKEND = "cython"

ABSORBED = -1
NEGATIVE = -2


def select_event(const double[::1] alpha, double v1, double v2):
    cdef Py_ssize_t j, n = alpha.shape[0], last = 0
    cdef double total = 0.0, acc = 0.0, target, tau, a
    for j in range(n):
        a = alpha[j]
        if not a >= 0.0:
            return 0.0, NEGATIVE
        total += a
    if total <= 0.0:
        return INFINITY, ABSORBED
    tau = log(1.0 / v1) / total
    target = v2 * total
    for j in range(n):
        a = alpha[j]
        if a > 0.0:
            acc += a
            last = j
            if target < acc:
                return tau, j
    return tau, last


def conv1d_forward(const double[:, :, ::1] x, const double[:, :, ::1] w):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], L = x.shape[2]
    cdef Py_ssize_t O = w.shape[0], K = w.shape[2], M = L - K + 1
    cdef Py_ssize_t b, o, c, m, j, off
    cdef double wv
    out = np.zeros((B, O, M))
    cdef double[:, :, ::1] y = out
    # innermost loop runs along the contiguous length axis
    for b in range(B):
        for o in range(O):
            for c in range(C):
                for j in range(K):
                    wv = w[o, c, j]
                    off = K - 1 - j
                    for m in range(M):
                        y[b, o, m] += wv * x[b, c, m + off]
    return out


def conv1d_backward(const double[:, :, ::1] gy, const double[:, :, ::1] x, const double[:, :, ::1] w):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], L = x.shape[2]
    cdef Py_ssize_t O = w.shape[0], K = w.shape[2], M = gy.shape[2]
    cdef Py_ssize_t b, o, c, m, j, off
    cdef double wv, acc
    gx_arr = np.zeros((B, C, L))
    gw_arr = np.zeros((O, C, K))
    cdef double[:, :, ::1] gx = gx_arr
    cdef double[:, :, ::1] gw = gw_arr
    for b in range(B):
        for o in range(O):
            for c in range(C):
                for j in range(K):
                    wv = w[o, c, j]
                    off = K - 1 - j
                    acc = 0.0
                    for m in range(M):
                        gx[b, c, m + off] += gy[b, o, m] * wv
                        acc += gy[b, o, m] * x[b, c, m + off]
                    gw[o, c, j] += acc
    return gx_arr, gw_arr
