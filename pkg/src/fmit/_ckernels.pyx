# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled CRF kernels.  Same contracts as ``fmit._pykernels``."""
import numpy as np
from libc.math cimport exp, log, INFINITY


cdef inline double _lse_row(double* v, Py_ssize_t k) noexcept nogil:
    cdef Py_ssize_t i
    cdef double m = -INFINITY, s = 0.0
    for i in range(k):
        if v[i] > m:
            m = v[i]
    if m == -INFINITY:
        return m
    for i in range(k):
        s += exp(v[i] - m)
    return m + log(s)


cdef void _forward(const double[:, :] e, const double[:, :] T, const double[:] start,
                   Py_ssize_t n, Py_ssize_t K, double[:, :] alpha, double* buf) noexcept nogil:
    cdef Py_ssize_t t, i, j
    for j in range(K):
        alpha[0, j] = start[j] + e[0, j]
    for t in range(1, n):
        for j in range(K):
            for i in range(K):
                buf[i] = alpha[t - 1, i] + T[i, j]
            alpha[t, j] = _lse_row(buf, K) + e[t, j]


def crf_log_partition(const double[:, :, :] emissions, const double[:, :] transitions,
                      const double[:] start, const double[:] stop, const long[:] lengths):
    cdef Py_ssize_t B = emissions.shape[0], N = emissions.shape[1], K = emissions.shape[2]
    cdef Py_ssize_t b, j, n
    out = np.empty(B)
    cdef double[:] o = out
    alpha_arr = np.empty((N, K))
    cdef double[:, :] alpha = alpha_arr
    buf_arr = np.empty(K)
    cdef double[:] buf = buf_arr
    for b in range(B):
        n = lengths[b]
        _forward(emissions[b], transitions, start, n, K, alpha, &buf[0])
        for j in range(K):
            buf[j] = alpha[n - 1, j] + stop[j]
        o[b] = _lse_row(&buf[0], K)
    return out


def crf_marginals(const double[:, :, :] emissions, const double[:, :] transitions,
                  const double[:] start, const double[:] stop, const long[:] lengths):
    cdef Py_ssize_t B = emissions.shape[0], N = emissions.shape[1], K = emissions.shape[2]
    cdef Py_ssize_t b, t, i, j, n
    cdef double z, w
    log_z_arr = np.empty(B)
    unary_arr = np.zeros((B, N, K))
    pair_arr = np.zeros((B, K, K))
    alpha_arr = np.empty((N, K))
    beta_arr = np.empty((N, K))
    buf_arr = np.empty(K)
    cdef double[:] log_z = log_z_arr
    cdef double[:, :, :] unary = unary_arr
    cdef double[:, :, :] pair = pair_arr
    cdef double[:, :] alpha = alpha_arr
    cdef double[:, :] beta = beta_arr
    cdef double[:] buf = buf_arr
    cdef const double[:, :] e
    for b in range(B):
        n = lengths[b]
        e = emissions[b]
        _forward(e, transitions, start, n, K, alpha, &buf[0])
        for j in range(K):
            beta[n - 1, j] = stop[j]
        for t in range(n - 2, -1, -1):
            for i in range(K):
                for j in range(K):
                    buf[j] = transitions[i, j] + e[t + 1, j] + beta[t + 1, j]
                beta[t, i] = _lse_row(&buf[0], K)
        for j in range(K):
            buf[j] = alpha[n - 1, j] + stop[j]
        z = _lse_row(&buf[0], K)
        log_z[b] = z
        for t in range(n):
            for j in range(K):
                unary[b, t, j] = exp(alpha[t, j] + beta[t, j] - z)
        for t in range(1, n):
            for i in range(K):
                w = alpha[t - 1, i] - z
                for j in range(K):
                    pair[b, i, j] += exp(w + transitions[i, j] + e[t, j] + beta[t, j])
    return log_z_arr, unary_arr, pair_arr


def crf_viterbi(const double[:, :, :] emissions, const double[:, :] transitions,
                const double[:] start, const double[:] stop, const long[:] lengths):
    cdef Py_ssize_t B = emissions.shape[0], N = emissions.shape[1], K = emissions.shape[2]
    cdef Py_ssize_t b, t, i, j, n, arg
    cdef double best, cand
    paths_arr = np.full((B, N), -1, dtype=np.int64)
    scores_arr = np.empty(B)
    delta_arr = np.empty((N, K))
    back_arr = np.zeros((N, K), dtype=np.int64)
    cdef long[:, :] paths = paths_arr
    cdef double[:] scores = scores_arr
    cdef double[:, :] delta = delta_arr
    cdef long[:, :] back = back_arr
    for b in range(B):
        n = lengths[b]
        for j in range(K):
            delta[0, j] = start[j] + emissions[b, 0, j]
        for t in range(1, n):
            for j in range(K):
                arg = 0
                best = delta[t - 1, 0] + transitions[0, j]
                for i in range(1, K):
                    cand = delta[t - 1, i] + transitions[i, j]
                    if cand > best:
                        best = cand
                        arg = i
                back[t, j] = arg
                delta[t, j] = best + emissions[b, t, j]
        arg = 0
        best = delta[n - 1, 0] + stop[0]
        for j in range(1, K):
            cand = delta[n - 1, j] + stop[j]
            if cand > best:
                best = cand
                arg = j
        scores[b] = best
        paths[b, n - 1] = arg
        for t in range(n - 1, 0, -1):
            arg = back[t, arg]
            paths[b, t - 1] = arg
    return paths_arr, scores_arr
