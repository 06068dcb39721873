"""Pure numpy CRF kernels; the fallback when the compiled extension is absent.

Shapes: emissions ``(B, N, K)``, transitions ``(K, K)`` indexed
``[previous, current]``, start/stop ``(K,)``, lengths ``(B,)`` with
``1 <= lengths[b] <= N``.  All inputs float64; positions at or past a
sample's length are ignored.
"""
import numpy as np


def _lse(x, axis):
    m = x.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(x - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def crf_log_partition(emissions, transitions, start, stop, lengths):
    B = emissions.shape[0]
    out = np.empty(B)
    for b in range(B):
        n = int(lengths[b])
        alpha = start + emissions[b, 0]
        for t in range(1, n):
            alpha = _lse(alpha[:, None] + transitions, axis=0) + emissions[b, t]
        out[b] = _lse(alpha + stop, axis=0)
    return out


def crf_marginals(emissions, transitions, start, stop, lengths):
    """Forward-backward.  Returns ``(logZ, unary, pair)`` where ``unary[b, t, k]``
    is P(y_t = k) and ``pair[b, i, j]`` sums P(y_{t-1} = i, y_t = j) over t."""
    B, N, K = emissions.shape
    log_z = np.empty(B)
    unary = np.zeros((B, N, K))
    pair = np.zeros((B, K, K))
    for b in range(B):
        n = int(lengths[b])
        e = emissions[b, :n]
        alpha = np.empty((n, K))
        beta = np.empty((n, K))
        alpha[0] = start + e[0]
        for t in range(1, n):
            alpha[t] = _lse(alpha[t - 1][:, None] + transitions, axis=0) + e[t]
        beta[n - 1] = stop
        for t in range(n - 2, -1, -1):
            beta[t] = _lse(transitions + (e[t + 1] + beta[t + 1])[None, :], axis=1)
        z = _lse(alpha[n - 1] + stop, axis=0)
        log_z[b] = z
        unary[b, :n] = np.exp(alpha + beta - z)
        for t in range(1, n):
            pair[b] += np.exp(alpha[t - 1][:, None] + transitions + (e[t] + beta[t])[None, :] - z)
    return log_z, unary, pair


def crf_viterbi(emissions, transitions, start, stop, lengths):
    """Best path per sample; ties go to the lowest label index.  Padded
    positions of ``paths`` are -1."""
    B, N, K = emissions.shape
    paths = np.full((B, N), -1, dtype=np.int64)
    scores = np.empty(B)
    for b in range(B):
        n = int(lengths[b])
        delta = start + emissions[b, 0]
        back = np.zeros((n, K), dtype=np.int64)
        for t in range(1, n):
            cand = delta[:, None] + transitions
            back[t] = np.argmax(cand, axis=0)
            delta = cand[back[t], np.arange(K)] + emissions[b, t]
        final = delta + stop
        best = int(np.argmax(final))
        scores[b] = final[best]
        paths[b, n - 1] = best
        for t in range(n - 1, 0, -1):
            best = int(back[t, best])
            paths[b, t - 1] = best
    return paths, scores
