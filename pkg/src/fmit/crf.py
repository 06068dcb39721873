"""Linear-chain CRF: emission projection, log-partition, NLL, Viterbi.

Sequence score for labels ``y`` of length n::

    sum_t emit[t, y_t] + sum_{t>0} trans[y_{t-1}, y_t] + start[y_0] + stop[y_{n-1}]

with ``emit = H @ W.T + b``.  Transitions, start and stop may be switched off
(``transitions=False``), leaving per-position emission scores only.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from . import kernels
from .autograd import Tensor

ENTITY_TYPES = ("PER", "LOC", "ORG", "MISC")
BIO_LABELS = ("O",) + tuple(f"{p}-{t}" for t in ENTITY_TYPES for p in ("B", "I"))
BOUNDARY_LABELS = ("O", "B", "E")


@dataclass
class CrfParams:
    W: Tensor
    b: Tensor
    transitions: Tensor | None = None
    start: Tensor | None = None
    stop: Tensor | None = None

    @classmethod
    def init(cls, num_labels: int, d: int, rng: np.random.Generator, transitions=True, prefix="crf"):
        k = 1.0 / np.sqrt(d)
        W = ag.parameter(rng.uniform(-k, k, size=(num_labels, d)), name=f"{prefix}.W")
        b = ag.parameter(np.zeros(num_labels), name=f"{prefix}.b")
        if not transitions:
            return cls(W, b)
        return cls(W, b,
                   ag.parameter(np.zeros((num_labels, num_labels)), name=f"{prefix}.transitions"),
                   ag.parameter(np.zeros(num_labels), name=f"{prefix}.start"),
                   ag.parameter(np.zeros(num_labels), name=f"{prefix}.stop"))

    @property
    def num_labels(self) -> int:
        return self.W.shape[0]

    def named(self) -> dict[str, Tensor]:
        out = {"W": self.W, "b": self.b}
        if self.transitions is not None:
            out.update(transitions=self.transitions, start=self.start, stop=self.stop)
        return out

    def _pairwise(self):
        """Transition tensors, substituting constant zeros when disabled."""
        if self.transitions is not None:
            return self.transitions, self.start, self.stop
        K, dt = self.num_labels, self.W.dtype
        return (Tensor(np.zeros((K, K), dtype=dt)), Tensor(np.zeros(K, dtype=dt)),
                Tensor(np.zeros(K, dtype=dt)))

    def pairwise_arrays(self):
        return tuple(t.data for t in self._pairwise())


def emissions(H, params: CrfParams) -> Tensor:
    """Per-position label scores ``H @ W.T + b`` for H of shape (..., n, d)."""
    H = ag.as_tensor(H)
    if H.shape[-1] != params.W.shape[1]:
        raise ValueError(f"emissions: hidden size {H.shape[-1]} != CRF input size {params.W.shape[1]}")
    return ag.matmul(H, ag.transpose(params.W)) + params.b


# ---------------------------------------------------------------- autograd ops

def _batch_log_partition(E: Tensor, T: Tensor, s: Tensor, t: Tensor, lengths) -> Tensor:
    lengths = np.asarray(lengths, dtype=np.int64)
    value = kernels.crf_log_partition(E.data, T.data, s.data, t.data, lengths)
    return ag.custom("crf_log_partition", value.astype(E.dtype), (E, T, s, t), ctx=lengths)


@ag.register_backward("crf_log_partition")
def _log_partition_bw(node, g):
    E, T, s, t = node.parents
    lengths = node.ctx
    _, unary, pair = kernels.crf_marginals(E.data, T.data, s.data, t.data, lengths)
    g = g.astype(np.float64)
    gE = unary * g[:, None, None]
    gT = (pair * g[:, None, None]).sum(axis=0)
    gs = (unary[:, 0, :] * g[:, None]).sum(axis=0)
    last = unary[np.arange(len(lengths)), lengths - 1]
    gt = (last * g[:, None]).sum(axis=0)
    dt = E.dtype
    return gE.astype(dt), gT.astype(dt), gs.astype(dt), gt.astype(dt)


def _gold_counts(labels: np.ndarray, lengths: np.ndarray, K: int):
    B, N = labels.shape
    onehot = np.zeros((B, N, K))
    pair = np.zeros((K, K))
    first = np.zeros(K)
    last = np.zeros(K)
    for b in range(B):
        n = int(lengths[b])
        y = labels[b, :n]
        onehot[b, np.arange(n), y] = 1.0
        np.add.at(pair, (y[:-1], y[1:]), 1.0)
        first[y[0]] += 1.0
        last[y[-1]] += 1.0
    return onehot, pair, first, last


def _batch_gold_score(E: Tensor, T: Tensor, s: Tensor, t: Tensor, labels, lengths) -> Tensor:
    """Sum over the batch of gold-path scores (scalar)."""
    labels = np.asarray(labels, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)
    K = E.shape[-1]
    for b, n in enumerate(lengths):
        y = labels[b, :n]
        if y.size and (y.min() < 0 or y.max() >= K):
            raise ValueError(f"label out of range [0, {K}) in sample {b}: {y.tolist()}")
    onehot, pair, first, last = _gold_counts(labels, lengths, K)
    value = ((E.data * onehot).sum() + (T.data * pair).sum()
             + s.data @ first + t.data @ last)
    dt = E.dtype
    return ag.custom("crf_gold_score", np.asarray(value, dtype=dt), (E, T, s, t),
                     ctx=tuple(a.astype(dt) for a in (onehot, pair, first, last)))


@ag.register_backward("crf_gold_score")
def _gold_score_bw(node, g):
    return tuple(g * a for a in node.ctx)


def batch_nll(E: Tensor, params: CrfParams, labels, lengths) -> Tensor:
    """Summed negative log-likelihood of gold ``labels`` (B, N) under emissions (B, N, K)."""
    E = ag.as_tensor(E)
    T, s, t = params._pairwise()
    log_z = _batch_log_partition(E, T, s, t, lengths)
    return ag.sum_(log_z) - _batch_gold_score(E, T, s, t, labels, lengths)


def batch_viterbi(E, params: CrfParams, lengths):
    """Decode (B, N, K) emissions; returns (list of label-index lists, scores)."""
    E = E.data if isinstance(E, Tensor) else np.asarray(E)
    T, s, t = params.pairwise_arrays()
    paths, scores = kernels.crf_viterbi(E, T, s, t, lengths)
    return [paths[b, :n].tolist() for b, n in enumerate(lengths)], scores


# ---------------------------------------------------------------- single sentence

def sequence_score(H, params: CrfParams, Y) -> Tensor:
    """Unnormalized log score of label indices ``Y`` for hidden states H (n, d)."""
    Y = np.asarray(Y, dtype=np.int64)
    E = emissions(H, params)
    n, K = E.shape
    if Y.shape != (n,):
        raise ValueError(f"label sequence length {Y.shape} != sentence length {n}")
    if Y.min() < 0 or Y.max() >= K:
        raise ValueError(f"label out of range [0, {K}): {Y.tolist()}")
    T, s, t = params._pairwise()
    score = ag.sum_(E[np.arange(n), Y]) + s[Y[0]] + t[Y[-1]]
    if n > 1:
        score = score + ag.sum_(T[Y[:-1], Y[1:]])
    return score


def log_partition(H, params: CrfParams) -> Tensor:
    E = emissions(H, params)
    if E.ndim != 2 or E.shape[0] < 1:
        raise ValueError(f"log_partition expects (n, K) emissions with n >= 1, got {E.shape}")
    T, s, t = params._pairwise()
    E3 = ag.reshape(E, (1,) + E.shape)
    return ag.reshape(_batch_log_partition(E3, T, s, t, [E.shape[0]]), ())


def nll(H, params: CrfParams, Y) -> Tensor:
    return log_partition(H, params) - sequence_score(H, params, Y)


def viterbi(H, params: CrfParams):
    """Best label sequence and its score; ties go to the lowest label index
    at every backtrack step."""
    E = emissions(H, params).data
    paths, scores = batch_viterbi(E[None], params, [E.shape[0]])
    return paths[0], float(scores[0])


def brute_force_oracle(emission_scores, transitions=None, start=None, stop=None, limit=10**6):
    """Exhaustive reference: ``(log_Z, best_sequence, best_score)`` over all K^n paths."""
    E = np.asarray(emission_scores, dtype=np.float64)
    n, K = E.shape
    if K ** n > limit:
        raise ValueError(f"{K}^{n} sequences exceeds the enumeration limit {limit}")
    T = np.zeros((K, K)) if transitions is None else np.asarray(transitions, dtype=np.float64)
    s = np.zeros(K) if start is None else np.asarray(start, dtype=np.float64)
    t = np.zeros(K) if stop is None else np.asarray(stop, dtype=np.float64)
    scores = []
    best, best_seq = -np.inf, None
    for seq in itertools.product(range(K), repeat=n):
        total = s[seq[0]] + t[seq[-1]]
        for i, y in enumerate(seq):
            total += E[i, y]
            if i:
                total += T[seq[i - 1], y]
        scores.append(total)
        if total > best:
            best, best_seq = total, list(seq)
    scores = np.array(scores)
    m = scores.max()
    log_z = m + np.log(np.exp(scores - m).sum())
    return float(log_z), best_seq, float(best)
