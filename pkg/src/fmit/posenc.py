"""Relative position encoding over head/tail spans.

For cells i, j the four distances (hh, ht, th, tt) are each expanded with
sinusoids, concatenated in that order and mapped by ``W_r`` (d x 4d) then
ReLU.  ``W_r`` applied to the concatenation equals the sum of its four
column blocks applied to the blocks, so each block's projection is computed
once per distinct distance value and gathered per pair.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .lattice import Cell, FlatLattice


class DistanceQuad(NamedTuple):
    hh: int
    ht: int
    th: int
    tt: int


def distance_quad(ci: Cell, cj: Cell) -> DistanceQuad:
    return DistanceQuad(ci.head - cj.head, ci.head - cj.tail, ci.tail - cj.head, ci.tail - cj.tail)


def distance_arrays(heads, tails):
    """All-pairs (hh, ht, th, tt) distances for (..., L) head/tail arrays."""
    h = np.asarray(heads, dtype=np.int64)
    t = np.asarray(tails, dtype=np.int64)
    hi, ti = h[..., :, None], t[..., :, None]
    hj, tj = h[..., None, :], t[..., None, :]
    return hi - hj, hi - tj, ti - hj, ti - tj


def check_dim(d: int) -> None:
    if d <= 0 or d % 2:
        raise ValueError(f"sinusoid dimension must be a positive even number, got {d}")


def sinusoid_table(positions, d: int) -> np.ndarray:
    """Rows ``[sin(p / 10000^(2k/d)), cos(p / 10000^(2k/d))]`` interleaved, float64."""
    check_dim(d)
    pos = np.asarray(positions, dtype=np.float64)
    freq = 1.0 / np.power(10000.0, np.arange(0, d, 2, dtype=np.float64) / d)
    angle = pos[..., None] * freq
    out = np.empty(pos.shape + (d,))
    out[..., 0::2] = np.sin(angle)
    out[..., 1::2] = np.cos(angle)
    return out


def sinusoid(pos: int, d: int) -> np.ndarray:
    return sinusoid_table(pos, d)


def relative_encoding_from_spans(heads, tails, W_r: Tensor) -> Tensor:
    """R of shape (..., L, L, d) for batched head/tail arrays of shape (..., L)."""
    W_r = ag.as_tensor(W_r)
    d = W_r.shape[0]
    if W_r.shape != (d, 4 * d):
        raise ValueError(f"W_r must be d x 4d, got {W_r.shape}")
    quads = distance_arrays(heads, tails)
    values, inverse = np.unique(np.stack(quads), return_inverse=True)
    inverse = inverse.reshape((4,) + quads[0].shape)
    table = Tensor(sinusoid_table(values, d).astype(W_r.dtype))
    total = None
    for k in range(4):
        block = W_r[:, k * d:(k + 1) * d]
        projected = ag.matmul(table, ag.transpose(block))
        part = ag.gather(projected, inverse[k])
        total = part if total is None else total + part
    return ag.relu(total)


def relative_encoding(lattice: FlatLattice, W_r: Tensor) -> Tensor:
    """R (L x L x d) for one lattice."""
    return relative_encoding_from_spans(lattice.heads, lattice.tails, W_r)


def render_distances(lattice: FlatLattice) -> str:
    """Text dump of the DistanceQuad matrix, one ``i j hh ht th tt`` row per pair."""
    lines = ["i\tj\thh\tht\tth\ttt"]
    for i, ci in enumerate(lattice.cells):
        for j, cj in enumerate(lattice.cells):
            q = distance_quad(ci, cj)
            lines.append(f"{i}\t{j}\t{q.hh}\t{q.ht}\t{q.th}\t{q.tt}")
    return "\n".join(lines)
