import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fmit import autograd as ag
from fmit.lattice import Cell, Modality, ObjectAnnotation, ObjectKind, build_lattice
from fmit.posenc import (DistanceQuad, distance_arrays, distance_quad, relative_encoding,
                         relative_encoding_from_spans, render_distances, sinusoid, sinusoid_table)


def word(i):
    return Cell(5, Modality.WORD, i, i)


def test_distance_examples():
    assert distance_quad(word(3), word(5)) == DistanceQuad(-2, -2, -2, -2)
    assert distance_quad(Cell(1, Modality.VISUAL, 2, 4), word(3)) == (-1, -1, 1, 1)
    for c in (word(4), Cell(3, Modality.SPECIAL, 0, 0)):
        assert distance_quad(c, c) == (0, 0, 0, 0)
    # a spanned cell against itself: only the head-head and tail-tail terms vanish
    c = Cell(1, Modality.VISUAL, 2, 4)
    assert distance_quad(c, c) == (0, -2, 2, 0)


def test_sinusoid_examples():
    s = sinusoid(0, 8)
    np.testing.assert_array_equal(s[0::2], 0.0)
    np.testing.assert_array_equal(s[1::2], 1.0)
    for d in (2, 6, 32):
        assert sinusoid(1, d)[0] == pytest.approx(0.8414709848078965, abs=1e-15)
    pos, neg = sinusoid(7, 16), sinusoid(-7, 16)
    np.testing.assert_array_equal(neg[0::2], -pos[0::2])
    np.testing.assert_array_equal(neg[1::2], pos[1::2])


def test_sinusoid_matches_scalar_formula():
    d = 10
    table = sinusoid_table(np.arange(-4, 5), d)
    for r, p in enumerate(range(-4, 5)):
        for k in range(d // 2):
            w = p / 10000 ** (2 * k / d)
            assert table[r, 2 * k] == pytest.approx(math.sin(w), abs=1e-15)
            assert table[r, 2 * k + 1] == pytest.approx(math.cos(w), abs=1e-15)


def test_odd_dimension_rejected():
    with pytest.raises(ValueError, match="even"):
        sinusoid_table([0], 7)
    with pytest.raises(ValueError, match="d x 4d"):
        relative_encoding_from_spans([0], [0], np.zeros((4, 12)))


def _literal_R(heads, tails, W):
    """Straight per-pair evaluation: ReLU(W @ concat of four sinusoids)."""
    d = W.shape[0]
    L = len(heads)
    out = np.zeros((L, L, d))
    for i in range(L):
        for j in range(L):
            dist = (heads[i] - heads[j], heads[i] - tails[j], tails[i] - heads[j], tails[i] - tails[j])
            z = np.concatenate([sinusoid(x, d) for x in dist])
            out[i, j] = np.maximum(W @ z, 0.0)
    return out


def test_gathered_encoding_matches_literal_concat(rng):
    lat = build_lattice([4, 5, 6, 7, 8], [ObjectAnnotation(1, ObjectKind.WHOLE_IMAGE),
                                          ObjectAnnotation(2, ObjectKind.NOUN_PHRASE, (2, 4))])
    W = rng.normal(size=(8, 32))
    with ag.precision("float64"):
        R = relative_encoding(lat, ag.Tensor(W)).data
    np.testing.assert_allclose(R, _literal_R(lat.heads, lat.tails, W), atol=1e-12, rtol=0)


def test_zero_projection_gives_zero():
    lat = build_lattice([4, 5, 6])
    assert not relative_encoding(lat, ag.Tensor(np.zeros((4, 16)))).data.any()


def test_batched_matches_single(rng):
    heads = np.array([[0, 1, 2, 3, 1], [0, 1, 2, 0, 0]])
    tails = np.array([[0, 1, 2, 3, 2], [0, 1, 2, 0, 0]])
    W = ag.Tensor(rng.normal(size=(6, 24)))
    R = relative_encoding_from_spans(heads, tails, W).data
    for b in range(2):
        np.testing.assert_array_equal(R[b], relative_encoding_from_spans(heads[b], tails[b], W).data)


@given(st.integers(-50, 50))
def test_translation_invariance(shift):
    heads = np.array([0, 1, 2, 3, 4, 1, 2])
    tails = np.array([0, 1, 2, 3, 4, 3, 2])
    W = ag.Tensor(np.random.default_rng(3).normal(size=(8, 32)))
    a = relative_encoding_from_spans(heads, tails, W).data
    b = relative_encoding_from_spans(heads + shift, tails + shift, W).data
    assert a.tobytes() == b.tobytes()


@given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 5)), min_size=1, max_size=8))
def test_antisymmetry(cells):
    heads = np.array([h for h, _ in cells])
    tails = heads + np.array([w for _, w in cells])
    hh, ht, th, tt = distance_arrays(heads, tails)
    np.testing.assert_array_equal(hh, -hh.T)
    np.testing.assert_array_equal(tt, -tt.T)
    np.testing.assert_array_equal(ht, -th.T)


def test_render_distances_rows():
    lat = build_lattice([4, 5])
    lines = render_distances(lat).splitlines()
    assert len(lines) == 1 + 16
    assert lines[1] == "0\t0\t0\t0\t0\t0"
