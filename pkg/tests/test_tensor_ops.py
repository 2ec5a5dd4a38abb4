"""Numeric primitives: normalization, similarity, softmax, layer norm, gelu."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ssg_lab.rng import RngStream
from ssg_lab.tensor_ops import (
    cosine_similarity_matrix,
    gelu,
    gelu_backward,
    l2_normalize_rows,
    layer_norm,
    layer_norm_backward,
    matmul,
    softmax_backward,
    softmax_lastaxis,
    softmax_rows,
)


def _gen(tag, *more):
    return RngStream(1234).child(tag, *more).generator()


# ---------------------------------------------------------------- normalize

def test_l2_normalize_345_triangle():
    out = l2_normalize_rows(np.array([[3.0, 4.0]]))
    assert np.allclose(out, [[0.6, 0.8]], atol=1e-15)


def test_l2_normalize_zero_row_convention():
    out = l2_normalize_rows(np.array([[0.0, 0.0]]), eps=1e-12)
    assert np.array_equal(out, [[0.0, 0.0]])


def test_l2_normalize_random_norms():
    m = _gen("l2").standard_normal((5, 7))
    out = l2_normalize_rows(m)
    norms = np.linalg.norm(out, axis=1)
    for n in norms:
        assert n == 0.0 or abs(n - 1.0) < 1e-10


def test_l2_normalize_rejects_nonfinite():
    with pytest.raises(ValueError):
        l2_normalize_rows(np.array([[np.nan, 1.0]]))
    with pytest.raises(ValueError):
        cosine_similarity_matrix(np.array([[np.inf, 1.0], [0.0, 1.0]]))


def test_l2_normalize_requires_positive_eps():
    with pytest.raises(ValueError):
        l2_normalize_rows(np.ones((2, 2)), eps=0.0)


# --------------------------------------------------------------- similarity

def test_cosine_orthogonal():
    sim = cosine_similarity_matrix(np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert abs(sim[0, 1]) < 1e-15 and abs(sim[1, 0]) < 1e-15


def test_cosine_45_degrees():
    sim = cosine_similarity_matrix(np.array([[1.0, 0.0], [1.0, 1.0]]))
    assert abs(sim[0, 1] - 1.0 / np.sqrt(2.0)) < 1e-12


def test_cosine_matches_bruteforce():
    m = _gen("cos").standard_normal((8, 4))
    sim = cosine_similarity_matrix(m)
    # O(T^2 D) reference: normalize then dot every pair explicitly
    for i in range(8):
        for j in range(8):
            a = m[i] / np.linalg.norm(m[i])
            b = m[j] / np.linalg.norm(m[j])
            assert abs(sim[i, j] - float(a @ b)) < 1e-12


def test_cosine_zero_row_is_zero_everywhere():
    m = np.array([[0.0, 0.0], [1.0, 2.0], [3.0, -1.0]])
    sim = cosine_similarity_matrix(m)
    assert np.array_equal(sim[0], np.zeros(3))
    assert np.array_equal(sim[:, 0], np.zeros(3))
    assert sim[0, 0] == 0.0


def test_cosine_symmetric_unit_diagonal():
    m = _gen("cos2").standard_normal((6, 3))
    sim = cosine_similarity_matrix(m)
    assert np.array_equal(sim, sim.T)
    assert np.allclose(np.diag(sim), 1.0, atol=1e-12)


def test_cosine_requires_two_rows():
    with pytest.raises(ValueError):
        cosine_similarity_matrix(np.ones((1, 4)))


# ------------------------------------------------------------------- matmul

def test_matmul_identity():
    a = _gen("mm").standard_normal((3, 3))
    assert np.array_equal(matmul(np.eye(3), a), a)


def test_matmul_matches_triple_loop():
    a = _gen("mm2", 0).standard_normal((16, 16))
    b = _gen("mm2", 1).standard_normal((16, 16))
    ref = np.zeros((16, 16))
    for i in range(16):
        for j in range(16):
            ref[i, j] = float(np.sum(a[i, :] * b[:, j]))
    out = matmul(a, b)
    assert np.max(np.abs(out - ref)) / np.max(np.abs(ref)) < 1e-12


def test_matmul_shape_mismatch():
    with pytest.raises(ValueError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


# ------------------------------------------------------------------ softmax

def test_softmax_symmetry():
    assert np.allclose(softmax_rows(np.array([[0.0, 0.0]])), [[0.5, 0.5]])


def test_softmax_rows_sum_to_one():
    m = _gen("sm").standard_normal((9, 5)) * 30.0  # large logits stay stable
    p = softmax_rows(m)
    assert np.all(p >= 0.0) and np.all(p <= 1.0)
    assert np.max(np.abs(p.sum(axis=1) - 1.0)) < 1e-12


def test_softmax_lastaxis_matches_rows_on_2d():
    m = _gen("sm2").standard_normal((4, 6))
    assert np.array_equal(softmax_rows(m), softmax_lastaxis(m))


def test_softmax_backward_finite_difference():
    g = _gen("smb")
    x = g.standard_normal((3, 5))
    up = g.standard_normal((3, 5))
    p = softmax_lastaxis(x)
    grad = softmax_backward(p, up)
    h = 1e-6
    for i in range(3):
        for j in range(5):
            xp = x.copy(); xp[i, j] += h
            xm = x.copy(); xm[i, j] -= h
            fd = (np.sum(softmax_lastaxis(xp) * up) - np.sum(softmax_lastaxis(xm) * up)) / (2 * h)
            assert abs(grad[i, j] - fd) < 1e-7


# --------------------------------------------------------------- layer norm

def test_layer_norm_constant_row_is_zero():
    x = np.full((1, 1, 4), 3.7)
    out, _ = layer_norm(x, np.ones(4), np.zeros(4))
    assert np.allclose(out, 0.0, atol=1e-9)


def test_layer_norm_standardizes():
    x = _gen("ln").standard_normal((2, 3, 16)) * 5 + 2
    out, _ = layer_norm(x, np.ones(16), np.zeros(16))
    assert np.max(np.abs(out.mean(axis=-1))) < 1e-9
    assert np.max(np.abs(out.var(axis=-1) - 1.0)) < 1e-4  # eps shifts variance slightly


def test_layer_norm_gain_bias_applied():
    x = _gen("ln2").standard_normal((1, 2, 8))
    gamma = np.arange(1.0, 9.0)
    beta = np.arange(8.0)
    out, _ = layer_norm(x, gamma, beta)
    base, _ = layer_norm(x, np.ones(8), np.zeros(8))
    assert np.allclose(out, base * gamma + beta, atol=1e-12)


def test_layer_norm_backward_finite_difference():
    g = _gen("lnb")
    x = g.standard_normal((2, 3, 6))
    gamma = g.standard_normal(6) + 1.5
    beta = g.standard_normal(6)
    up = g.standard_normal((2, 3, 6))

    out, cache = layer_norm(x, gamma, beta)
    gx, ggamma, gbeta = layer_norm_backward(cache, up)
    h = 1e-6

    def f(xv, gv, bv):
        return float(np.sum(layer_norm(xv, gv, bv)[0] * up))

    flat = x.ravel()
    for k in (0, 7, 20, 35):
        xp = x.copy(); xp.ravel()[k] += h
        xm = x.copy(); xm.ravel()[k] -= h
        fd = (f(xp, gamma, beta) - f(xm, gamma, beta)) / (2 * h)
        assert abs(gx.ravel()[k] - fd) < 1e-6
    for k in (0, 3, 5):
        gp = gamma.copy(); gp[k] += h
        gm = gamma.copy(); gm[k] -= h
        fd = (f(x, gp, beta) - f(x, gm, beta)) / (2 * h)
        assert abs(ggamma[k] - fd) < 1e-6
        bp = beta.copy(); bp[k] += h
        bm = beta.copy(); bm[k] -= h
        fd = (f(x, gamma, bp) - f(x, gamma, bm)) / (2 * h)
        assert abs(gbeta[k] - fd) < 1e-6


# --------------------------------------------------------------------- gelu

def test_gelu_reference_values():
    # tanh-approximation form, checked against a literal transcription
    x = np.array([-3.0, -1.0, 0.0, 0.5, 2.0])
    c = np.sqrt(2.0 / np.pi)
    ref = 0.5 * x * (1.0 + np.tanh(c * (x + 0.044715 * x ** 3)))
    assert np.allclose(gelu(x), ref, atol=1e-15)


def test_gelu_backward_finite_difference():
    g = _gen("gelu")
    x = g.standard_normal(40) * 2.0
    up = g.standard_normal(40)
    grad = gelu_backward(x, up)
    h = 1e-6
    fd = (gelu(x + h) - gelu(x - h)) / (2 * h) * up
    assert np.max(np.abs(grad - fd)) < 1e-7


def test_gelu_tanh_cache_path_identical():
    x = _gen("gelu2").standard_normal(64)
    up = np.ones(64)
    y, t = gelu(x, return_tanh=True)
    assert np.array_equal(gelu_backward(x, up, tanh_inner=t),
                          gelu_backward(x, up))


# --------------------------------------------------------------- properties

@given(st.integers(min_value=0, max_value=10_000))
def test_ops_pure(seed):
    g1 = np.random.default_rng(seed).standard_normal((4, 4))
    g2 = np.random.default_rng(seed).standard_normal((4, 4))
    assert np.array_equal(softmax_rows(g1), softmax_rows(g2))
    assert np.array_equal(l2_normalize_rows(g1), l2_normalize_rows(g2))
