"""Metric oracles: closed-form Frechet cases, the sorted-coupling
sliced-W2 reference, and brute-force diversity."""

import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ssg_lab.errors import NumericalError
from ssg_lab.metrics import (
    GaussianSummary,
    fit_gaussian,
    frechet_distance,
    pairwise_diversity,
    sliced_wasserstein2,
)
from ssg_lab.rng import RngStream


def _summary(mean, cov):
    return GaussianSummary(mean=np.asarray(mean, dtype=np.float64),
                           cov=np.asarray(cov, dtype=np.float64))


def _random_spd(rng, d, scale=1.0):
    a = rng.standard_normal((d, d))
    return scale * (a @ a.T) + 0.1 * np.eye(d)


# ---------------------------------------------------------------- frechet

def test_frechet_identical_is_zero():
    rng = np.random.default_rng(3)
    s = _summary(rng.standard_normal(5), _random_spd(rng, 5))
    assert abs(frechet_distance(s, s)) <= 1e-8


def test_frechet_mean_shift_same_cov():
    # equal covariances cancel the trace term, leaving ||mu_a - mu_b||^2
    cov = _random_spd(np.random.default_rng(4), 4)
    a = _summary(np.zeros(4), cov)
    b = _summary([1.0, -2.0, 0.5, 0.0], cov)
    expect = 1.0 + 4.0 + 0.25
    assert abs(frechet_distance(a, b) - expect) < 1e-8


def test_frechet_one_dim_variances():
    # N(0,1) vs N(0,4): 1 + 4 - 2*sqrt(4) = 1
    a = _summary([0.0], [[1.0]])
    b = _summary([0.0], [[4.0]])
    assert abs(frechet_distance(a, b) - 1.0) < 1e-8


def test_frechet_diagonal_closed_form():
    da = np.array([0.5, 1.0, 2.0])
    db = np.array([1.5, 0.25, 3.0])
    a = _summary(np.zeros(3), np.diag(da))
    b = _summary(np.zeros(3), np.diag(db))
    expect = float(np.sum(da) + np.sum(db) - 2.0 * np.sum(np.sqrt(da * db)))
    assert abs(frechet_distance(a, b) - expect) < 1e-8


def test_frechet_commuting_covariances_closed_form():
    # shared eigenvectors => covariances commute and the cross term is
    # sum of sqrt(da_i * db_i), checkable without any matrix sqrt
    rng = np.random.default_rng(11)
    q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    da = rng.uniform(0.1, 3.0, size=6)
    db = rng.uniform(0.1, 3.0, size=6)
    a = _summary(rng.standard_normal(6), q @ np.diag(da) @ q.T)
    b = _summary(rng.standard_normal(6), q @ np.diag(db) @ q.T)
    diff = a.mean - b.mean
    expect = float(diff @ diff + np.sum(da) + np.sum(db) - 2.0 * np.sum(np.sqrt(da * db)))
    assert abs(frechet_distance(a, b) - expect) < 1e-8


def test_frechet_symmetric_and_nonnegative():
    rng = np.random.default_rng(7)
    for _ in range(10):
        a = _summary(rng.standard_normal(4), _random_spd(rng, 4))
        b = _summary(rng.standard_normal(4), _random_spd(rng, 4))
        fab = frechet_distance(a, b)
        fba = frechet_distance(b, a)
        assert fab >= 0.0
        assert abs(fab - fba) < 1e-8


def test_frechet_dimension_mismatch():
    a = _summary(np.zeros(2), np.eye(2))
    b = _summary(np.zeros(3), np.eye(3))
    with pytest.raises(ValueError, match="dimension mismatch"):
        frechet_distance(a, b)


def test_frechet_rejects_indefinite_covariance():
    a = _summary([0.0], [[-1.0]])
    b = _summary([0.0], [[1.0]])
    with pytest.raises(NumericalError, match="not PSD"):
        frechet_distance(a, b)


def test_summary_shape_and_symmetry_validation():
    with pytest.raises(ValueError, match="inconsistent summary shapes"):
        _summary(np.zeros(3), np.eye(2))
    skew = np.eye(2)
    skew[0, 1] = 0.5
    with pytest.raises(ValueError, match="symmetric"):
        _summary(np.zeros(2), skew)


# ------------------------------------------------------------ fit_gaussian

def test_fit_gaussian_antipodal_pair():
    v = np.array([1.0, -2.0, 0.5])
    g = fit_gaussian(np.stack([v, -v]))
    assert np.allclose(g.mean, 0.0, atol=1e-12)
    # unbiased: sum of two rank-1 terms over (n-1)=1
    assert np.allclose(g.cov, 2.0 * np.outer(v, v), atol=1e-12)


def test_fit_gaussian_law_of_large_numbers():
    x = np.random.default_rng(0).standard_normal((10_000, 3))
    g = fit_gaussian(x)
    assert np.max(np.abs(g.mean)) < 0.05
    assert np.max(np.abs(g.cov - np.eye(3))) < 0.1


def test_fit_gaussian_constant_set():
    x = np.tile(np.array([0.3, -0.7]), (5, 1))
    g = fit_gaussian(x)
    assert np.allclose(g.mean, [0.3, -0.7])
    assert np.allclose(g.cov, 0.0, atol=1e-15)


def test_fit_gaussian_needs_two_samples():
    with pytest.raises(ValueError, match="at least 2"):
        fit_gaussian(np.zeros((1, 4)))


def test_fit_gaussian_rejects_nonfinite():
    x = np.zeros((4, 2))
    x[2, 1] = np.inf
    with pytest.raises(ValueError, match="non-finite"):
        fit_gaussian(x)


# --------------------------------------------------- sliced wasserstein-2

def _mirror_directions(rng, d, n_projections):
    # same construction the metric uses: column-normalized gaussian draws
    dirs = rng.generator().standard_normal((d, n_projections))
    norms = np.sqrt(np.sum(dirs * dirs, axis=0, keepdims=True))
    return dirs / np.maximum(norms, 1e-12)


def test_sw2_identical_sets_zero():
    x = np.random.default_rng(1).standard_normal((16, 3))
    assert sliced_wasserstein2(x, x.copy()) == 0.0


def test_sw2_one_dim_translation_of_point_masses():
    # every unit direction in 1-D is +-1; sorted coupling gives exactly delta
    a = np.zeros((4, 1))
    b = np.full((4, 1), 0.75)
    got = sliced_wasserstein2(a, b, n_projections=8, rng=RngStream(5))
    assert abs(got - 0.75) < 1e-12


def test_sw2_matches_sorted_coupling_oracle():
    rng_np = np.random.default_rng(9)
    a = rng_np.standard_normal((8, 2))
    b = rng_np.standard_normal((8, 2)) + 0.5
    stream = RngStream(123).child("oracle")
    got = sliced_wasserstein2(a, b, n_projections=32, rng=stream)

    dirs = _mirror_directions(stream, 2, 32)
    per_proj = []
    for k in range(32):
        pa = np.sort(a @ dirs[:, k])
        pb = np.sort(b @ dirs[:, k])
        per_proj.append(np.mean((pa - pb) ** 2))
    expect = float(np.sqrt(np.mean(per_proj)))
    assert abs(got - expect) < 1e-12


def test_sw2_translation_invariance():
    rng_np = np.random.default_rng(2)
    a = rng_np.standard_normal((12, 4))
    b = rng_np.standard_normal((12, 4)) * 1.3
    shift = np.array([5.0, -3.0, 0.25, 100.0])
    base = sliced_wasserstein2(a, b, rng=RngStream(7))
    moved = sliced_wasserstein2(a + shift, b + shift, rng=RngStream(7))
    assert abs(base - moved) < 1e-10


def test_sw2_symmetric_bitwise():
    rng_np = np.random.default_rng(6)
    a = rng_np.standard_normal((10, 3))
    b = rng_np.standard_normal((10, 3))
    assert (sliced_wasserstein2(a, b, rng=RngStream(4))
            == sliced_wasserstein2(b, a, rng=RngStream(4)))


def test_sw2_deterministic_default_rng():
    rng_np = np.random.default_rng(8)
    a = rng_np.standard_normal((6, 2))
    b = rng_np.standard_normal((6, 2))
    assert sliced_wasserstein2(a, b) == sliced_wasserstein2(a, b)


def test_sw2_unequal_sizes_quantile_path():
    rng_np = np.random.default_rng(10)
    a = rng_np.standard_normal((6, 2))
    b = rng_np.standard_normal((9, 2)) + 2.0
    got = sliced_wasserstein2(a, b, rng=RngStream(1))
    assert np.isfinite(got) and got > 0.5


def test_sw2_validation():
    a = np.zeros((4, 2))
    with pytest.raises(ValueError, match="dimension mismatch"):
        sliced_wasserstein2(a, np.zeros((4, 3)))
    with pytest.raises(ValueError, match="at least 2"):
        sliced_wasserstein2(a, np.zeros((1, 2)))
    with pytest.raises(ValueError, match="n_projections"):
        sliced_wasserstein2(a, np.zeros((4, 2)), n_projections=0)
    bad = a.copy()
    bad[0, 0] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        sliced_wasserstein2(bad, np.zeros((4, 2)))


@given(st.integers(0, 2**32 - 1))
def test_sw2_nonnegative(seed):
    rng_np = np.random.default_rng(seed)
    a = rng_np.standard_normal((5, 2))
    b = rng_np.standard_normal((5, 2))
    assert sliced_wasserstein2(a, b, n_projections=4, rng=RngStream(seed)) >= 0.0


# ---------------------------------------------------------------- diversity

def test_diversity_identical_samples():
    x = np.tile(np.array([1.0, 2.0]), (6, 1))
    assert pairwise_diversity(x) == 0.0


def test_diversity_two_points():
    x = np.array([[0.0, 0.0], [3.0, 4.0]])
    assert abs(pairwise_diversity(x) - 5.0) < 1e-12


def test_diversity_matches_bruteforce():
    x = np.random.default_rng(12).standard_normal((7, 3))
    dists = [np.linalg.norm(x[i] - x[j])
             for i, j in itertools.combinations(range(7), 2)]
    assert abs(pairwise_diversity(x) - np.mean(dists)) < 1e-10


def test_diversity_translation_invariant_and_scales():
    x = np.random.default_rng(13).standard_normal((5, 4))
    base = pairwise_diversity(x)
    assert abs(pairwise_diversity(x + 10.0) - base) < 1e-9
    assert abs(pairwise_diversity(2.0 * x) - 2.0 * base) < 1e-9


def test_diversity_needs_two_samples():
    with pytest.raises(ValueError, match="at least 2"):
        pairwise_diversity(np.zeros((1, 3)))
