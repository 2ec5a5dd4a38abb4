"""Distributional metrics in pixel space: Gaussian Frechet distance,
sliced Wasserstein-2, and mean pairwise diversity.

These are trend-preserving desk-scale surrogates; the Frechet surrogate
uses raw pixels rather than learned features and is not comparable to
published FID numbers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .rng import RngStream


@dataclass(frozen=True)
class GaussianSummary:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        if self.mean.ndim != 1 or self.cov.shape != (self.mean.size, self.mean.size):
            raise ValueError(f"inconsistent summary shapes {self.mean.shape} / {self.cov.shape}")
        if not np.allclose(self.cov, self.cov.T, atol=1e-10):
            raise ValueError("covariance must be symmetric")

    @property
    def dim(self) -> int:
        return self.mean.size


def _check_samples(x, name: str = "samples") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be (N, d), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def fit_gaussian(samples) -> GaussianSummary:
    """Sample mean and unbiased covariance, explicitly symmetrized."""
    x = _check_samples(samples)
    if x.shape[0] < 2:
        raise ValueError(f"need at least 2 samples, got {x.shape[0]}")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (x.shape[0] - 1)
    cov = 0.5 * (cov + cov.T)
    return GaussianSummary(mean=mean, cov=cov)


def _sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    sym = 0.5 * (mat + mat.T)
    eigvals, eigvecs = np.linalg.eigh(sym)
    if eigvals.min() < -1e-8:
        raise NumericalError(
            f"matrix is not PSD within tolerance (min eigenvalue {eigvals.min():.3e})")
    eigvals = np.clip(eigvals, 0.0, None)
    return (eigvecs * np.sqrt(eigvals)) @ eigvecs.T


def frechet_distance(a: GaussianSummary, b: GaussianSummary) -> float:
    """||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2})."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch {a.dim} vs {b.dim}")
    diff = a.mean - b.mean
    root_a = _sqrtm_psd(a.cov)
    cross = _sqrtm_psd(root_a @ b.cov @ root_a)
    value = float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * np.trace(cross))
    return max(value, 0.0)


def sliced_wasserstein2(a, b, n_projections: int = 128, rng: RngStream | None = None) -> float:
    """Root-mean of squared 1-D Wasserstein-2 distances over random unit
    projections; exact sorted coupling at equal sizes, quantile alignment
    otherwise."""
    xa = _check_samples(a, "a")
    xb = _check_samples(b, "b")
    if xa.shape[1] != xb.shape[1]:
        raise ValueError(f"dimension mismatch {xa.shape[1]} vs {xb.shape[1]}")
    if xa.shape[0] < 2 or xb.shape[0] < 2:
        raise ValueError("need at least 2 samples per set")
    if n_projections < 1:
        raise ValueError("n_projections must be >= 1")
    rng = rng if rng is not None else RngStream(0).child("sw2")
    gen = rng.generator()
    dirs = gen.standard_normal((xa.shape[1], n_projections))
    norms = np.sqrt(np.sum(dirs * dirs, axis=0, keepdims=True))
    dirs = dirs / np.maximum(norms, 1e-12)
    pa = xa @ dirs
    pb = xb @ dirs
    if xa.shape[0] == xb.shape[0]:
        qa = np.sort(pa, axis=0)
        qb = np.sort(pb, axis=0)
    else:
        m = max(xa.shape[0], xb.shape[0])
        qs = (np.arange(m) + 0.5) / m
        qa = np.quantile(pa, qs, axis=0)
        qb = np.quantile(pb, qs, axis=0)
    w2_sq = np.mean((qa - qb) ** 2, axis=0)
    return float(np.sqrt(np.mean(w2_sq)))


def pairwise_diversity(samples) -> float:
    """Mean L2 distance over all unordered sample pairs."""
    x = _check_samples(samples)
    n = x.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    iu = np.triu_indices(n, k=1)
    return float(np.mean(np.sqrt(np.clip(d2[iu], 0.0, None))))
