"""Variance-preserving discrete diffusion: schedule tables, the forward
marginal, the denoising score-matching loss in epsilon parametrization
(score = -eps/sigma), and DDIM / Euler-discrete samplers.

Sampling consumes randomness only through per-element derived streams, so
results are independent of batch partitioning and worker scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import GuidanceSpec, ModelConfig, SamplerConfig, SamplerKind, ScheduleConfig
from .denoiser import backward, forward, unpatchify
from .errors import NumericalError
from .guidance import predict_guided
from .rng import RngStream


@dataclass(frozen=True)
class NoiseSchedule:
    """Discrete beta/alpha-bar tables plus the derived sampler coefficients."""

    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    sqrt_alpha_bar: np.ndarray
    sigma: np.ndarray
    lambda_weight: np.ndarray

    @property
    def train_steps(self) -> int:
        return len(self.beta)

    def validate(self) -> "NoiseSchedule":
        if not (np.all(self.beta > 0.0) and np.all(self.beta < 1.0)):
            raise ValueError("beta must lie strictly in (0,1)")
        if np.any(np.diff(self.beta) < 0.0):
            raise ValueError("beta must be nondecreasing")
        if not (np.all(np.diff(self.alpha_bar) < 0.0)
                and np.all(self.alpha_bar > 0.0) and np.all(self.alpha_bar <= 1.0)):
            raise ValueError("alpha_bar must be strictly decreasing in (0,1]")
        if np.any(np.diff(self.sigma) <= 0.0):
            raise ValueError("sigma must be increasing")
        return self


def build_schedule(cfg: ScheduleConfig) -> NoiseSchedule:
    beta = np.linspace(cfg.beta_start, cfg.beta_end, cfg.train_steps, dtype=np.float64)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    schedule = NoiseSchedule(
        beta=beta,
        alpha=alpha,
        alpha_bar=alpha_bar,
        sqrt_alpha_bar=np.sqrt(alpha_bar),
        sigma=np.sqrt(1.0 - alpha_bar),
        lambda_weight=np.ones(cfg.train_steps, dtype=np.float64),
    )
    return schedule.validate()


def _combine(sqrt_ab, sig, x0, eps):
    # single shared expression so sampler reconstructions reuse the exact
    # arithmetic of the forward marginal
    return sqrt_ab * x0 + sig * eps


def _gather_coeff(table: np.ndarray, t_ids) -> np.ndarray:
    vals = table[t_ids]
    return vals if np.ndim(vals) == 0 else vals[:, None, None]


def add_noise(schedule: NoiseSchedule, x0, t, eps):
    """Forward marginal x_t = sqrt(alpha_bar_t) x0 + sqrt(1-alpha_bar_t) eps."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ValueError(f"x0 shape {x0.shape} != eps shape {eps.shape}")
    t_ids = np.asarray(t, dtype=np.int64)
    if np.any(t_ids < 0) or np.any(t_ids >= schedule.train_steps):
        raise ValueError(f"timestep out of range [0, {schedule.train_steps})")
    return _combine(_gather_coeff(schedule.sqrt_alpha_bar, t_ids),
                    _gather_coeff(schedule.sigma, t_ids), x0, eps)


def inference_timesteps(schedule: NoiseSchedule, num_steps: int) -> np.ndarray:
    """Evenly spaced subsequence of training steps, largest first."""
    if not 1 <= num_steps <= schedule.train_steps:
        raise ValueError(f"num_steps must be in [1, {schedule.train_steps}]")
    ts = np.round(np.linspace(schedule.train_steps - 1, 0, num_steps)).astype(np.int64)
    return ts


def ddim_step(schedule: NoiseSchedule, x_t, eps_hat, t_from: int, t_to: int,
              eta: float = 0.0, rng: RngStream | None = None):
    """One DDIM update; t_to = -1 denotes the final hop to the clean estimate."""
    x_t = np.asarray(x_t, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    if x_t.shape != eps_hat.shape:
        raise ValueError(f"x_t shape {x_t.shape} != eps_hat shape {eps_hat.shape}")
    if not 0 <= t_from < schedule.train_steps:
        raise ValueError(f"t_from {t_from} out of range [0, {schedule.train_steps})")
    if not -1 <= t_to <= t_from:
        raise ValueError(f"t_to {t_to} must be in [-1, t_from]")
    ab_from = schedule.alpha_bar[t_from]
    x0_hat = (x_t - schedule.sigma[t_from] * eps_hat) / schedule.sqrt_alpha_bar[t_from]
    if t_to < 0:
        return x0_hat
    ab_to = schedule.alpha_bar[t_to]
    if eta > 0.0:
        if rng is None:
            raise ValueError("eta > 0 requires an rng stream")
        sig_tilde = eta * np.sqrt((1.0 - ab_to) / (1.0 - ab_from)) * np.sqrt(
            1.0 - ab_from / ab_to)
        dir_coef = np.sqrt(1.0 - ab_to - sig_tilde ** 2)
        out = _combine(schedule.sqrt_alpha_bar[t_to], dir_coef, x0_hat, eps_hat)
        noise = np.stack([
            rng.child("z", i).generator().standard_normal(x_t.shape[1:])
            for i in range(x_t.shape[0])
        ])
        return out + sig_tilde * noise
    return _combine(schedule.sqrt_alpha_bar[t_to], schedule.sigma[t_to], x0_hat, eps_hat)


def euler_step(x, eps_hat, sigma_from: float, sigma_to: float):
    """First-order step in rescaled sigma space; x lives at x_t/sqrt(alpha_bar)."""
    x = np.asarray(x, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    if x.shape != eps_hat.shape:
        raise ValueError(f"x shape {x.shape} != eps_hat shape {eps_hat.shape}")
    if sigma_from <= 0.0:
        raise ValueError("sigma_from must be positive")
    if sigma_to == sigma_from:
        return x.copy()
    denoised = x - sigma_from * eps_hat
    if sigma_to == 0.0:
        return denoised
    d = (x - denoised) / sigma_from
    return x + (sigma_to - sigma_from) * d


def sigma_rescaled(schedule: NoiseSchedule, t: int) -> float:
    """VP-to-sigma map sigma(t) = sqrt((1 - alpha_bar_t) / alpha_bar_t)."""
    ab = schedule.alpha_bar[t]
    return float(np.sqrt((1.0 - ab) / ab))


def dsm_loss_terms(schedule: NoiseSchedule, eps_hat, eps, t_ids) -> float:
    """Mean over the batch of lambda(t) * ||eps_hat - eps||^2 (sum per instance)."""
    resid = np.asarray(eps_hat) - np.asarray(eps)
    per_instance = np.sum(resid * resid, axis=tuple(range(1, resid.ndim)))
    return float(np.mean(schedule.lambda_weight[t_ids] * per_instance))


def dsm_loss(params, cfg: ModelConfig, schedule: NoiseSchedule, x0_tokens, labels,
             rng: RngStream, want_grads: bool = True):
    """Sample (t, eps, condition dropout) from rng, compute the loss, and
    optionally the parameter gradients of the batch-mean objective."""
    x0 = np.asarray(x0_tokens, dtype=np.float64)
    if x0.ndim != 3 or x0.shape[0] == 0:
        raise ValueError("x0 batch must be a non-empty (B, T, P) tensor")
    b = x0.shape[0]
    gen = rng.generator()
    t_ids = gen.integers(0, schedule.train_steps, size=b)
    eps = gen.standard_normal(x0.shape)
    cond_ids = np.asarray(labels, dtype=np.int64).copy()
    dropped = gen.random(b) < cfg.cond_dropout_prob
    cond_ids[dropped] = cfg.null_class
    x_t = add_noise(schedule, x0, t_ids, eps)
    if want_grads:
        eps_hat, cache = forward(params, cfg, x_t, t_ids, cond_ids, want_cache=True)
    else:
        eps_hat = forward(params, cfg, x_t, t_ids, cond_ids)
    loss = dsm_loss_terms(schedule, eps_hat, eps, t_ids)
    if not np.isfinite(loss):
        raise NumericalError("non-finite training loss")
    if not want_grads:
        return loss, None
    weights = (2.0 / b) * schedule.lambda_weight[t_ids]
    grad_out = weights[:, None, None] * (eps_hat - eps)
    return loss, backward(params, cfg, grad_out, cache)


def _init_tokens(rng: RngStream, batch: int, shape) -> np.ndarray:
    return np.stack([
        rng.child("init", i).generator().standard_normal(shape) for i in range(batch)
    ])


def sample(params, cfg: ModelConfig, schedule: NoiseSchedule, sampler: SamplerConfig,
           guidance: GuidanceSpec, cond, batch: int, rng: RngStream,
           record_trace: bool = False, eps_fn=None):
    """Draw `batch` images by running the configured sampler from pure noise.

    Returns (images, trace_records); images are flat pixel rows in model
    space, trace_records a list (empty unless record_trace and the guidance
    method produces a delta). eps_fn, when given, replaces the model call
    with a custom epsilon predictor (used by closed-form references).
    """
    token_shape = (cfg.token_count, cfg.patch_dim)
    ts = inference_timesteps(schedule, sampler.num_inference_steps)
    records = []

    def predict(x_vp, t_scalar, step_index):
        if eps_fn is not None:
            return eps_fn(x_vp, t_scalar)
        eps_tilde, rec = predict_guided(
            params, cfg, guidance, x_vp, t_scalar, cond,
            rng.child("guidance", step_index), record=record_trace)
        if rec is not None:
            records.append(rec)
        return eps_tilde

    if sampler.kind is SamplerKind.DDIM:
        x = _init_tokens(rng, batch, token_shape)
        for si, t_from in enumerate(ts):
            t_to = int(ts[si + 1]) if si + 1 < len(ts) else -1
            eps_tilde = predict(x, int(t_from), si)
            step_rng = rng.child("ddim", si) if sampler.eta > 0.0 else None
            x = ddim_step(schedule, x, eps_tilde, int(t_from), t_to,
                          eta=sampler.eta, rng=step_rng)
        x0 = x
    elif sampler.kind is SamplerKind.EULER_DISCRETE:
        sigmas = [sigma_rescaled(schedule, int(t)) for t in ts] + [0.0]
        x = _init_tokens(rng, batch, token_shape) * sigmas[0]
        for si, t_from in enumerate(ts):
            x_vp = x * schedule.sqrt_alpha_bar[int(t_from)]
            eps_tilde = predict(x_vp, int(t_from), si)
            x = euler_step(x, eps_tilde, sigmas[si], sigmas[si + 1])
        x0 = x
    else:
        raise ValueError(f"unknown sampler kind {sampler.kind}")

    if not np.all(np.isfinite(x0)):
        raise NumericalError("non-finite samples produced")
    images = unpatchify(x0, cfg.patch_side)
    return images, records
