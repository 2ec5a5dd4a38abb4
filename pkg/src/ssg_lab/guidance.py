"""Guidance combinators and dispatch.

Two linear extrapolations cover every method here:

    cfg:    eps = eps_cond + omega * (eps_cond - eps_uncond)
    swap:   eps = eps_ori  + omega * (eps_ori  - eps_pert)

with the perturbed branch supplied by token/channel swaps, input-space
noise, or identity attention. Zero scales and zero deltas short-circuit to
the clean prediction itself so collapse properties hold bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .config import GuidanceMethod, GuidanceSpec, ModelConfig
from .denoiser import ConditionSpec, PerturbSpec, _as_cond_ids, forward, forward_two_branch
from .errors import ConfigError
from .rng import RngStream


def _extrapolate(eps_base, eps_away, omega: float):
    eps_base = np.asarray(eps_base, dtype=np.float64)
    eps_away = np.asarray(eps_away, dtype=np.float64)
    if eps_base.shape != eps_away.shape:
        raise ValueError(f"shape mismatch {eps_base.shape} vs {eps_away.shape}")
    if omega < 0.0:
        raise ValueError(f"guidance scale must be >= 0, got {omega}")
    if omega == 0.0:
        return eps_base.copy()
    delta = eps_base - eps_away
    if not delta.any():
        # identical branches: return the base prediction itself rather than
        # base + omega*0, which could flip signed zeros
        return eps_base.copy()
    return eps_base + omega * delta


def guided_epsilon(eps_ori, eps_pert, omega: float):
    """Condition-free extrapolation away from the perturbed prediction."""
    return _extrapolate(eps_ori, eps_pert, omega)


def cfg_epsilon(eps_cond, eps_uncond, omega: float):
    """Classifier-free extrapolation away from the unconditional prediction."""
    return _extrapolate(eps_cond, eps_uncond, omega)


def guidance_magnitude(eps_ori, eps_pert, omega: float) -> np.ndarray:
    """Per-token channel-averaged |omega * (eps_ori - eps_pert)|, shape (B, T)."""
    eps_ori = np.asarray(eps_ori, dtype=np.float64)
    eps_pert = np.asarray(eps_pert, dtype=np.float64)
    if eps_ori.shape != eps_pert.shape:
        raise ValueError(f"shape mismatch {eps_ori.shape} vs {eps_pert.shape}")
    return np.mean(np.abs(omega * (eps_ori - eps_pert)), axis=-1)


@dataclass(frozen=True)
class TraceRecord:
    timestep: int
    mean_magnitude: float
    token_map: tuple

    def to_json(self) -> str:
        return json.dumps({
            "timestep": self.timestep,
            "mean_magnitude": self.mean_magnitude,
            "map": list(self.token_map),
        })


def save_trace(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def load_trace(path):
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            records.append(TraceRecord(
                timestep=int(obj["timestep"]),
                mean_magnitude=float(obj["mean_magnitude"]),
                token_map=tuple(float(v) for v in obj["map"]),
            ))
    return records


def _trace_record(t: int, eps_base, eps_away, omega: float) -> TraceRecord:
    per_token = guidance_magnitude(eps_base, eps_away, omega).mean(axis=0)
    return TraceRecord(timestep=int(t), mean_magnitude=float(per_token.mean()),
                       token_map=tuple(float(v) for v in per_token))


def _require_condition(cond, cfg: ModelConfig, batch: int, what: str):
    cond_ids = _as_cond_ids(cond, batch, cfg)
    if np.any(cond_ids == cfg.null_class):
        raise ConfigError(f"guidance.method: {what} requires a class condition")
    return cond_ids


def predict_guided(params, cfg: ModelConfig, spec: GuidanceSpec, x_t, t, cond,
                   rng: RngStream, record: bool = False):
    """Method dispatch producing the guided epsilon for one sampler step.

    Returns (eps_tilde, TraceRecord or None).
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    batch = x_t.shape[0]
    method = spec.method

    if method is GuidanceMethod.NONE:
        return forward(params, cfg, x_t, t, cond), None

    if method is GuidanceMethod.CFG:
        _require_condition(cond, cfg, batch, "cfg")
        eps_c = forward(params, cfg, x_t, t, cond)
        eps_u = forward(params, cfg, x_t, t, None)
        rec = _trace_record(t, eps_c, eps_u, spec.omega) if record else None
        return cfg_epsilon(eps_c, eps_u, spec.omega), rec

    if method is GuidanceMethod.SSG:
        perturb = PerturbSpec(
            active=True, spatial_r=spec.spatial_r, channel_r=spec.channel_r,
            policy=spec.policy, at_block_input=spec.at_block_input,
            at_pre_residual=spec.at_pre_residual)
        eps_ori, eps_pert = forward_two_branch(params, cfg, x_t, t, cond, perturb, rng)
        eps_tilde = guided_epsilon(eps_ori, eps_pert, spec.omega)
        if spec.omega_cfg > 0.0:
            # additive three-branch composition around the conditional branch
            _require_condition(cond, cfg, batch, "ssg+cfg")
            eps_null = forward(params, cfg, x_t, t, None)
            eps_tilde = eps_tilde + spec.omega_cfg * (eps_ori - eps_null)
        rec = _trace_record(t, eps_ori, eps_pert, spec.omega) if record else None
        return eps_tilde, rec

    if method is GuidanceMethod.INPUT_NOISE:
        eps_ori = forward(params, cfg, x_t, t, cond)
        if spec.input_noise_sigma > 0.0:
            noise = np.stack([
                rng.child("input_noise", i).generator().standard_normal(x_t.shape[1:])
                for i in range(batch)
            ])
            x_pert = x_t + spec.input_noise_sigma * noise
        else:
            x_pert = x_t
        eps_pert = forward(params, cfg, x_pert, t, cond)
        rec = _trace_record(t, eps_ori, eps_pert, spec.omega) if record else None
        return guided_epsilon(eps_ori, eps_pert, spec.omega), rec

    if method is GuidanceMethod.ATTN_IDENTITY:
        perturb = PerturbSpec(active=True, attn_identity=True)
        eps_ori, eps_pert = forward_two_branch(params, cfg, x_t, t, cond, perturb, rng)
        rec = _trace_record(t, eps_ori, eps_pert, spec.omega) if record else None
        return guided_epsilon(eps_ori, eps_pert, spec.omega), rec

    raise ValueError(f"unknown guidance method {method}")


# quiet re-export so callers can build conditions without importing denoiser
__all__ = [
    "guided_epsilon", "cfg_epsilon", "guidance_magnitude", "TraceRecord",
    "save_trace", "load_trace", "predict_guided", "ConditionSpec",
]
