"""Experiment commands: train, sample-and-measure, parameter sweeps, the
ablation grid, and guidance-magnitude analysis.

Every command is deterministic in (config, seed): run ids are derived from
the configuration, the held-out reference split and sliced-Wasserstein
projections are keyed by the training seed so rows stay comparable across
sampling seeds, and files are written in a fixed order.
"""

from __future__ import annotations

import dataclasses
import os

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import GuidanceMethod, GuidanceSpec, RunConfig
from .dataset import generate_dataset
from .diffusion import build_schedule, sample
from .errors import ConfigError
from .guidance import save_trace
from .metrics import fit_gaussian, frechet_distance, pairwise_diversity, sliced_wasserstein2
from .ppm import image_grid, write_ppm
from .rng import RngStream
from .train import train, write_loss_log

METRICS_HEADER = "run_id,method,omega,spatial_r,channel_r,policy,seed,frechet,sliced_w2,diversity"

N_PREVIEW_IMAGES = 16


def _fmt(value: float) -> str:
    return f"{value:.12g}"


def append_metrics_row(path, row: dict) -> None:
    exists = os.path.exists(path)
    with open(path, "a", encoding="utf-8") as fh:
        if not exists:
            fh.write(METRICS_HEADER + "\n")
        fh.write(",".join([
            row["run_id"], row["method"], _fmt(row["omega"]), _fmt(row["spatial_r"]),
            _fmt(row["channel_r"]), row["policy"], str(row["seed"]),
            _fmt(row["frechet"]), _fmt(row["sliced_w2"]), _fmt(row["diversity"]),
        ]) + "\n")


def read_metrics_rows(path):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != METRICS_HEADER:
            raise ValueError(f"unexpected metrics header: {header!r}")
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) != 10:
                continue
            rows.append({
                "run_id": parts[0], "method": parts[1], "omega": float(parts[2]),
                "spatial_r": float(parts[3]), "channel_r": float(parts[4]),
                "policy": parts[5], "seed": int(parts[6]), "frechet": float(parts[7]),
                "sliced_w2": float(parts[8]), "diversity": float(parts[9]),
            })
    return rows


def load_checkpoint_for(config: RunConfig, path: str) -> Checkpoint:
    ckpt = load_checkpoint(path)
    if ckpt.config != config.model:
        raise ConfigError(f"model: config does not match checkpoint {path}")
    if ckpt.schedule != config.schedule:
        raise ConfigError(f"schedule: config does not match checkpoint {path}")
    return ckpt


def _eval_condition(config: RunConfig, batch: int):
    if not config.eval_conditional:
        return None
    return np.arange(batch) % config.model.num_classes


def evaluate_guidance(config: RunConfig, ckpt: Checkpoint, guidance: GuidanceSpec,
                      seed: int, run_id: str, out_dir: str | None = None,
                      write_images: bool = False, reference=None):
    """Sample under one guidance setting and compute the metrics row."""
    schedule = build_schedule(config.schedule)
    batch = config.eval_samples
    cond = _eval_condition(config, batch)
    images, _ = sample(ckpt.params, config.model, schedule, config.sampler, guidance,
                       cond, batch, RngStream(seed).child("sample"))
    if reference is None:
        reference, _ = generate_dataset(config.dataset, config.train.seed, split="eval")
    sw2_rng = RngStream(config.train.seed).child("sw2-projections")
    row = {
        "run_id": run_id,
        "method": guidance.method.value,
        "omega": guidance.omega,
        "spatial_r": guidance.spatial_r,
        "channel_r": guidance.channel_r,
        "policy": guidance.policy.value,
        "seed": seed,
        "frechet": frechet_distance(fit_gaussian(images), fit_gaussian(reference)),
        "sliced_w2": sliced_wasserstein2(images, reference, rng=sw2_rng),
        "diversity": pairwise_diversity(images),
    }
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        append_metrics_row(os.path.join(out_dir, "metrics.csv"), row)
        if write_images:
            side = config.model.image_side
            write_ppm(os.path.join(out_dir, f"{run_id}_grid.ppm"),
                      image_grid(images, side))
            for i in range(min(N_PREVIEW_IMAGES, images.shape[0])):
                write_ppm(os.path.join(out_dir, f"{run_id}_{i:03d}.ppm"),
                          images[i].reshape(side, side))
    return row, images


def cmd_train(config: RunConfig, out_dir: str | None = None, progress=None):
    out_dir = out_dir or config.out_dir
    os.makedirs(out_dir, exist_ok=True)
    ckpt, log = train(config, progress=progress)
    ckpt_path = os.path.join(out_dir, "model.ckpt")
    save_checkpoint(ckpt_path, ckpt)
    write_loss_log(os.path.join(out_dir, "train_log.csv"), log)
    return ckpt_path


def cmd_sample(config: RunConfig, checkpoint_path: str, seed: int,
               out_dir: str | None = None):
    out_dir = out_dir or config.out_dir
    ckpt = load_checkpoint_for(config, checkpoint_path)
    run_id = f"sample_{config.guidance.method.value}_s{seed}"
    row, _ = evaluate_guidance(config, ckpt, config.guidance, seed, run_id,
                               out_dir=out_dir, write_images=True)
    return row


def cmd_sweep(config: RunConfig, checkpoint_path: str, axis: str, values,
              seeds=None, out_dir: str | None = None):
    """One metrics row per (value, seed); seeds are shared across values so
    the resulting curves are comparable."""
    if axis not in ("omega", "ratio"):
        raise ConfigError(f"sweep axis must be omega or ratio, got {axis!r}")
    values = list(values)
    if not values:
        raise ConfigError("sweep values must be non-empty")
    seeds = list(seeds) if seeds else [0]
    out_dir = out_dir or config.out_dir
    ckpt = load_checkpoint_for(config, checkpoint_path)
    reference, _ = generate_dataset(config.dataset, config.train.seed, split="eval")
    rows = []
    for value in values:
        guidance = dataclasses.replace(config.guidance)
        if axis == "omega":
            guidance.omega = float(value)
        else:
            guidance.spatial_r = float(value)
            guidance.channel_r = float(value)
        for seed in seeds:
            run_id = f"sweep_{axis}{value:g}_s{seed}"
            row, _ = evaluate_guidance(config, ckpt, guidance, seed, run_id,
                                       out_dir=out_dir, reference=reference)
            rows.append(row)
    return rows


def ablation_grid(config: RunConfig):
    """The nine ablation settings: unguided baseline, the three selection
    policies, the three swap-axis restrictions, plain swap guidance, and its
    composition with classifier-free guidance."""
    base = config.guidance
    if base.spatial_r == 0.0 and base.channel_r == 0.0:
        raise ConfigError("guidance.spatial_r: ablation needs a nonzero swap ratio")
    composed_cfg = base.omega_cfg if base.omega_cfg > 0.0 else 1.0
    grid = [
        ("none", dataclasses.replace(base, method=GuidanceMethod.NONE, omega=0.0,
                                     omega_cfg=0.0, spatial_r=0.0, channel_r=0.0)),
    ]
    from .swap import SwapPolicy
    for policy in (SwapPolicy.DISSIMILAR, SwapPolicy.SIMILAR, SwapPolicy.RANDOM):
        grid.append((f"policy_{policy.value}",
                     dataclasses.replace(base, method=GuidanceMethod.SSG,
                                         omega_cfg=0.0, policy=policy)))
    grid.append(("axis_spatial", dataclasses.replace(
        base, method=GuidanceMethod.SSG, omega_cfg=0.0, channel_r=0.0)))
    grid.append(("axis_channel", dataclasses.replace(
        base, method=GuidanceMethod.SSG, omega_cfg=0.0, spatial_r=0.0)))
    grid.append(("axis_both", dataclasses.replace(
        base, method=GuidanceMethod.SSG, omega_cfg=0.0)))
    grid.append(("ssg", dataclasses.replace(
        base, method=GuidanceMethod.SSG, omega_cfg=0.0)))
    grid.append(("ssg_cfg", dataclasses.replace(
        base, method=GuidanceMethod.SSG, omega_cfg=composed_cfg)))
    return grid


def cmd_ablate(config: RunConfig, checkpoint_path: str, seed: int,
               out_dir: str | None = None):
    out_dir = out_dir or config.out_dir
    ckpt = load_checkpoint_for(config, checkpoint_path)
    grid = ablation_grid(config)
    if any(g.omega_cfg > 0.0 for _, g in grid) and not config.eval_conditional:
        raise ConfigError("eval_conditional: the ssg_cfg ablation row needs class conditions")
    reference, _ = generate_dataset(config.dataset, config.train.seed, split="eval")
    rows = []
    for label, guidance in grid:
        run_id = f"ablate_{label}_s{seed}"
        row, _ = evaluate_guidance(config, ckpt, guidance, seed, run_id,
                                   out_dir=out_dir, reference=reference)
        rows.append(row)
    return rows


def cmd_analyze(config: RunConfig, checkpoint_path: str, seed: int,
                out_dir: str | None = None, batch: int | None = None):
    """Sample with trace recording and render per-timestep magnitude maps."""
    out_dir = out_dir or config.out_dir
    os.makedirs(out_dir, exist_ok=True)
    ckpt = load_checkpoint_for(config, checkpoint_path)
    schedule = build_schedule(config.schedule)
    batch = batch or min(16, config.eval_samples)
    cond = _eval_condition(config, batch)
    _, records = sample(ckpt.params, config.model, schedule, config.sampler,
                        config.guidance, cond, batch,
                        RngStream(seed).child("sample"), record_trace=True)
    save_trace(records, os.path.join(out_dir, "trace.jsonl"))
    grid_side = config.model.tokens_per_side
    peak = max((max(rec.token_map) for rec in records), default=0.0)
    for rec in records:
        token_map = np.asarray(rec.token_map, dtype=np.float64)
        scaled = (token_map / peak) * 2.0 - 1.0 if peak > 0.0 else np.full_like(token_map, -1.0)
        write_ppm(os.path.join(out_dir, f"map_t{rec.timestep:04d}.ppm"),
                  scaled.reshape(grid_side, grid_side))
    return records
