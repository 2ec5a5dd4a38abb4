"""Training: plain SGD on the denoising objective with a fixed learning
rate, deterministic in the training seed.
"""

from __future__ import annotations

import numpy as np

from .checkpoint import Checkpoint
from .config import ModelConfig, RunConfig, ScheduleConfig
from .dataset import generate_dataset
from .denoiser import init_parameters, patchify
from .diffusion import NoiseSchedule, build_schedule, dsm_loss
from .errors import NumericalError
from .rng import RngStream


def fit_parameters(cfg: ModelConfig, schedule: NoiseSchedule, tokens, labels,
                   steps: int, batch: int, learning_rate: float, seed: int,
                   progress=None):
    """Run `steps` SGD updates over (tokens, labels); returns (params, loss log).

    Batch indices, noise draws, and condition dropout all derive from the
    seed through per-step child streams, so the final parameters are a pure
    function of the inputs.
    """
    tokens = np.asarray(tokens, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if tokens.shape[0] != labels.shape[0] or tokens.shape[0] == 0:
        raise ValueError("tokens and labels must be non-empty and aligned")
    root = RngStream(seed)
    params = init_parameters(cfg, root.child("init"))
    log = []
    n = tokens.shape[0]
    for step in range(steps):
        idx = root.child("batch", step).generator().integers(0, n, size=batch)
        try:
            loss, grads = dsm_loss(params, cfg, schedule, tokens[idx], labels[idx],
                                   root.child("dsm", step))
        except NumericalError as exc:
            raise NumericalError(f"training aborted at step {step}: {exc}")
        for name, grad in grads.items():
            params[name] -= learning_rate * grad
        log.append((step, loss))
        if progress is not None and (step % 500 == 0 or step == steps - 1):
            progress(step, loss)
    return params, log


def train(config: RunConfig, progress=None):
    """Train from a RunConfig; returns (Checkpoint, loss log rows)."""
    images, labels = generate_dataset(config.dataset, config.train.seed, split="train")
    tokens = patchify(images, config.model.patch_side)
    schedule = build_schedule(config.schedule)
    params, log = fit_parameters(
        config.model, schedule, tokens, labels,
        steps=config.train.steps, batch=config.train.batch,
        learning_rate=config.train.learning_rate, seed=config.train.seed,
        progress=progress)
    ckpt = Checkpoint(config=config.model,
                      schedule=ScheduleConfig(**vars(config.schedule)),
                      step=config.train.steps, params=params)
    return ckpt, log


def write_loss_log(path, log) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,loss\n")
        for step, loss in log:
            fh.write(f"{step},{loss:.12g}\n")
