"""Scikit-learn style front door.

SwapGuidedDiffusion wraps the train/sample pipeline as an estimator with
fit/sample/score and get_params/set_params, so it slots into sklearn
tooling (cloning, grid search over guidance settings). TokenSwap exposes
the perturbation itself as a stateless transformer.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .config import (
    GuidanceMethod,
    GuidanceSpec,
    ModelConfig,
    SamplerConfig,
    SamplerKind,
    ScheduleConfig,
)
from .denoiser import patchify
from .diffusion import build_schedule, sample
from .metrics import fit_gaussian, frechet_distance
from .rng import RngStream
from .swap import SwapAxis, SwapPolicy, apply_swap_instance, plan_for_instance
from .train import fit_parameters


class SwapGuidedDiffusion(BaseEstimator):
    """Diffusion generative model with inference-time swap guidance.

    fit(X, y) trains the denoiser on flat images X in [-1, 1] (y holds
    integer class labels; omit it for a single-class model), sample() draws
    new images under the configured guidance, and score(X) returns the
    negative pixel-space Frechet distance between fresh samples and X.
    """

    def __init__(self, image_side=16, patch_side=4, channels=64, blocks=4, heads=4,
                 mlp_ratio=4.0, cond_dropout_prob=0.1, train_steps=1000,
                 beta_start=1e-4, beta_end=0.02, steps=2000, batch_size=64,
                 learning_rate=1e-3, sampler="ddim", num_inference_steps=50,
                 eta=0.0, method="ssg", omega=0.5, omega_cfg=0.0, spatial_r=0.25,
                 channel_r=0.0, policy="dissimilar", seed=0):
        self.image_side = image_side
        self.patch_side = patch_side
        self.channels = channels
        self.blocks = blocks
        self.heads = heads
        self.mlp_ratio = mlp_ratio
        self.cond_dropout_prob = cond_dropout_prob
        self.train_steps = train_steps
        self.beta_start = beta_start
        self.beta_end = beta_end
        self.steps = steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.sampler = sampler
        self.num_inference_steps = num_inference_steps
        self.eta = eta
        self.method = method
        self.omega = omega
        self.omega_cfg = omega_cfg
        self.spatial_r = spatial_r
        self.channel_r = channel_r
        self.policy = policy
        self.seed = seed

    def _model_config(self, num_classes: int) -> ModelConfig:
        return ModelConfig(
            image_side=self.image_side, patch_side=self.patch_side,
            channels=self.channels, blocks=self.blocks, heads=self.heads,
            mlp_ratio=self.mlp_ratio, num_classes=num_classes,
            cond_dropout_prob=self.cond_dropout_prob)

    def _guidance_spec(self) -> GuidanceSpec:
        return GuidanceSpec(
            method=GuidanceMethod(self.method), omega=self.omega,
            omega_cfg=self.omega_cfg, spatial_r=self.spatial_r,
            channel_r=self.channel_r, policy=SwapPolicy(self.policy))

    def _sampler_config(self) -> SamplerConfig:
        return SamplerConfig(kind=SamplerKind(self.sampler),
                             num_inference_steps=self.num_inference_steps,
                             eta=self.eta)

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.image_side * self.image_side:
            raise ValueError(
                f"X has {X.shape[1]} features, expected image_side^2 = "
                f"{self.image_side * self.image_side}")
        if y is None:
            labels = np.zeros(X.shape[0], dtype=np.int64)
            self.classes_ = np.array([0])
        else:
            y = np.asarray(y)
            self.classes_, labels = np.unique(y, return_inverse=True)
        self.n_features_in_ = X.shape[1]
        self.model_config_ = self._model_config(num_classes=len(self.classes_))
        schedule_cfg = ScheduleConfig(train_steps=self.train_steps,
                                      beta_start=self.beta_start,
                                      beta_end=self.beta_end)
        self.schedule_ = build_schedule(schedule_cfg)
        tokens = patchify(X, self.patch_side)
        self.params_, self.loss_log_ = fit_parameters(
            self.model_config_, self.schedule_, tokens, labels,
            steps=self.steps, batch=self.batch_size,
            learning_rate=self.learning_rate, seed=self.seed)
        return self

    def sample(self, n: int, class_id=None, seed=None):
        """Draw n images; class_id of None cycles through fitted classes."""
        check_is_fitted(self, "params_")
        if class_id is None:
            cond = np.arange(n) % len(self.classes_)
        else:
            matches = np.flatnonzero(self.classes_ == class_id)
            if matches.size == 0:
                raise ValueError(f"unknown class {class_id!r}; fitted on {self.classes_}")
            cond = np.full(n, matches[0], dtype=np.int64)
        rng = RngStream(self.seed if seed is None else seed).child("estimator-sample")
        images, _ = sample(self.params_, self.model_config_, self.schedule_,
                           self._sampler_config(), self._guidance_spec(), cond, n, rng)
        return images

    def score(self, X, y=None) -> float:
        """Negative Frechet distance between len(X) fresh samples and X."""
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        samples = self.sample(X.shape[0])
        return -frechet_distance(fit_gaussian(samples), fit_gaussian(X))


class TokenSwap(TransformerMixin, BaseEstimator):
    """Stateless transformer applying per-instance similarity-policy swaps.

    Rows of X are viewed as (tokens, features) matrices; transform swaps
    token slots (axis="spatial") or feature slots (axis="channel") using
    the same plan construction the guidance path uses.
    """

    def __init__(self, tokens: int = 16, axis="spatial", ratio=0.5,
                 policy="dissimilar", seed=0):
        self.tokens = tokens
        self.axis = axis
        self.ratio = ratio
        self.policy = policy
        self.seed = seed

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        if X.shape[1] % self.tokens != 0:
            raise ValueError(f"{X.shape[1]} features not divisible by tokens={self.tokens}")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        axis = SwapAxis(self.axis)
        policy = SwapPolicy(self.policy)
        base = RngStream(self.seed).child("token-swap")
        dim = X.shape[1] // self.tokens
        out = np.empty_like(X)
        for i in range(X.shape[0]):
            inst = X[i].reshape(self.tokens, dim)
            plan = plan_for_instance(inst, axis, self.ratio, policy, base.child(i))
            out[i] = apply_swap_instance(inst, plan).reshape(-1)
        return out
