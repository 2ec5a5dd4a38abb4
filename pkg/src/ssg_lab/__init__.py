"""Guided-diffusion laboratory: a small transformer denoiser with
inference-time token-swap guidance, samplers, metrics, and an experiment
harness."""

from .config import (
    DatasetKind,
    DatasetSpec,
    GuidanceMethod,
    GuidanceSpec,
    ModelConfig,
    RunConfig,
    SamplerConfig,
    SamplerKind,
    ScheduleConfig,
    TrainConfig,
    load_config,
    validate_config,
)
from .checkpoint import (
    Checkpoint,
    CheckpointError,
    CheckpointHeaderError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    load_checkpoint,
    save_checkpoint,
)
from .denoiser import (
    ConditionSpec,
    PerturbSpec,
    backward,
    forward,
    forward_two_branch,
    init_parameters,
    param_shapes,
    patchify,
    timestep_embedding,
    unpatchify,
)
from .dataset import generate_dataset
from .diffusion import (
    NoiseSchedule,
    add_noise,
    build_schedule,
    ddim_step,
    dsm_loss,
    dsm_loss_terms,
    euler_step,
    inference_timesteps,
    sample,
)
from .errors import ConfigError, NumericalError
from .estimator import SwapGuidedDiffusion, TokenSwap
from .guidance import (
    TraceRecord,
    cfg_epsilon,
    guidance_magnitude,
    guided_epsilon,
    load_trace,
    predict_guided,
    save_trace,
)
from .metrics import (
    GaussianSummary,
    fit_gaussian,
    frechet_distance,
    pairwise_diversity,
    sliced_wasserstein2,
)
from .rng import RngStream
from .swap import (
    SwapAxis,
    SwapPlan,
    SwapPolicy,
    apply_swap_channel,
    apply_swap_spatial,
    pair_count_from_ratio,
    plan_for_instance,
    select_swap_pairs,
)
from .train import fit_parameters, train

__version__ = "0.1.0"
