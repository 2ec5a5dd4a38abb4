"""Toy DiT-style epsilon predictor over patch tokens.

Pre-norm transformer blocks with multi-head self-attention and a GELU MLP,
class + timestep conditioning added to every token, learned positional
embeddings, and a zero-initialized output head. Gradients are hand-derived
(no autodiff), and inference-time perturbation hooks can swap token or
channel slots at block inputs and before residual additions.

Batches that mix perturbed and clean instances are executed as separate
segments through the same kernels: every matrix product then has the same
operand shapes as a standalone call, which keeps branch outputs bit-equal
to independent forwards regardless of the BLAS in use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .errors import NumericalError
from .rng import RngStream
from .swap import SwapAxis, SwapPolicy, apply_swap_instance, plan_for_instance
from .tensor_ops import (
    gelu,
    gelu_backward,
    layer_norm,
    layer_norm_backward,
    softmax_backward,
    softmax_lastaxis,
)

SITE_BLOCK_INPUT = 0
SITE_PRE_RESIDUAL_ATTN = 1
SITE_PRE_RESIDUAL_MLP = 2


@dataclass(frozen=True)
class ConditionSpec:
    """Class condition; class_id None selects the learned null embedding."""

    class_id: int | None = None


@dataclass(frozen=True)
class PerturbSpec:
    """Inference-time degradation switches for the perturbed branch.

    Inactive specs, and active specs with both ratios zero and
    attn_identity off, leave the forward pass bit-identical to a clean one.
    """

    active: bool = False
    spatial_r: float = 0.0
    channel_r: float = 0.0
    policy: SwapPolicy = SwapPolicy.DISSIMILAR
    at_block_input: bool = True
    at_pre_residual: bool = True
    attn_identity: bool = False

    def is_noop(self) -> bool:
        if not self.active:
            return True
        swaps = (self.spatial_r > 0.0 or self.channel_r > 0.0) and (
            self.at_block_input or self.at_pre_residual
        )
        return not swaps and not self.attn_identity


def param_shapes(cfg: ModelConfig) -> dict:
    """Canonical parameter order and shapes; checkpoints follow this order."""
    d = cfg.channels
    shapes = {
        "patch_embed.w": (cfg.patch_dim, d),
        "patch_embed.b": (d,),
        "pos_embed": (cfg.token_count, d),
        "class_embed": (cfg.num_classes + 1, d),
        "time_mlp.w1": (d, d),
        "time_mlp.b1": (d,),
        "time_mlp.w2": (d, d),
        "time_mlp.b2": (d,),
    }
    for i in range(cfg.blocks):
        p = f"blocks.{i}."
        shapes[p + "ln1.g"] = (d,)
        shapes[p + "ln1.b"] = (d,)
        shapes[p + "attn.wqkv"] = (d, 3 * d)
        shapes[p + "attn.bqkv"] = (3 * d,)
        shapes[p + "attn.wo"] = (d, d)
        shapes[p + "attn.bo"] = (d,)
        shapes[p + "ln2.g"] = (d,)
        shapes[p + "ln2.b"] = (d,)
        shapes[p + "mlp.w1"] = (d, cfg.mlp_dim)
        shapes[p + "mlp.b1"] = (cfg.mlp_dim,)
        shapes[p + "mlp.w2"] = (cfg.mlp_dim, d)
        shapes[p + "mlp.b2"] = (d,)
    shapes["ln_f.g"] = (d,)
    shapes["ln_f.b"] = (d,)
    shapes["head.w"] = (d, cfg.patch_dim)
    shapes["head.b"] = (cfg.patch_dim,)
    return shapes


def init_parameters(cfg: ModelConfig, rng: RngStream) -> dict:
    """Small-normal weights, zero biases, zero output head (eps_hat starts at 0)."""
    gen = rng.generator()
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.startswith("head.") or name.endswith(".b") or name.endswith(
            ".bqkv") or name.endswith(".bo") or name.endswith(".b1") or name.endswith(".b2"):
            params[name] = np.zeros(shape, dtype=np.float64)
        elif name.endswith(".g"):
            params[name] = np.ones(shape, dtype=np.float64)
        else:
            params[name] = gen.normal(0.0, 0.02, size=shape)
    return params


def timestep_embedding(t, d: int) -> np.ndarray:
    """Sinusoidal embedding; t may be a scalar or a vector of step indices."""
    if d % 2 != 0:
        raise ValueError(f"embedding width must be even, got {d}")
    t_arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if np.any(t_arr < 0):
        raise ValueError("timestep must be >= 0")
    half = d // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half, dtype=np.float64) / half)
    args = t_arr[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(args), np.cos(args)], axis=1)
    return emb[0] if np.isscalar(t) or np.ndim(t) == 0 else emb


def patchify(image: np.ndarray, patch_side: int) -> np.ndarray:
    """Flat image(s) -> (B, T, patch_side^2) tokens in raster patch order."""
    arr = np.asarray(image, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    n = arr.shape[0]
    side = int(round(np.sqrt(arr.shape[1])))
    if side * side != arr.shape[1] or side % patch_side != 0:
        raise ValueError(f"image length {arr.shape[1]} incompatible with patch_side {patch_side}")
    g = side // patch_side
    tokens = (
        arr.reshape(n, g, patch_side, g, patch_side)
        .transpose(0, 1, 3, 2, 4)
        .reshape(n, g * g, patch_side * patch_side)
    )
    return tokens


def unpatchify(tokens: np.ndarray, patch_side: int) -> np.ndarray:
    """Inverse of patchify; round-trips bit-exactly."""
    arr = np.asarray(tokens, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"tokens must be (B, T, P), got shape {arr.shape}")
    n, t, p = arr.shape
    if p != patch_side * patch_side:
        raise ValueError(f"patch dim {p} != patch_side^2 = {patch_side * patch_side}")
    g = int(round(np.sqrt(t)))
    if g * g != t:
        raise ValueError(f"token count {t} is not a square grid")
    side = g * patch_side
    return (
        arr.reshape(n, g, g, patch_side, patch_side)
        .transpose(0, 1, 3, 2, 4)
        .reshape(n, side * side)
    )


def _as_t_ids(t, batch: int, train_steps_hint: int | None = None) -> np.ndarray:
    t_ids = np.atleast_1d(np.asarray(t, dtype=np.int64))
    if t_ids.shape == (1,) and batch > 1:
        t_ids = np.full(batch, t_ids[0], dtype=np.int64)
    if t_ids.shape != (batch,):
        raise ValueError(f"timesteps shape {t_ids.shape} incompatible with batch {batch}")
    return t_ids


def _as_cond_ids(cond, batch: int, cfg: ModelConfig) -> np.ndarray:
    if isinstance(cond, ConditionSpec):
        cond = cond.class_id
    if cond is None:
        return np.full(batch, cfg.null_class, dtype=np.int64)
    arr = np.atleast_1d(np.asarray(cond, dtype=np.int64))
    if arr.shape == (1,) and batch > 1:
        arr = np.full(batch, arr[0], dtype=np.int64)
    if arr.shape != (batch,):
        raise ValueError(f"condition shape {arr.shape} incompatible with batch {batch}")
    if np.any(arr < 0) or np.any(arr > cfg.num_classes):
        raise ValueError(f"class ids must be in [0, {cfg.num_classes}] (last = null)")
    return arr


def _apply_site_swaps(h, perturb, block_idx, site, tags, rng):
    if perturb.spatial_r == 0.0 and perturb.channel_r == 0.0:
        return h
    out = h.copy()
    for b in range(h.shape[0]):
        stream = rng.child("swap", int(tags[b]), block_idx, site)
        inst = out[b]
        if perturb.spatial_r > 0.0:
            plan = plan_for_instance(inst, SwapAxis.SPATIAL, perturb.spatial_r,
                                     perturb.policy, stream.child("spatial"))
            inst = apply_swap_instance(inst, plan)
        if perturb.channel_r > 0.0:
            plan = plan_for_instance(inst, SwapAxis.CHANNEL, perturb.channel_r,
                                     perturb.policy, stream.child("channel"))
            inst = apply_swap_instance(inst, plan)
        out[b] = inst
    return out


def _forward_segment(params, cfg, x, t_ids, cond_ids, perturb, tags, rng, want_cache):
    b, t_count, p_dim = x.shape
    d = cfg.channels
    heads = cfg.heads
    hd = d // heads
    scale = 1.0 / np.sqrt(hd)
    hooked = perturb is not None and perturb.active and not perturb.is_noop()
    swap_sites_on = hooked and (perturb.spatial_r > 0.0 or perturb.channel_r > 0.0)
    identity_attn = hooked and perturb.attn_identity

    t_sin = timestep_embedding(t_ids, d)
    th1 = t_sin @ params["time_mlp.w1"] + params["time_mlp.b1"]
    ta = gelu(th1)
    tvec = ta @ params["time_mlp.w2"] + params["time_mlp.b2"]
    cvec = params["class_embed"][cond_ids]

    x2d = x.reshape(b * t_count, p_dim)
    tok = (x2d @ params["patch_embed.w"] + params["patch_embed.b"]).reshape(b, t_count, d)
    h = tok + params["pos_embed"][None, :, :] + (tvec + cvec)[:, None, :]

    cache_blocks = []
    for i in range(cfg.blocks):
        pref = f"blocks.{i}."
        if swap_sites_on and perturb.at_block_input:
            h = _apply_site_swaps(h, perturb, i, SITE_BLOCK_INPUT, tags, rng)
        hin = h
        n1, ln1_cache = layer_norm(hin, params[pref + "ln1.g"], params[pref + "ln1.b"])
        qkv = n1.reshape(b * t_count, d) @ params[pref + "attn.wqkv"] + params[pref + "attn.bqkv"]
        qkv = qkv.reshape(b, t_count, 3 * d)
        q = qkv[:, :, :d].reshape(b, t_count, heads, hd).transpose(0, 2, 1, 3)
        k = qkv[:, :, d:2 * d].reshape(b, t_count, heads, hd).transpose(0, 2, 1, 3)
        v = qkv[:, :, 2 * d:].reshape(b, t_count, heads, hd).transpose(0, 2, 1, 3)
        if identity_attn:
            probs = None
            ao = v
        else:
            scores = (q @ k.transpose(0, 1, 3, 2)) * scale
            probs = softmax_lastaxis(scores)
            ao = probs @ v
        am = ao.transpose(0, 2, 1, 3).reshape(b, t_count, d)
        abr = (am.reshape(b * t_count, d) @ params[pref + "attn.wo"]).reshape(b, t_count, d)
        abr = abr + params[pref + "attn.bo"]
        if swap_sites_on and perturb.at_pre_residual:
            abr = _apply_site_swaps(abr, perturb, i, SITE_PRE_RESIDUAL_ATTN, tags, rng)
        h1 = hin + abr
        n2, ln2_cache = layer_norm(h1, params[pref + "ln2.g"], params[pref + "ln2.b"])
        m1 = n2.reshape(b * t_count, d) @ params[pref + "mlp.w1"] + params[pref + "mlp.b1"]
        ma, mt = gelu(m1, return_tanh=True)
        m2 = (ma @ params[pref + "mlp.w2"] + params[pref + "mlp.b2"]).reshape(b, t_count, d)
        if swap_sites_on and perturb.at_pre_residual:
            m2 = _apply_site_swaps(m2, perturb, i, SITE_PRE_RESIDUAL_MLP, tags, rng)
        h = h1 + m2
        if not np.all(np.isfinite(h)):
            raise NumericalError(f"non-finite activations in block {i}")
        if want_cache:
            cache_blocks.append({
                "hin": hin, "ln1": ln1_cache, "n1": n1, "q": q, "k": k, "v": v,
                "probs": probs, "am": am, "ln2": ln2_cache, "n2": n2,
                "m1": m1, "ma": ma, "mt": mt,
            })

    nf, lnf_cache = layer_norm(h, params["ln_f.g"], params["ln_f.b"])
    eps = (nf.reshape(b * t_count, d) @ params["head.w"] + params["head.b"]).reshape(b, t_count, p_dim)

    if not want_cache:
        return eps, None
    cache = {
        "x2d": x2d, "t_sin": t_sin, "th1": th1, "ta": ta, "cond_ids": cond_ids,
        "blocks": cache_blocks, "lnf": lnf_cache, "nf": nf,
        "shape": (b, t_count, p_dim), "perturbed": hooked,
    }
    return eps, cache


def forward(params, cfg: ModelConfig, x_t, t, cond=None, perturb: PerturbSpec | None = None,
            rng: RngStream | None = None, want_cache: bool = False):
    """Predict epsilon for a batch of noisy token tensors.

    Returns eps, or (eps, cache) when want_cache is set. The cache is only
    valid for training-style clean passes.
    """
    x = np.asarray(x_t, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"x_t must be (B, T, P), got shape {x.shape}")
    b = x.shape[0]
    if x.shape[1] != cfg.token_count or x.shape[2] != cfg.patch_dim:
        raise ValueError(
            f"x_t shape {x.shape} incompatible with config "
            f"(T={cfg.token_count}, P={cfg.patch_dim})")
    t_ids = _as_t_ids(t, b)
    cond_ids = _as_cond_ids(cond, b, cfg)
    if perturb is not None and perturb.active and not perturb.is_noop() and rng is None:
        raise ValueError("an rng stream is required for an active perturbation")
    rng = rng if rng is not None else RngStream(0)
    tags = np.arange(b)
    eps, cache = _forward_segment(params, cfg, x, t_ids, cond_ids, perturb, tags, rng,
                                  want_cache)
    return (eps, cache) if want_cache else eps


def forward_two_branch(params, cfg: ModelConfig, x_t, t, cond, perturb: PerturbSpec,
                       rng: RngStream):
    """One batched pass over [clean; perturbed] copies of x_t, split back out.

    The two activity segments run through the same kernels with per-branch
    operand shapes, so each half is bit-identical to the standalone forward
    with the same rng stream.
    """
    x = np.asarray(x_t, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"x_t must be (B, T, P), got shape {x.shape}")
    b = x.shape[0]
    t_ids = _as_t_ids(t, b)
    cond_ids = _as_cond_ids(cond, b, cfg)
    tags = np.arange(b)
    eps_ori, _ = _forward_segment(params, cfg, x, t_ids, cond_ids, None, tags, rng, False)
    eps_pert, _ = _forward_segment(params, cfg, x, t_ids, cond_ids, perturb, tags, rng, False)
    return eps_ori, eps_pert


def backward(params, cfg: ModelConfig, grad_out, cache) -> dict:
    """Parameter gradients for a cached clean forward pass."""
    if cache is None:
        raise ValueError("backward requires the cache from forward(want_cache=True)")
    if cache["perturbed"]:
        raise ValueError("backward requires a cache from a clean (unperturbed) pass")
    b, t_count, p_dim = cache["shape"]
    d = cfg.channels
    heads = cfg.heads
    hd = d // heads
    scale = 1.0 / np.sqrt(hd)
    g = np.asarray(grad_out, dtype=np.float64)
    if g.shape != (b, t_count, p_dim):
        raise ValueError(f"grad shape {g.shape} != output shape {(b, t_count, p_dim)}")

    grads = {}
    nf2d = cache["nf"].reshape(b * t_count, d)
    g2d = g.reshape(b * t_count, p_dim)
    grads["head.w"] = nf2d.T @ g2d
    grads["head.b"] = g2d.sum(axis=0)
    g_nf = (g2d @ params["head.w"].T).reshape(b, t_count, d)
    g_h, grads["ln_f.g"], grads["ln_f.b"] = layer_norm_backward(cache["lnf"], g_nf)

    for i in reversed(range(cfg.blocks)):
        pref = f"blocks.{i}."
        blk = cache["blocks"][i]
        # hout = h1 + m2; both summands receive g_h
        g_m2_2d = g_h.reshape(b * t_count, d)
        grads[pref + "mlp.w2"] = blk["ma"].T @ g_m2_2d
        grads[pref + "mlp.b2"] = g_m2_2d.sum(axis=0)
        g_ma = g_m2_2d @ params[pref + "mlp.w2"].T
        g_m1 = gelu_backward(blk["m1"], g_ma, tanh_inner=blk["mt"])
        n2_2d = blk["n2"].reshape(b * t_count, d)
        grads[pref + "mlp.w1"] = n2_2d.T @ g_m1
        grads[pref + "mlp.b1"] = g_m1.sum(axis=0)
        g_n2 = (g_m1 @ params[pref + "mlp.w1"].T).reshape(b, t_count, d)
        g_h1_from_ln, grads[pref + "ln2.g"], grads[pref + "ln2.b"] = layer_norm_backward(
            blk["ln2"], g_n2)
        g_h1 = g_h + g_h1_from_ln
        # h1 = hin + abr
        g_abr_2d = g_h1.reshape(b * t_count, d)
        am2d = blk["am"].reshape(b * t_count, d)
        grads[pref + "attn.wo"] = am2d.T @ g_abr_2d
        grads[pref + "attn.bo"] = g_abr_2d.sum(axis=0)
        g_am = (g_abr_2d @ params[pref + "attn.wo"].T).reshape(b, t_count, d)
        g_ao = g_am.reshape(b, t_count, heads, hd).transpose(0, 2, 1, 3)
        probs, q, k, v = blk["probs"], blk["q"], blk["k"], blk["v"]
        g_probs = g_ao @ v.transpose(0, 1, 3, 2)
        g_v = probs.transpose(0, 1, 3, 2) @ g_ao
        g_scores = softmax_backward(probs, g_probs)
        g_q = (g_scores @ k) * scale
        g_k = (g_scores.transpose(0, 1, 3, 2) @ q) * scale
        g_qkv = np.concatenate([
            g_q.transpose(0, 2, 1, 3).reshape(b, t_count, d),
            g_k.transpose(0, 2, 1, 3).reshape(b, t_count, d),
            g_v.transpose(0, 2, 1, 3).reshape(b, t_count, d),
        ], axis=2).reshape(b * t_count, 3 * d)
        n1_2d = blk["n1"].reshape(b * t_count, d)
        grads[pref + "attn.wqkv"] = n1_2d.T @ g_qkv
        grads[pref + "attn.bqkv"] = g_qkv.sum(axis=0)
        g_n1 = (g_qkv @ params[pref + "attn.wqkv"].T).reshape(b, t_count, d)
        g_hin_from_ln, grads[pref + "ln1.g"], grads[pref + "ln1.b"] = layer_norm_backward(
            blk["ln1"], g_n1)
        g_h = g_h1 + g_hin_from_ln

    grads["pos_embed"] = g_h.sum(axis=0)
    g_tok2d = g_h.reshape(b * t_count, d)
    grads["patch_embed.w"] = cache["x2d"].T @ g_tok2d
    grads["patch_embed.b"] = g_tok2d.sum(axis=0)

    g_condvec = g_h.sum(axis=1)
    grads["class_embed"] = np.zeros_like(params["class_embed"])
    np.add.at(grads["class_embed"], cache["cond_ids"], g_condvec)
    grads["time_mlp.w2"] = cache["ta"].T @ g_condvec
    grads["time_mlp.b2"] = g_condvec.sum(axis=0)
    g_ta = g_condvec @ params["time_mlp.w2"].T
    g_th1 = gelu_backward(cache["th1"], g_ta)
    grads["time_mlp.w1"] = cache["t_sin"].T @ g_th1
    grads["time_mlp.b1"] = g_th1.sum(axis=0)
    return grads
