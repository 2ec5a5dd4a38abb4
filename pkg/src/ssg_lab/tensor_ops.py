"""Small numeric substrate: validation helpers plus the handful of
primitives the denoiser needs, each with an explicit backwardform.

Forward functions return whatever intermediates their backward partner
needs, so callers thread tuples instead of re-deriving state.
"""

from __future__ import annotations

import numpy as np

F64 = np.float64


def check_finite(x: np.ndarray, name: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def as_float_array(x, name: str = "array", ndim: int | None = None) -> np.ndarray:
    """Coerce to a float64 ndarray, optionally enforcing rank."""
    arr = np.asarray(x, dtype=F64)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must have ndim={ndim}, got shape {arr.shape}")
    return check_finite(arr, name)


def l2_normalize_rows(m: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """Scale each row to unit L2 norm; rows with norm below eps become zeros."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    m = check_finite(np.asarray(m, dtype=F64), "l2_normalize_rows input")
    norm = np.sqrt(np.sum(m * m, axis=-1, keepdims=True))
    safe = norm >= eps
    return np.where(safe, m / np.where(safe, norm, 1.0), 0.0)


def cosine_similarity_matrix(m: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """Pairwise cosine similarity of (T, D) rows, returned as (T, T).

    Rows with norm below eps have similarity 0 with everything, themselves
    included, so degenerate tokens never look maximally self-similar.
    """
    m = np.asarray(m, dtype=F64)
    if m.ndim != 2 or m.shape[0] < 2:
        raise ValueError(f"need a 2-d matrix with >= 2 rows, got shape {m.shape}")
    unit = l2_normalize_rows(m, eps=eps)
    return unit @ unit.T


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=F64)
    b = np.asarray(b, dtype=F64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"incompatible matmul shapes {a.shape} x {b.shape}")
    return a @ b


def softmax_rows(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=F64)
    if m.ndim != 2:
        raise ValueError(f"softmax_rows expects a matrix, got shape {m.shape}")
    return softmax_lastaxis(m)


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(x: np.ndarray, return_tanh: bool = False):
    """tanh approximation of GELU; optionally also return tanh(inner) so a
    backward pass can skip recomputing it.

    Written with explicit buffer reuse; these run on multi-megabyte
    activations inside the training loop and are memory-bound.
    """
    inner = x * x
    inner *= x
    inner *= 0.044715
    inner += x
    inner *= _GELU_C
    t = np.tanh(inner)
    y = inner  # buffer no longer needed, reuse for the output
    np.add(t, 1.0, out=y)
    y *= x
    y *= 0.5
    return (y, t) if return_tanh else y


def gelu_backward(x: np.ndarray, grad_out: np.ndarray, tanh_inner=None) -> np.ndarray:
    # d/dx [0.5 x (1 + tanh u)] = 0.5 [1 + t + x (1 - t^2) u'], t = tanh u,
    # u' = c (1 + 3*0.044715 x^2)
    du = x * x
    if tanh_inner is None:
        inner = du * x
        inner *= 0.044715
        inner += x
        inner *= _GELU_C
        tanh_inner = np.tanh(inner)
    t = tanh_inner
    du *= 3.0 * 0.044715
    du += 1.0
    du *= _GELU_C
    out = t * t
    np.subtract(1.0, out, out=out)
    out *= du
    out *= x
    out += t
    out += 1.0
    out *= 0.5
    out *= grad_out
    return out


def softmax_lastaxis(x: np.ndarray) -> np.ndarray:
    shifted = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def softmax_backward(probs: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    # Jacobian-vector product: p * (g - sum(g * p)) along the last axis.
    dot = np.sum(grad_out * probs, axis=-1, keepdims=True)
    return probs * (grad_out - dot)


def layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = 1e-5):
    """Normalize over the last axis, then scale/shift.

    Returns (out, cache) where cache feeds layer_norm_backward.
    """
    mu = np.mean(x, axis=-1, keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv_std
    out = xhat * gamma + beta
    return out, (xhat, inv_std, gamma)


def layer_norm_backward(cache, grad_out: np.ndarray):
    """Returns (grad_x, grad_gamma, grad_beta)."""
    xhat, inv_std, gamma = cache
    d = xhat.shape[-1]
    g = grad_out * gamma
    # grad through mean/variance of the normalization
    sum_g = np.sum(g, axis=-1, keepdims=True)
    sum_gx = np.sum(g * xhat, axis=-1, keepdims=True)
    grad_x = inv_std * (g - sum_g / d - xhat * sum_gx / d)
    axes = tuple(range(grad_out.ndim - 1))
    grad_gamma = np.sum(grad_out * xhat, axis=axes)
    grad_beta = np.sum(grad_out, axis=axes)
    return grad_x, grad_gamma, grad_beta
