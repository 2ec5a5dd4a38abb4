"""Token and channel self-swap: pair selection by similarity policy and
parallel exchange of the selected slots.

A swap plan is built per instance from the cosine similarity of its axis
vectors (token rows for the spatial axis, channel columns for the channel
axis) and applied as a single permutation gather, so applying the same
plan twice restores the input bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .rng import RngStream
from .tensor_ops import cosine_similarity_matrix


class SwapPolicy(Enum):
    DISSIMILAR = "dissimilar"
    SIMILAR = "similar"
    RANDOM = "random"


class SwapAxis(Enum):
    SPATIAL = "spatial"
    CHANNEL = "channel"


@dataclass(frozen=True)
class SwapPlan:
    """Disjoint index pairs to exchange along one axis of a token tensor."""

    axis: SwapAxis
    pairs: tuple
    axis_len: int

    def __post_init__(self):
        seen = set()
        for i, j in self.pairs:
            if not (0 <= i < j < self.axis_len):
                raise ValueError(f"bad pair ({i},{j}) for axis_len {self.axis_len}")
            if i in seen or j in seen:
                raise ValueError(f"pair indices reused in {self.pairs}")
            seen.add(i)
            seen.add(j)

    def permutation(self) -> np.ndarray:
        """Index array realizing the exchange; an involution by construction."""
        perm = np.arange(self.axis_len)
        for i, j in self.pairs:
            perm[i], perm[j] = j, i
        return perm

    def describe(self) -> str:
        body = ",".join(f"({i},{j})" for i, j in self.pairs)
        return f"axis={self.axis.value} pairs=[{body}]"


def pair_count_from_ratio(r: float, axis_len: int) -> int:
    """N = floor(r * axis_len / 2): each pair accounts for two swapped slots."""
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"swap ratio must be in [0,1], got {r}")
    if axis_len < 2:
        raise ValueError(f"axis_len must be >= 2, got {axis_len}")
    # tiny nudge so products like 0.1*60/2 = 2.9999999999999996 round as intended
    return int(np.floor(r * axis_len / 2.0 + 1e-9))


def select_swap_pairs(
    sim: np.ndarray,
    n_pairs: int,
    policy: SwapPolicy,
    rng: RngStream,
    axis: SwapAxis = SwapAxis.SPATIAL,
) -> SwapPlan:
    """Pick n_pairs disjoint index pairs from a symmetric similarity matrix.

    Dissimilar/Similar walk all unordered pairs sorted by similarity
    (ascending/descending, ties broken by lexicographic (i, j)) and keep a
    pair greedily when both indices are still unused. Random ignores the
    similarities and pairs up a uniformly shuffled index sequence.
    """
    sim = np.asarray(sim, dtype=np.float64)
    t = sim.shape[0]
    if sim.ndim != 2 or sim.shape[1] != t:
        raise ValueError(f"similarity matrix must be square, got {sim.shape}")
    if not np.allclose(sim, sim.T, atol=1e-10):
        raise ValueError("similarity matrix must be symmetric")
    if n_pairs > t // 2:
        raise ValueError(f"n_pairs {n_pairs} exceeds floor({t}/2)")

    if n_pairs == 0:
        return SwapPlan(axis=axis, pairs=(), axis_len=t)

    if policy is SwapPolicy.RANDOM:
        order = rng.generator().permutation(t)
        pairs = []
        for k in range(n_pairs):
            i, j = order[2 * k], order[2 * k + 1]
            pairs.append((int(min(i, j)), int(max(i, j))))
        return SwapPlan(axis=axis, pairs=tuple(pairs), axis_len=t)

    ii, jj = np.triu_indices(t, k=1)
    vals = sim[ii, jj]
    if policy is SwapPolicy.DISSIMILAR:
        order = np.lexsort((jj, ii, vals))
    elif policy is SwapPolicy.SIMILAR:
        order = np.lexsort((jj, ii, -vals))
    else:
        raise ValueError(f"unknown policy {policy}")

    used = np.zeros(t, dtype=bool)
    pairs = []
    for k in order:
        i, j = int(ii[k]), int(jj[k])
        if used[i] or used[j]:
            continue
        pairs.append((i, j))
        used[i] = used[j] = True
        if len(pairs) == n_pairs:
            break
    return SwapPlan(axis=axis, pairs=tuple(pairs), axis_len=t)


def _check_token_tensor(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"token tensor must be (B, T, D), got shape {x.shape}")
    return x


def apply_swap_spatial(x: np.ndarray, plan: SwapPlan) -> np.ndarray:
    """Exchange whole token vectors at the planned slots, every batch element."""
    x = _check_token_tensor(x)
    if plan.axis is not SwapAxis.SPATIAL:
        raise ValueError(f"plan axis is {plan.axis.value}, expected spatial")
    if plan.axis_len != x.shape[1]:
        raise ValueError(f"plan axis_len {plan.axis_len} != token count {x.shape[1]}")
    return x[:, plan.permutation(), :].copy()


def apply_swap_channel(x: np.ndarray, plan: SwapPlan) -> np.ndarray:
    """Exchange whole channel columns; equals transpose-spatial-transpose."""
    x = _check_token_tensor(x)
    if plan.axis is not SwapAxis.CHANNEL:
        raise ValueError(f"plan axis is {plan.axis.value}, expected channel")
    if plan.axis_len != x.shape[2]:
        raise ValueError(f"plan axis_len {plan.axis_len} != channel count {x.shape[2]}")
    return x[:, :, plan.permutation()].copy()


def apply_swap_instance(inst: np.ndarray, plan: SwapPlan) -> np.ndarray:
    """Plan application for a single (T, D) instance."""
    if plan.axis is SwapAxis.SPATIAL:
        return inst[plan.permutation(), :]
    return inst[:, plan.permutation()]


def plan_for_instance(
    x_instance: np.ndarray,
    axis: SwapAxis,
    r: float,
    policy: SwapPolicy,
    rng: RngStream,
) -> SwapPlan:
    """Build a plan for one (T, D) instance: normalize the axis vectors,
    take pairwise cosine similarities, convert the ratio to a pair count,
    and select pairs under the policy."""
    x_instance = np.asarray(x_instance, dtype=np.float64)
    if x_instance.ndim != 2:
        raise ValueError(f"instance must be (T, D), got shape {x_instance.shape}")
    vectors = x_instance if axis is SwapAxis.SPATIAL else x_instance.T
    n = pair_count_from_ratio(r, vectors.shape[0])
    if n == 0:
        return SwapPlan(axis=axis, pairs=(), axis_len=vectors.shape[0])
    sim = cosine_similarity_matrix(vectors, eps=1e-12)
    return select_swap_pairs(sim, n, policy, rng, axis=axis)
