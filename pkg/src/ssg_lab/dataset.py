"""Procedural shapes dataset: circles, squares, and crosses with jittered
position and size, rendered antialiased into [-1, 1] grayscale images.

Every image is generated from its own derived rng stream, so the set is
deterministic in (spec, seed) and independent of generation order.
"""

from __future__ import annotations

import numpy as np

from .config import DatasetSpec
from .rng import RngStream

CLASS_NAMES = ("circle", "square", "cross")


def _soft_mask(signed_dist: np.ndarray) -> np.ndarray:
    # signed distance > 0 inside; half-pixel linear edge for antialiasing
    return np.clip(signed_dist + 0.5, 0.0, 1.0) * 2.0 - 1.0


def render_shape(class_id: int, side: int, cx: float, cy: float, size: float) -> np.ndarray:
    """Render one shape into a flat (side*side,) image in [-1, 1]."""
    coords = np.arange(side, dtype=np.float64) + 0.5
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    dx = np.abs(xx - cx)
    dy = np.abs(yy - cy)
    if class_id == 0:
        sd = size - np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
    elif class_id == 1:
        sd = np.minimum(size - dx, size - dy)
    elif class_id == 2:
        bar = 0.45 * size
        horizontal = np.minimum(size - dx, bar - dy)
        vertical = np.minimum(bar - dx, size - dy)
        sd = np.maximum(horizontal, vertical)
    else:
        raise ValueError(f"unknown class id {class_id}")
    return _soft_mask(sd).reshape(-1)


def generate_dataset(spec: DatasetSpec, seed: int, split: str = "train"):
    """Return (images, labels) with images (N, side^2) and labels (N,).

    The split tag keeps train and held-out evaluation draws on disjoint
    rng streams under the same seed.
    """
    side = spec.image_side
    base = RngStream(seed).child("dataset", split)
    n_classes = len(CLASS_NAMES)
    total = n_classes * spec.samples_per_class
    images = np.empty((total, side * side), dtype=np.float64)
    labels = np.empty(total, dtype=np.int64)
    base_size = side / 4.0
    for class_id in range(n_classes):
        for k in range(spec.samples_per_class):
            idx = class_id * spec.samples_per_class + k
            gen = base.child(class_id, k).generator()
            cx = side / 2.0 + gen.uniform(-spec.pos_jitter, spec.pos_jitter)
            cy = side / 2.0 + gen.uniform(-spec.pos_jitter, spec.pos_jitter)
            size = base_size + gen.uniform(-spec.size_jitter, spec.size_jitter)
            size = max(size, 1.5)
            images[idx] = render_shape(class_id, side, cx, cy, size)
            labels[idx] = class_id
    return images, labels
