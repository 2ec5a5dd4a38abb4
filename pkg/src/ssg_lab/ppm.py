"""Binary PPM (P6) image output for model-space grayscale images.

Pixel values are mapped from [-1, 1] to 0..255 and replicated across the
three RGB channels; the format needs no dependencies and every byte is
specified, so outputs can be compared exactly.
"""

from __future__ import annotations

import numpy as np


def to_bytes_gray(values: np.ndarray) -> np.ndarray:
    """Map [-1, 1] floats to u8, clipping out-of-range values."""
    arr = np.asarray(values, dtype=np.float64)
    scaled = np.clip((arr + 1.0) * 0.5, 0.0, 1.0) * 255.0
    return np.round(scaled).astype(np.uint8)


def write_ppm(path, image: np.ndarray) -> None:
    """Write a (H, W) grayscale array in [-1, 1] as a P6 file."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"image must be (H, W), got shape {arr.shape}")
    h, w = arr.shape
    gray = to_bytes_gray(arr)
    rgb = np.repeat(gray[:, :, None], 3, axis=2)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())


def read_ppm(path):
    """Parse a P6 file back into (u8 array (H, W, 3))."""
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P6":
        raise ValueError(f"{path} is not a P6 ppm file")
    w, h = (int(v) for v in parts[1].split())
    maxval = int(parts[2])
    if maxval != 255:
        raise ValueError(f"unsupported maxval {maxval}")
    pixels = np.frombuffer(parts[3][: w * h * 3], dtype=np.uint8)
    return pixels.reshape(h, w, 3)


def image_grid(images: np.ndarray, side: int, cols: int = 8) -> np.ndarray:
    """Tile flat images row-major into one (rows*side, cols*side) array."""
    arr = np.asarray(images, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != side * side:
        raise ValueError(f"expected flat (N, {side * side}) images, got {arr.shape}")
    n = arr.shape[0]
    cols = max(1, min(cols, n))
    rows = (n + cols - 1) // cols
    grid = np.full((rows * side, cols * side), -1.0)
    for idx in range(n):
        r, c = divmod(idx, cols)
        grid[r * side:(r + 1) * side, c * side:(c + 1) * side] = arr[idx].reshape(side, side)
    return grid
