"""Binary checkpoint format.

Layout (all integers little-endian):

    magic           8 bytes  b"SSGCKPT1"
    version         u32
    model config    image_side, patch_side, channels, blocks, heads (u32 each),
                    mlp_ratio (f64), num_classes (u32), cond_dropout_prob (f64)
    schedule        train_steps (u32), beta_start (f64), beta_end (f64)
    step            u64 optimizer step count
    tensor count    u32
    per tensor      name (u16 length + utf-8), ndim (u8), dims (u32 each),
                    data (f64 little-endian, C order)

Tensors appear in the canonical parameter order, and loads are validated
against the shapes the stored config implies.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .config import ModelConfig, ScheduleConfig
from .denoiser import param_shapes

MAGIC = b"SSGCKPT1"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    """Base class for checkpoint parsing failures."""


class CheckpointHeaderError(CheckpointError):
    """Bad magic bytes or structurally invalid header fields."""


class CheckpointVersionError(CheckpointError):
    """Format version not supported by this reader."""


class CheckpointTruncatedError(CheckpointError):
    """File ended before the named section was complete."""


@dataclass
class Checkpoint:
    config: ModelConfig
    schedule: ScheduleConfig
    step: int
    params: dict


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointTruncatedError(f"file truncated while reading {what}")
    return data


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    shapes = param_shapes(ckpt.config)
    missing = [k for k in shapes if k not in ckpt.params]
    if missing:
        raise ValueError(f"parameters missing tensors: {missing[:3]}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        m = ckpt.config
        fh.write(struct.pack("<5I", m.image_side, m.patch_side, m.channels,
                             m.blocks, m.heads))
        fh.write(struct.pack("<d", m.mlp_ratio))
        fh.write(struct.pack("<I", m.num_classes))
        fh.write(struct.pack("<d", m.cond_dropout_prob))
        s = ckpt.schedule
        fh.write(struct.pack("<I", s.train_steps))
        fh.write(struct.pack("<dd", s.beta_start, s.beta_end))
        fh.write(struct.pack("<Q", ckpt.step))
        fh.write(struct.pack("<I", len(shapes)))
        for name in shapes:
            tensor = np.ascontiguousarray(ckpt.params[name], dtype=np.float64)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            fh.write(tensor.astype("<f8").tobytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = _read_exact(fh, len(MAGIC), "magic bytes")
        if magic != MAGIC:
            raise CheckpointHeaderError(f"bad magic bytes {magic!r}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "format version"))
        if version != FORMAT_VERSION:
            raise CheckpointVersionError(
                f"unsupported format version {version} (expected {FORMAT_VERSION})")
        ints = struct.unpack("<5I", _read_exact(fh, 20, "model config"))
        (mlp_ratio,) = struct.unpack("<d", _read_exact(fh, 8, "model config"))
        (num_classes,) = struct.unpack("<I", _read_exact(fh, 4, "model config"))
        (cond_dropout,) = struct.unpack("<d", _read_exact(fh, 8, "model config"))
        config = ModelConfig(
            image_side=ints[0], patch_side=ints[1], channels=ints[2],
            blocks=ints[3], heads=ints[4], mlp_ratio=mlp_ratio,
            num_classes=num_classes, cond_dropout_prob=cond_dropout)
        (train_steps,) = struct.unpack("<I", _read_exact(fh, 4, "schedule"))
        beta_start, beta_end = struct.unpack("<dd", _read_exact(fh, 16, "schedule"))
        schedule = ScheduleConfig(train_steps=train_steps, beta_start=beta_start,
                                  beta_end=beta_end)
        (step,) = struct.unpack("<Q", _read_exact(fh, 8, "step count"))
        (n_tensors,) = struct.unpack("<I", _read_exact(fh, 4, "tensor count"))
        expected = param_shapes(config)
        if n_tensors != len(expected):
            raise CheckpointHeaderError(
                f"tensor count {n_tensors} does not match config ({len(expected)})")
        params = {}
        for expected_name, expected_shape in expected.items():
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2, f"name of {expected_name}"))
            name = _read_exact(fh, name_len, f"name of {expected_name}").decode("utf-8")
            if name != expected_name:
                raise CheckpointHeaderError(
                    f"tensor {name!r} out of order (expected {expected_name!r})")
            (ndim,) = struct.unpack("<B", _read_exact(fh, 1, f"rank of {name}"))
            dims = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim, f"shape of {name}"))
            if tuple(dims) != tuple(expected_shape):
                raise CheckpointHeaderError(
                    f"tensor {name} has shape {dims}, expected {tuple(expected_shape)}")
            count = int(np.prod(dims)) if ndim else 1
            raw = _read_exact(fh, 8 * count, f"tensor {name}")
            params[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(dims)
        trailing = fh.read(1)
        if trailing:
            raise CheckpointHeaderError("unexpected trailing bytes after last tensor")
    return Checkpoint(config=config, schedule=schedule, step=step, params=params)
