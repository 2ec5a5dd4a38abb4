"""Deterministic, forkable random streams.

Every source of randomness in the package flows through :class:`RngStream`
so that a top-level seed plus a derivation path fully determines behaviour,
independent of evaluation order or how work is split across workers.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """A (seed, stream_id) pair naming one reproducible random sequence.

    Streams are value objects: ``child`` derives a new stream id by hashing
    tags onto the current one, and ``generator`` materializes a fresh
    ``numpy.random.Generator`` positioned at the start of the sequence.
    Identical (seed, stream_id) pairs always yield bit-identical draws.
    """

    seed: int
    stream_id: int = 0

    def child(self, *tags: int | str) -> "RngStream":
        """Derive a sub-stream keyed by a mix of integer/string tags."""
        h = hashlib.blake2b(digest_size=8)
        h.update((self.stream_id & _MASK64).to_bytes(8, "little"))
        for tag in tags:
            if isinstance(tag, (int, np.integer)):
                h.update(b"i" + (int(tag) & _MASK64).to_bytes(8, "little"))
            elif isinstance(tag, str):
                h.update(b"s" + tag.encode("utf-8") + b"\x00")
            else:
                raise TypeError(f"stream tags must be int or str, got {type(tag).__name__}")
        return RngStream(self.seed, int.from_bytes(h.digest(), "little"))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=(self.seed & _MASK64, self.stream_id & _MASK64))
        return np.random.Generator(np.random.PCG64(ss))
