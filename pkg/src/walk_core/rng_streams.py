"""
Reproducible random streams for parallel Monte Carlo.

Every draw in the laboratory comes from a Philox generator keyed by the pair
(seed, stream_id). Philox is counter based, so two keys never share state and
a stream can be jumped ahead without touching the others.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

# One byte per experiment kind, shifted into the top of the stream id.
KIND_CODES = {
    "xi": 1,
    "one_point": 2,
    "two_point": 3,
    "moments": 4,
    "cutball": 5,
    "couple": 6,
    "l2box": 7,
    "dimension": 8,
    "ruin": 9,
    "beurling": 10,
}


def mix64(value: int) -> int:
    """SplitMix64 finaliser on a 64-bit integer."""
    z = (value + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True, slots=True)
class RngStream:
    """A (seed, stream_id) key; it fully determines every draw made from it."""

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & MASK64)
        object.__setattr__(self, "stream_id", int(self.stream_id) & MASK64)

    def bit_generator(self) -> np.random.Philox:
        """Philox keyed by (seed, stream_id)."""
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        return np.random.Philox(key=key)

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of the stream."""
        return np.random.Generator(self.bit_generator())

    def jumped_generator(self, jumps: int = 1) -> np.random.Generator:
        """Generator 2**128 * jumps draws ahead of :meth:`generator`."""
        return np.random.Generator(self.bit_generator().jumped(jumps))

    def substream(self, index: int) -> "RngStream":
        """Stream of trial ``index`` under this stream."""
        if index < 0:
            raise ValueError(f"substream index must be non-negative, got {index}")
        return RngStream(self.seed, mix64((self.stream_id + (index + 1) * GOLDEN_GAMMA) & MASK64))


def scale_stream(seed: int, kind: str, scale_index: int) -> RngStream:
    """Stream for one (experiment kind, scale) cell of a run."""
    if kind not in KIND_CODES:
        raise ValueError(f"unknown experiment kind '{kind}'")
    if not 0 <= scale_index < (1 << 16):
        raise ValueError(f"scale index out of range: {scale_index}")
    return RngStream(seed, mix64((KIND_CODES[kind] << 56) | (scale_index << 40)))


RngLike = Union[RngStream, np.random.Generator]


def as_generator(rng: RngLike) -> np.random.Generator:
    """Accept either a stream key or an already running generator."""
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")
