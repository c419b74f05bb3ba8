"""
Brownian motion in R^d sampled on a uniform time grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from src.walk_core.lattice_walk import check_dimension
from src.walk_core.rng_streams import RngLike, as_generator

MIN_CHUNK = 4096
MAX_CHUNK = 1 << 20


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """Samples W(i * dt), i = 0..N-1, of a standard Brownian motion."""

    dt: float
    samples: np.ndarray
    exit_index: Optional[int] = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        samples = np.array(self.samples, dtype=float, copy=True)
        if samples.ndim != 2 or samples.shape[0] < 2:
            raise ValueError("a Brownian path needs at least two samples")
        check_dimension(samples.shape[1])
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def d(self) -> int:
        return self.samples.shape[1]

    @property
    def start(self) -> np.ndarray:
        return self.samples[0]

    @property
    def duration(self) -> float:
        return (self.samples.shape[0] - 1) * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.shape[0]) * self.dt

    def prefix(self, last_index: int) -> "BrownianPath":
        """Samples 0..last_index; the exit index is kept only if it falls inside."""
        if not 1 <= last_index < self.samples.shape[0]:
            raise ValueError(f"prefix end {last_index} outside the path")
        exit_index = self.exit_index if self.exit_index is not None and self.exit_index <= last_index else None
        return BrownianPath(self.dt, self.samples[: last_index + 1], exit_index)

    def rescaled(self, log_factor: float) -> "BrownianPath":
        """Brownian scaling: space by e^a, time by e^{2a}."""
        factor = math.exp(log_factor)
        return BrownianPath(self.dt * factor ** 2, self.samples * factor, self.exit_index)


def first_exit_index(samples: np.ndarray, radius: float) -> Optional[int]:
    """First sample with |x| >= radius."""
    outside = np.flatnonzero(np.einsum("ij,ij->i", samples, samples) >= radius ** 2)
    return int(outside[0]) if outside.size else None


def gaussian_blocks(start: np.ndarray, dt: float, gen: np.random.Generator, chunk: int):
    """Endless stream of Euler-Gaussian sample blocks continuing from ``start``."""
    position = np.asarray(start, dtype=float)
    scale = math.sqrt(dt)
    while True:
        block = position + np.cumsum(gen.standard_normal((chunk, position.shape[0])) * scale, axis=0)
        position = block[-1]
        yield block


def sample_bm_until_exit(start: Sequence[float], log_radius: float, dt: float, rng: RngLike) -> BrownianPath:
    """
    Brownian motion from ``start`` until its first sample outside the ball of
    radius e^log_radius around the origin.

    Args:
        start: point strictly inside the ball.
        log_radius: natural log of the stopping radius.
        dt: grid step in time units.
        rng: stream key or running generator.

    Returns:
        BrownianPath whose ``exit_index`` is its last sample.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    start = np.asarray(start, dtype=float)
    check_dimension(start.shape[0])
    radius = math.exp(log_radius)
    if float(start @ start) >= radius ** 2:
        raise ValueError("start must lie strictly inside the stopping ball")

    gen = as_generator(rng)
    expected = (radius ** 2 - float(start @ start)) / (start.shape[0] * dt)
    chunk = int(min(MAX_CHUNK, max(MIN_CHUNK, expected)))
    blocks = [start[None, :]]
    for block in gaussian_blocks(start, dt, gen, chunk):
        exit_at = first_exit_index(block, radius)
        if exit_at is not None:
            blocks.append(block[: exit_at + 1])
            break
        blocks.append(block)
    samples = np.concatenate(blocks)
    return BrownianPath(dt, samples, samples.shape[0] - 1)
