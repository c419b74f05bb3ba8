"""
Lattice paths in Z^d (d = 2 or 3): simple random walk generation, hitting
times, balls at exponential scales and the 1/d-per-edge time convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence, Union

import numpy as np
from loguru import logger

from src.walk_core.rng_streams import RngLike, as_generator

SUPPORTED_DIMENSIONS = (2, 3)
MIN_CHUNK = 1024
MAX_CHUNK = 1 << 20


# --- 1. Geometry ---

def unit_steps(d: int) -> np.ndarray:
    """Direction table: code 2*i is +e_i, code 2*i + 1 is -e_i."""
    check_dimension(d)
    steps = np.zeros((2 * d, d), dtype=np.int64)
    for axis in range(d):
        steps[2 * axis, axis] = 1
        steps[2 * axis + 1, axis] = -1
    return steps


def check_dimension(d: int) -> None:
    """Reject dimensions other than 2 and 3."""
    if d not in SUPPORTED_DIMENSIONS:
        raise ValueError(f"dimension {d} is not supported; supported dimensions are 2 and 3")


def lattice_point(coords: Iterable[int]) -> np.ndarray:
    """A LatticePoint as a 1-D int64 array."""
    point = np.asarray(list(coords), dtype=np.int64)
    check_dimension(point.shape[0])
    return point


def scaled_lattice_point(z: Sequence[float], n: float) -> np.ndarray:
    """z_n = floor(e^n z), componentwise."""
    return np.floor(math.exp(n) * np.asarray(z, dtype=float)).astype(np.int64)


@dataclass(frozen=True)
class BallSpec:
    """Open Euclidean ball of radius e^log_radius around ``center``."""

    center: tuple
    log_radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        check_dimension(len(self.center))

    @classmethod
    def around(cls, center: Sequence[float], radius: float) -> "BallSpec":
        """Ball of radius ``radius`` around ``center``."""
        if radius <= 0:
            raise ValueError(f"radius must be positive, got {radius}")
        return cls(tuple(center), math.log(radius))

    @property
    def radius(self) -> float:
        return math.exp(self.log_radius)

    @property
    def d(self) -> int:
        return len(self.center)

    def squared_distances(self, points: np.ndarray) -> np.ndarray:
        """Squared distance of every point to the centre."""
        delta = np.asarray(points, dtype=float) - np.asarray(self.center)
        return np.einsum("...i,...i->...", delta, delta)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Strict membership |x - c| < r."""
        return self.squared_distances(points) < self.radius ** 2

    def contains_closed(self, points: np.ndarray) -> np.ndarray:
        """Membership in the closed ball."""
        return self.squared_distances(points) <= self.radius ** 2


# --- 2. Paths ---

@dataclass(frozen=True, eq=False)
class LatticePath:
    """Nearest-neighbour path; each edge takes 1/d units of time."""

    sites: np.ndarray
    path_id: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        sites = np.array(self.sites, dtype=np.int64, copy=True)
        if sites.ndim != 2 or sites.shape[0] < 2:
            raise ValueError("a lattice path needs at least one edge (two sites)")
        check_dimension(sites.shape[1])
        jumps = np.abs(np.diff(sites, axis=0)).sum(axis=1)
        if not np.all(jumps == 1):
            bad = int(np.flatnonzero(jumps != 1)[0])
            raise ValueError(f"sites {bad} and {bad + 1} are not lattice neighbours")
        sites.setflags(write=False)
        object.__setattr__(self, "sites", sites)

    @property
    def d(self) -> int:
        return self.sites.shape[1]

    @property
    def n_steps(self) -> int:
        return self.sites.shape[0] - 1

    @property
    def duration(self) -> float:
        return self.n_steps / self.d

    @property
    def start(self) -> np.ndarray:
        return self.sites[0]

    @property
    def end(self) -> np.ndarray:
        return self.sites[-1]

    def __len__(self) -> int:
        return self.n_steps

    def directions(self) -> np.ndarray:
        """Direction codes 0..2d-1 of every edge."""
        delta = np.diff(self.sites, axis=0)
        axis = np.argmax(np.abs(delta), axis=1)
        negative = delta[np.arange(delta.shape[0]), axis] < 0
        return (2 * axis + negative).astype(np.int64)

    def prefix(self, last_index: int) -> "LatticePath":
        """Path restricted to indices 0..last_index."""
        if not 1 <= last_index <= self.n_steps:
            raise ValueError(f"prefix end {last_index} outside 1..{self.n_steps}")
        return LatticePath(self.sites[: last_index + 1], self.path_id)

    def __eq__(self, other):
        if not isinstance(other, LatticePath):
            return NotImplemented
        return self.sites.shape == other.sites.shape and bool(np.array_equal(self.sites, other.sites))

    def __hash__(self):
        return hash(self.sites.tobytes())


def path_from_directions(start: Sequence[int], directions: Sequence[int], path_id: Optional[str] = None) -> LatticePath:
    """Path from ``start`` following direction codes 0..2d-1."""
    start = lattice_point(start)
    codes = np.asarray(directions, dtype=np.int64)
    steps = unit_steps(start.shape[0])
    if codes.size and (codes.min() < 0 or codes.max() >= steps.shape[0]):
        raise ValueError("direction codes must lie in 0..2d-1")
    sites = np.vstack([start, start + np.cumsum(steps[codes], axis=0)])
    return LatticePath(sites, path_id)


# --- 3. Random walk generation ---

def walk_chunk_size(expected_steps: float) -> int:
    """Steps drawn per block, about the expected exit time."""
    return int(min(MAX_CHUNK, max(MIN_CHUNK, expected_steps)))


def iter_walk_chunks(start: np.ndarray, gen: np.random.Generator, chunk: int) -> Iterator[np.ndarray]:
    """Endless stream of trajectory blocks continuing from ``start``."""
    steps = unit_steps(start.shape[0])
    position = np.asarray(start, dtype=np.int64)
    while True:
        codes = gen.integers(0, steps.shape[0], size=chunk)
        block = position + np.cumsum(steps[codes], axis=0)
        position = block[-1]
        yield block


def sample_srw_until_exit(start: Sequence[int], ball: BallSpec, rng: RngLike) -> LatticePath:
    """
    Simple random walk from ``start`` stopped at its first site outside ``ball``.

    Args:
        start: lattice point strictly inside the ball.
        ball: open stopping ball, radius at least 1.
        rng: stream key or running generator.

    Returns:
        LatticePath whose last site is the first exit site.
    """
    start = lattice_point(start)
    if ball.d != start.shape[0]:
        raise ValueError("start and ball have different dimensions")
    if ball.radius < 1:
        raise ValueError(f"stopping radius must be at least 1, got {ball.radius:.4g}")
    if not ball.contains(start):
        raise ValueError("start must lie strictly inside the stopping ball")

    gen = as_generator(rng)
    r2 = ball.radius ** 2
    blocks = [start[None, :]]
    for block in iter_walk_chunks(start, gen, walk_chunk_size(r2)):
        outside = np.flatnonzero(ball.squared_distances(block) >= r2)
        if outside.size:
            blocks.append(block[: outside[0] + 1])
            break
        blocks.append(block)
    return LatticePath(np.concatenate(blocks))


def sample_srw_fixed_steps(start: Sequence[int], steps: int, rng: RngLike) -> LatticePath:
    """Simple random walk with exactly ``steps`` edges."""
    if steps < 1:
        raise ValueError(f"steps must be at least 1, got {steps}")
    start = lattice_point(start)
    gen = as_generator(rng)
    codes = gen.integers(0, 2 * start.shape[0], size=steps)
    return path_from_directions(start, codes)


def sample_exit_path(d: int, log_radius: float, rng: RngLike) -> LatticePath:
    """Walk from the origin stopped on leaving the ball of radius e^log_radius."""
    check_dimension(d)
    origin = np.zeros(d, dtype=np.int64)
    return sample_srw_until_exit(origin, BallSpec(tuple(origin), log_radius), rng)


# --- 4. Hitting times and interpolation ---

Target = Union[BallSpec, Iterable[Sequence[int]]]


def hitting_time(path: LatticePath, target: Target) -> Optional[int]:
    """
    First index at which the path meets ``target``.

    A set of lattice points is hit when a site equals one of them. For a
    BallSpec the path is stopped on crossing the sphere: a path starting
    inside is hit at its first site with |x - c| >= r, a path starting
    outside at its first site in the closed ball.
    """
    if isinstance(target, BallSpec):
        inside = target.contains(path.sites)
        hits = ~inside if inside[0] else target.contains_closed(path.sites)
    else:
        points = np.asarray([tuple(p) for p in target], dtype=np.int64)
        if points.size == 0:
            return None
        points = points.reshape(-1, path.d)
        wanted = set(map(tuple, points.tolist()))
        hits = np.fromiter((tuple(s) in wanted for s in path.sites.tolist()), dtype=bool, count=path.sites.shape[0])
    index = np.flatnonzero(hits)
    return int(index[0]) if index.size else None


def time_to_edge(t: float, d: int) -> tuple[int, float]:
    """Split time t into (edge index, fraction of that edge)."""
    scaled = t * d
    edge = int(math.floor(scaled))
    return edge, scaled - edge


def position_at(path: LatticePath, t: float) -> np.ndarray:
    """Linear interpolation of the path at time t in [0, duration]."""
    if not 0 <= t <= path.duration:
        raise ValueError(f"time {t} outside [0, {path.duration}]")
    edge, fraction = time_to_edge(t, path.d)
    if edge >= path.n_steps:
        return path.sites[-1].astype(float)
    a = path.sites[edge].astype(float)
    b = path.sites[edge + 1].astype(float)
    return a + fraction * (b - a)


def positions_at(path: LatticePath, times: np.ndarray) -> np.ndarray:
    """Vectorised :func:`position_at` for times already inside [0, duration]."""
    scaled = np.asarray(times, dtype=float) * path.d
    edge = np.minimum(np.floor(scaled).astype(np.int64), path.n_steps - 1)
    fraction = (scaled - edge)[:, None]
    a = path.sites[edge].astype(float)
    b = path.sites[edge + 1].astype(float)
    return a + fraction * (b - a)


def check_bulk_point(z: Sequence[float], n: float, *, strict: bool = True, warn: bool = True) -> bool:
    """
    z must lie strictly inside the unit ball and away from 0, at distance
    e^{-n/6} or more from both.

    Args:
        z: point of the unit ball.
        n: scale.
        strict: raise on a margin shortfall. Small-n calibration runs pass
            False to get a logged warning instead.
        warn: log the shortfall when not strict.

    Returns:
        Whether z is in the bulk at scale n.
    """
    r = float(np.linalg.norm(np.asarray(z, dtype=float)))
    if r == 0 or r >= 1:
        raise ValueError(f"point {tuple(z)} must lie strictly inside the unit ball and differ from 0")
    margin = math.exp(-n / 6)
    if r < margin or 1 - r < margin:
        message = f"point {tuple(z)} is closer than e^(-n/6) = {margin:.3g} to 0 or the unit sphere at n={n:g}"
        if strict:
            raise ValueError(message)
        if warn:
            logger.warning(f"{message[0].upper()}{message[1:]}.")
        return False
    return True
