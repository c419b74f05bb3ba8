"""
Skorokhod embedding of a simple random walk into a d-dimensional Brownian
motion, built coordinate by coordinate.

Each coordinate X^j is a 1-D Brownian motion. Its successive unit crossings
xi^j_1 < xi^j_2 < ... are the times at which X^j reaches a level one unit
away from the previous one. Independent uniform coordinate choices Z_k
decide which coordinate the k-th walk step uses; the step copies the sign
of that coordinate's next unused crossing. Walk steps take 1/d time units
each, so W(t) and S(t) are compared at equal times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from loguru import logger

from src.brownian_coupling.brownian_paths import BrownianPath, first_exit_index
from src.brownian_coupling.continuous_cut_balls import DEFAULT_RHO, RESOLUTION_FACTOR, is_cut_ball_continuous
from src.brownian_coupling.errors import CrossingJumpError, SimulationAbort
from src.cut_detect.cut_balls import is_cut_ball_discrete
from src.walk_core.lattice_walk import BallSpec, LatticePath, check_bulk_point, check_dimension, hitting_time
from src.walk_core.rng_streams import RngStream

MAX_DT = 0.01
FIRST_CHUNK = 1 << 16
LAST_CHUNK = 1 << 21
CHOICE_BLOCK = 4096


@dataclass(frozen=True, eq=False)
class CoupledPair:
    """One joint realisation of (W, S) run past both tau_{n+1} and T_{n+1}."""

    n: float
    dt: float
    bm: BrownianPath
    crossing_indices: tuple
    crossing_levels: tuple
    z_choices: np.ndarray
    walk: LatticePath
    tau_index: int
    T_index: int
    max_deviation: float
    seed: int
    stream_id: int
    keep_every: int = 1

    @property
    def d(self) -> int:
        return self.walk.d

    @property
    def tau(self) -> float:
        return self.tau_index / self.d

    @property
    def T(self) -> float:
        return self.T_index * self.dt

    def summary(self) -> dict:
        """Scalar description of the pair for tables."""
        return {
            "n": self.n,
            "dt": self.dt,
            "seed": self.seed,
            "stream_id": self.stream_id,
            "max_deviation": self.max_deviation,
            "tau": self.tau,
            "T": self.T,
        }

    def walk_until_exit(self, log_radius: float) -> LatticePath:
        """Embedded walk stopped on leaving the ball of radius e^log_radius."""
        ball = BallSpec(tuple([0.0] * self.d), log_radius)
        index = hitting_time(self.walk, ball)
        if index is None:
            raise SimulationAbort(f"embedded walk never left radius e^{log_radius}")
        return self.walk.prefix(index)

    def bm_until_exit(self, log_radius: float) -> BrownianPath:
        """Brownian path cut at its first sample outside radius e^log_radius."""
        index = first_exit_index(self.bm.samples, math.exp(log_radius))
        if index is None:
            raise SimulationAbort(f"Brownian path never left radius e^{log_radius}")
        return BrownianPath(self.bm.dt, self.bm.samples[: index + 1], index)


@dataclass(frozen=True)
class CutBallAgreement:
    discrete: bool
    continuous: bool

    @property
    def agree(self) -> bool:
        return self.discrete == self.continuous


class _CoordinateCrossings:
    """Incremental unit-crossing detection for one coordinate."""

    def __init__(self):
        self.last_crossed_level = 0
        self.indices: list[np.ndarray] = []
        self.levels: list[np.ndarray] = []
        self.count = 0

    def scan(self, values: np.ndarray, first_index: int) -> None:
        """``values[0]`` is the sample at ``first_index - 1``."""
        floors = np.floor(values)
        jumps = np.diff(floors)
        moved = np.flatnonzero(jumps)
        if not moved.size:
            return
        if np.any(np.abs(jumps[moved]) >= 2):
            bad = int(moved[np.abs(jumps[moved]) >= 2][0])
            raise CrossingJumpError(f"coordinate crossed two levels between grid samples {first_index + bad - 1} and {first_index + bad}")
        crossed = np.where(jumps[moved] > 0, floors[moved + 1], floors[moved]).astype(np.int64)
        previous = np.concatenate([[self.last_crossed_level], crossed[:-1]])
        recorded = crossed != previous
        self.last_crossed_level = int(crossed[-1])
        if recorded.any():
            self.indices.append(first_index + moved[recorded])
            self.levels.append(crossed[recorded])
            self.count += int(recorded.sum())

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Crossing sample indices and levels recorded so far, in order."""
        if not self.indices:
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
        return np.concatenate(self.indices), np.concatenate(self.levels)


def _available_steps(choices: np.ndarray, counts: Sequence[int], d: int) -> Optional[int]:
    """Number of walk steps the crossings found so far can support, if bounded by them."""
    limit = None
    for j in range(d):
        used = np.cumsum(choices == j)
        over = np.flatnonzero(used > counts[j])
        if over.size:
            limit = int(over[0]) if limit is None else min(limit, int(over[0]))
    return limit


def _walk_positions(choices: np.ndarray, levels: Sequence[np.ndarray], d: int) -> np.ndarray:
    """Walk sites built from the coordinate choices and each coordinate's crossing levels."""
    counts = np.cumsum(choices[:, None] == np.arange(d)[None, :], axis=0)
    positions = np.zeros((choices.shape[0] + 1, d), dtype=np.int64)
    for j in range(d):
        table = np.concatenate([[0], levels[j]]).astype(np.int64)
        positions[1:, j] = table[counts[:, j]]
    return positions


def skorokhod_embed(n: float, dt: float, rng: RngStream, *, d: int = 2, keep_every: int = 1) -> CoupledPair:
    """
    Build one coupled (Brownian motion, embedded walk) pair at scale n.

    Args:
        n: log-radius scale; the run lasts until both processes have left
            the ball of radius e^{n+1}.
        dt: crossing-detection grid step, at most 0.01.
        rng: stream key; increments use the stream, coordinate choices its
            jumped copy.
        d: dimension.
        keep_every: store every k-th Brownian sample only.

    Returns:
        CoupledPair.

    Raises:
        CrossingJumpError: the grid is too coarse to resolve a crossing.
    """
    check_dimension(d)
    if not 0 < dt <= MAX_DT:
        raise ValueError(f"dt must lie in (0, {MAX_DT}], got {dt}")
    if n < 1:
        raise ValueError(f"scale n must be at least 1, got {n}")
    if keep_every < 1:
        raise ValueError("keep_every must be a positive integer")

    gen_bm = rng.generator()
    gen_z = rng.jumped_generator()
    radius = math.exp(n + 1)
    scale = math.sqrt(dt)
    crossings = [_CoordinateCrossings() for _ in range(d)]
    kept = [np.zeros((1, d))]
    position = np.zeros(d)
    sample_count = 1
    chunk = FIRST_CHUNK
    choices = np.empty(0, dtype=np.int64)
    T_index: Optional[int] = None

    while True:
        block = position + np.cumsum(gen_bm.standard_normal((chunk, d)) * scale, axis=0)
        for j in range(d):
            crossings[j].scan(np.concatenate([[position[j]], block[:, j]]), sample_count)
        if T_index is None:
            exit_at = first_exit_index(block, radius)
            if exit_at is not None:
                T_index = sample_count + exit_at
        global_index = sample_count + np.arange(chunk)
        kept.append(block[global_index % keep_every == 0])
        sample_count += chunk
        position = block[-1]
        chunk = min(2 * chunk, LAST_CHUNK)

        counts = [c.count for c in crossings]
        steps = _available_steps(choices, counts, d)
        while steps is None:
            size = max(CHOICE_BLOCK, d * min(counts) + CHOICE_BLOCK - choices.size)
            choices = np.concatenate([choices, gen_z.integers(0, d, size=size)])
            steps = _available_steps(choices, counts, d)
        if T_index is None:
            continue
        levels = [c.arrays()[1] for c in crossings]
        positions = _walk_positions(choices[:steps], levels, d)
        tau_index = first_exit_index(positions.astype(float), radius)
        if tau_index is None:
            continue
        horizon = max(tau_index / d, T_index * dt)
        if (sample_count - 1) * dt >= horizon and steps >= math.floor(horizon * d) + 1:
            break

    last_step = max(tau_index, math.floor(horizon * d) + 1)
    walk = LatticePath(positions[: last_step + 1])
    samples = np.concatenate(kept)
    horizon_row = min(samples.shape[0] - 1, math.ceil(horizon / (dt * keep_every)))
    samples = samples[: max(horizon_row, T_index // keep_every + 1) + 1]

    grid_times = np.arange(horizon_row + 1) * dt * keep_every
    walk_rows = np.minimum(np.floor(grid_times * d).astype(np.int64), walk.n_steps)
    deviation = walk.sites[walk_rows].astype(float) - samples[: horizon_row + 1]
    max_deviation = float(np.sqrt(np.einsum("ij,ij->i", deviation, deviation).max()))

    bm = BrownianPath(dt * keep_every, samples, first_exit_index(samples, radius))
    arrays = [c.arrays() for c in crossings]
    logger.debug(f"Coupled pair n={n}: tau={tau_index / d:.1f}, T={T_index * dt:.1f}, max deviation {max_deviation:.2f}")
    return CoupledPair(
        n=n,
        dt=dt,
        bm=bm,
        crossing_indices=tuple(a[0] for a in arrays),
        crossing_levels=tuple(a[1] for a in arrays),
        z_choices=choices[:last_step],
        walk=walk,
        tau_index=tau_index,
        T_index=T_index,
        max_deviation=max_deviation,
        seed=rng.seed,
        stream_id=rng.stream_id,
        keep_every=keep_every,
    )


def coupled_cutball_agreement(
    pair: CoupledPair, z: Sequence[float], n: float, rho: float = DEFAULT_RHO, *, strict: bool = True
) -> CutBallAgreement:
    """
    Discrete K_{3n/4}(z) on the walk against the blown-up continuous event on the BM.

    z must be in the bulk at scale n unless ``strict`` is off.
    """
    if not math.isclose(pair.n, n):
        raise ValueError(f"pair was built at scale {pair.n}, not {n}")
    check_bulk_point(z, n, strict=strict, warn=False)
    discrete = is_cut_ball_discrete(pair.walk_until_exit(n), z, n)
    continuous = is_cut_ball_continuous(pair.bm_until_exit(n), z, n / 4, rho, domain_log_radius=n)
    return CutBallAgreement(discrete.occurred, continuous.occurred)


def resolved_keep_every(n: float, dt: float) -> int:
    """Coarsest thinning that still resolves cut balls of inner radius e^{3n/4} on the kept samples."""
    return max(1, math.floor(RESOLUTION_FACTOR * math.exp(1.5 * n) / (4 * dt)))
