"""
Non-intersection probabilities of two independent walks from the origin,
the raw material of the intersection exponent fits.
"""

from __future__ import annotations

import math
from functools import partial
from typing import Optional

import numpy as np
from loguru import logger

from src.cut_detect.cut_points import site_keys
from src.cut_detect.pair_events import WELL_SEPARATED, separation_quality
from src.estimators.fitting import BernoulliEstimate, bernoulli_estimate
from src.estimators.trial_pool import map_trials
from src.walk_core.lattice_walk import (
    LatticePath,
    check_dimension,
    iter_walk_chunks,
    sample_srw_fixed_steps,
    walk_chunk_size,
)
from src.walk_core.rng_streams import RngStream

RECOMMENDED_TRIALS = 1000


def _check_trials(trials: int, label: str) -> None:
    """Reject zero trials, warn below the recommended count."""
    if trials < 1:
        raise ValueError(f"trials must be at least 1, got {trials}")
    if trials < RECOMMENDED_TRIALS:
        logger.warning(f"{label}: {trials} trials is below the recommended {RECOMMENDED_TRIALS}.")


def _check_log_radius(m: float) -> None:
    """Reject radii below 1, warn below e."""
    if m < 0:
        raise ValueError(f"stopping radius e^{m} is below 1")
    if m < 1:
        logger.warning(f"Scale m={m} is below 1; walks exit after a handful of steps.")


# --- 1. Racing walk pairs ---

def _exit_or_collide(d: int, r2: float, gen: np.random.Generator, forbidden: np.ndarray) -> tuple[np.ndarray, bool]:
    """
    Walk from the origin until it exits the ball of squared radius r2, or
    until it steps onto a key in ``forbidden`` (sorted). Returns the sites
    walked and whether a collision stopped it.
    """
    origin = np.zeros(d, dtype=np.int64)
    blocks = [origin[None, :]]
    for block in iter_walk_chunks(origin, gen, walk_chunk_size(r2)):
        outside = np.flatnonzero(np.einsum("ij,ij->i", block, block) >= r2)
        if outside.size:
            block = block[: outside[0] + 1]
        keys = site_keys(block)
        spots = np.searchsorted(forbidden, keys).clip(max=forbidden.shape[0] - 1)
        collided = np.flatnonzero(forbidden[spots] == keys)
        if collided.size:
            blocks.append(block[: collided[0] + 1])
            return np.concatenate(blocks), True
        blocks.append(block)
        if outside.size:
            return np.concatenate(blocks), False


def race_pair(d: int, m: float, gen: np.random.Generator) -> Optional[tuple[np.ndarray, np.ndarray]]:
    """
    Two walks from 0 stopped at radius e^m, abandoned as soon as they meet.

    The first walk may not come back to the origin; the second may not visit
    any site of the first, the origin included. Returns both site arrays for
    a non-intersecting pair, None otherwise.
    """
    r2 = math.exp(m) ** 2
    origin_key = site_keys(np.zeros((1, d), dtype=np.int64))
    first, collided = _exit_or_collide(d, r2, gen, origin_key)
    if collided:
        return None
    second, collided = _exit_or_collide(d, r2, gen, np.unique(site_keys(first)))
    if collided:
        return None
    return first, second


def _nonintersection_trial(d: int, m: float, stream: RngStream) -> bool:
    """Whether one pair raced to radius e^m stays apart."""
    return race_pair(d, m, stream.generator()) is not None


def _nonintersection_time_trial(d: int, n_steps: int, stream: RngStream) -> bool:
    """Whether two walks of n_steps steps meet only at the origin."""
    gen = stream.generator()
    origin = np.zeros(d, dtype=np.int64)
    first = sample_srw_fixed_steps(origin, n_steps, gen)
    second = sample_srw_fixed_steps(origin, n_steps, gen)
    return not np.isin(site_keys(second.sites[1:]), site_keys(first.sites)).any()


def _separation_trial(d: int, m: float, stream: RngStream) -> Optional[float]:
    """Separation quality of one pair, None when the pair intersects."""
    pair = race_pair(d, m, stream.generator())
    if pair is None:
        return None
    return separation_quality(LatticePath(pair[0]), LatticePath(pair[1]), m).delta


# --- 2. Estimators ---

def estimate_nonintersection(m: float, trials: int, rng: RngStream, *, d: int = 2, workers: int = 1) -> BernoulliEstimate:
    """
    Frequency of the event that two walks from 0, both stopped at radius
    e^m, meet only at their common start.

    Args:
        m: log-radius of the stopping ball.
        trials: number of independent pairs.
        rng: stream of this scale; trial i uses ``rng.substream(i)``.
        d: dimension.
        workers: worker processes.

    Returns:
        BernoulliEstimate (flagged when no pair survives).
    """
    check_dimension(d)
    _check_log_radius(m)
    _check_trials(trials, "nonintersection")
    outcomes = map_trials(partial(_nonintersection_trial, d, m), rng, trials, workers=workers, desc=f"A_m m={m:g}")
    estimate = bernoulli_estimate(outcomes, f"non-intersection at m={m:g}")
    logger.info(f"Non-intersection d={d} m={m:g}: p_hat={estimate.p_hat:.4g} ({estimate.hits}/{trials})")
    return estimate


def estimate_nonintersection_time(n_steps: int, trials: int, rng: RngStream, *, d: int = 2, workers: int = 1) -> BernoulliEstimate:
    """
    Frequency of S1[0, n] and S2(0, n] being disjoint for two walks of
    ``n_steps`` edges from the origin; decays like n^(-xi/2).
    """
    check_dimension(d)
    if n_steps < 1:
        raise ValueError(f"n_steps must be at least 1, got {n_steps}")
    _check_trials(trials, "time-indexed nonintersection")
    outcomes = map_trials(partial(_nonintersection_time_trial, d, int(n_steps)), rng, trials, workers=workers, desc=f"A_n n={n_steps}")
    estimate = bernoulli_estimate(outcomes, f"time-indexed non-intersection at n={n_steps}")
    logger.info(f"Time-indexed non-intersection d={d} n={n_steps}: p_hat={estimate.p_hat:.4g}")
    return estimate


def estimate_well_separated(m: float, trials: int, rng: RngStream, *, d: int = 2, workers: int = 1) -> BernoulliEstimate:
    """P(Delta_m >= 1/10 | A_m), estimated over the non-intersecting pairs among ``trials``."""
    check_dimension(d)
    _check_log_radius(m)
    _check_trials(trials, "well-separated")
    deltas = map_trials(partial(_separation_trial, d, m), rng, trials, workers=workers, desc=f"Delta_m m={m:g}")
    survivors = [delta for delta in deltas if delta is not None]
    if not survivors:
        logger.warning(f"No non-intersecting pair at m={m:g}; conditional probability undefined.")
        return BernoulliEstimate(0, 0, 0.0, None, "no_condition")
    estimate = bernoulli_estimate([delta >= WELL_SEPARATED for delta in survivors], f"well-separated at m={m:g}")
    logger.info(f"Well-separated d={d} m={m:g}: {estimate.hits}/{estimate.trials} surviving pairs")
    return estimate
