"""
Empirical checks of two classical potential-theory estimates: the
gambler's-ruin probabilities for Brownian motion between two spheres, and
the Beurling escape estimate for a walk next to a straight ray.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import partial
from typing import Optional, Sequence

import numpy as np
from loguru import logger

from src.brownian_coupling.brownian_paths import gaussian_blocks
from src.estimators.fitting import FitResult, bernoulli_estimate, fit_exponent
from src.estimators.trial_pool import map_trials
from src.walk_core.lattice_walk import check_dimension, iter_walk_chunks, walk_chunk_size
from src.walk_core.rng_streams import RngLike, RngStream

RUIN_METHODS = ("spheres", "grid")
DIRECTION_BLOCK = 64
GRID_CHUNK = 1 << 14


# --- 1. Gambler's ruin ---

def ruin_formula(k: float, l: float, d: int) -> float:
    """Probability that BM from the unit sphere hits radius e^{-l} before e^{k}."""
    check_dimension(d)
    if d == 2:
        return k / (k + l)
    return (1 - math.exp(-k)) / (math.exp(l) - math.exp(-k))


@dataclass(frozen=True)
class RuinCheck:
    d: int
    k: float
    l: float
    method: str
    trials: int
    hits: int
    p_hat: float
    p_formula: float
    stderr: Optional[float]

    @property
    def z_score(self) -> Optional[float]:
        if not self.stderr:
            return None
        return (self.p_hat - self.p_formula) / self.stderr

    def to_record(self) -> dict:
        return asdict(self)


def _ruin_by_spheres(inner: float, outer: float, eps: float, d: int, stream: RngStream) -> bool:
    """Walk-on-spheres run from e_1: True when it reaches the inner sphere first."""
    gen = stream.generator()
    x = np.zeros(d)
    x[0] = 1.0
    while True:
        directions = gen.standard_normal((DIRECTION_BLOCK, d))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        for u in directions:
            r = math.sqrt(float(x @ x))
            if r - inner <= eps:
                return True
            if outer - r <= eps:
                return False
            x = x + min(r - inner, outer - r) * u


def _ruin_by_grid(inner: float, outer: float, dt: float, d: int, stream: RngStream) -> bool:
    """Time-stepped Brownian run from e_1: True when it reaches the inner sphere first."""
    start = np.zeros(d)
    start[0] = 1.0
    for block in gaussian_blocks(start, dt, stream.generator(), GRID_CHUNK):
        r2 = np.einsum("ij,ij->i", block, block)
        hit_inner = np.flatnonzero(r2 <= inner ** 2)
        hit_outer = np.flatnonzero(r2 >= outer ** 2)
        if hit_inner.size or hit_outer.size:
            first_inner = hit_inner[0] if hit_inner.size else block.shape[0]
            first_outer = hit_outer[0] if hit_outer.size else block.shape[0]
            return bool(first_inner < first_outer)


def gamblers_ruin_check(
    k: float,
    l: float,
    d: int,
    trials: int,
    rng: RngStream,
    *,
    method: str = "spheres",
    eps: Optional[float] = None,
    dt: float = 1e-4,
    workers: int = 1,
) -> RuinCheck:
    """
    Monte Carlo probability that BM from e_1 reaches radius e^{-l} before
    radius e^{k}, next to its closed form.

    Args:
        k: outer log-radius, positive.
        l: inner log-radius magnitude, positive.
        d: 2 or 3.
        trials: independent paths.
        rng: stream of this (k, l) cell.
        method: "spheres" (walk on spheres stopped in an eps-shell) or
            "grid" (Euler steps of size dt).
        eps: shell width for the spheres method, default 1e-3 * min(e^{-l}, 1).
        dt: grid step for the grid method.
        workers: worker processes.

    Returns:
        RuinCheck.
    """
    check_dimension(d)
    if k <= 0 or l <= 0:
        raise ValueError(f"k and l must be positive, got k={k}, l={l}")
    if method not in RUIN_METHODS:
        raise ValueError(f"unknown method '{method}', expected one of {RUIN_METHODS}")
    inner, outer = math.exp(-l), math.exp(k)
    if method == "spheres":
        eps = 1e-3 * min(inner, 1.0) if eps is None else eps
        trial = partial(_ruin_by_spheres, inner, outer, eps, d)
    else:
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        trial = partial(_ruin_by_grid, inner, outer, dt, d)

    estimate = bernoulli_estimate(map_trials(trial, rng, trials, workers=workers, desc=f"ruin k={k:g} l={l:g}"), "inner hit")
    check = RuinCheck(d, k, l, method, trials, estimate.hits, estimate.p_hat, ruin_formula(k, l, d), estimate.stderr)
    logger.info(f"Gambler's ruin d={d} k={k:g} l={l:g}: p_hat={check.p_hat:.4f}, formula={check.p_formula:.4f}")
    return check


# --- 2. Beurling escape ---

@dataclass(frozen=True)
class BeurlingEstimate:
    x_dist: int
    r: float
    trials: int
    hits: int
    p_hat: float
    stderr: Optional[float]

    @property
    def bound_shape(self) -> float:
        """sqrt(|x| / e^r), the shape of the escape bound."""
        return math.sqrt(self.x_dist / math.exp(self.r))

    def to_record(self) -> dict:
        record = asdict(self)
        record["bound_shape"] = self.bound_shape
        return record


def _beurling_trial(x_dist: int, r: float, stream: RngStream) -> bool:
    """Whether the walk from (-x_dist, 0) leaves the ball before touching the ray."""
    ray_end = math.floor(math.exp(r))
    r2 = math.exp(r) ** 2
    start = np.array([-x_dist, 0], dtype=np.int64)
    if x_dist == 0:
        return False
    for block in iter_walk_chunks(start, stream.generator(), walk_chunk_size(r2)):
        on_ray = np.flatnonzero((block[:, 1] == 0) & (block[:, 0] >= 0) & (block[:, 0] <= ray_end))
        escaped = np.flatnonzero(np.einsum("ij,ij->i", block, block) >= r2)
        if on_ray.size or escaped.size:
            first_ray = on_ray[0] if on_ray.size else block.shape[0]
            first_escape = escaped[0] if escaped.size else block.shape[0]
            return bool(first_escape < first_ray)


def beurling_escape_estimate(d: int, x_dist: int, r: float, trials: int, rng: RngStream, *, workers: int = 1) -> BeurlingEstimate:
    """
    Probability that a planar walk from (-x_dist, 0) leaves the ball of
    radius e^r before touching the ray {(i, 0) : 0 <= i <= e^r}.
    """
    if d != 2:
        raise ValueError(f"the Beurling escape check is planar; d={d} is not supported")
    x_dist = int(x_dist)
    if x_dist < 0 or x_dist >= math.exp(r):
        raise ValueError(f"x_dist must lie in [0, e^r), got {x_dist}")
    outcomes = map_trials(partial(_beurling_trial, x_dist, r), rng, trials, workers=workers, desc=f"Beurling x={x_dist}")
    estimate = bernoulli_estimate(outcomes, f"escape from x_dist={x_dist}")
    logger.info(f"Beurling r={r:g} x_dist={x_dist}: p_hat={estimate.p_hat:.4g}")
    return BeurlingEstimate(x_dist, r, trials, estimate.hits, estimate.p_hat, estimate.stderr)


def beurling_slope_fit(rows: Sequence[BeurlingEstimate], *, bootstrap_reps: int = 1000, rng: Optional[RngLike] = None) -> FitResult:
    """Slope of log p_hat against log x_dist; the bound predicts 1/2."""
    points = [(math.log(row.x_dist), math.log(row.p_hat)) for row in rows if row.hits > 0 and row.x_dist > 0]
    return fit_exponent(points, bootstrap_reps, rng=rng)
