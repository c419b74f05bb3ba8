"""
Log-scale regression with case-resampling bootstrap, and binomial
proportion estimates with their standard errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from loguru import logger

from src.walk_core.rng_streams import RngLike, RngStream, as_generator

DEFAULT_BOOTSTRAP_REPS = 1000


# --- 1. Exponent fits ---

@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    ci_low: float
    ci_high: float
    n_points: int
    r_squared: float

    def contains(self, value: float) -> bool:
        """Whether ``value`` lies in the confidence interval."""
        return self.ci_low <= value <= self.ci_high

    def to_record(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "ci": [self.ci_low, self.ci_high],
            "r2": self.r_squared,
            "n_points": self.n_points,
        }


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Least-squares slope and intercept."""
    x_mean, y_mean = x.mean(), y.mean()
    sxx = float(((x - x_mean) ** 2).sum())
    slope = float(((x - x_mean) * (y - y_mean)).sum()) / sxx
    return slope, float(y_mean - slope * x_mean)


def fit_exponent(
    points: Sequence[tuple[float, float]],
    bootstrap_reps: int = DEFAULT_BOOTSTRAP_REPS,
    *,
    rng: Optional[RngLike] = None,
    level: float = 0.95,
) -> FitResult:
    """
    Least-squares line through (x, log p) points with a percentile bootstrap CI.

    Points are sorted first, so the result does not depend on input order.

    Args:
        points: at least three finite (x, y) pairs, x not all equal.
        bootstrap_reps: number of case resamples.
        rng: bootstrap stream, defaults to RngStream(0).
        level: confidence level of the interval.

    Returns:
        FitResult with ci_low <= slope <= ci_high.
    """
    data = np.asarray(sorted((float(x), float(y)) for x, y in points), dtype=float)
    if data.shape[0] < 3:
        raise ValueError(f"need at least 3 points for a fit, got {data.shape[0]}")
    if not np.all(np.isfinite(data)):
        raise ValueError("fit points must be finite")
    x, y = data[:, 0], data[:, 1]
    if np.all(x == x[0]):
        raise ValueError("degenerate fit: all x values are equal")

    slope, intercept = _ols(x, y)
    residual = y - (slope * x + intercept)
    total = float(((y - y.mean()) ** 2).sum())
    r_squared = 1.0 if total == 0 else 1.0 - float((residual ** 2).sum()) / total

    gen = as_generator(rng if rng is not None else RngStream(0))
    picks = gen.integers(0, x.shape[0], size=(bootstrap_reps, x.shape[0]))
    bx, by = x[picks], y[picks]
    bx_centered = bx - bx.mean(axis=1, keepdims=True)
    sxx = (bx_centered ** 2).sum(axis=1)
    usable = sxx > 0
    if usable.any():
        slopes = (bx_centered * (by - by.mean(axis=1, keepdims=True))).sum(axis=1)[usable] / sxx[usable]
        tail = (1 - level) / 2
        low, high = np.quantile(slopes, [tail, 1 - tail])
    else:
        low = high = slope
    return FitResult(
        slope=slope,
        intercept=intercept,
        ci_low=min(float(low), slope),
        ci_high=max(float(high), slope),
        n_points=int(x.shape[0]),
        r_squared=r_squared,
    )


# --- 2. Proportions ---

@dataclass(frozen=True)
class BernoulliEstimate:
    hits: int
    trials: int
    p_hat: float
    stderr: Optional[float]
    flag: Optional[str] = None

    def to_record(self) -> dict:
        return {"hits": self.hits, "trials": self.trials, "p_hat": self.p_hat, "stderr": self.stderr, "flag": self.flag}


def binomial_stderr(hits: int, trials: int) -> float:
    """sqrt(p(1 - p) / trials)."""
    p = hits / trials
    return math.sqrt(p * (1 - p) / trials)


def bernoulli_estimate(outcomes: Sequence[bool], label: str = "event") -> BernoulliEstimate:
    """Frequency of True outcomes with its binomial standard error."""
    outcomes = np.asarray(outcomes, dtype=bool)
    trials = int(outcomes.shape[0])
    if trials == 0:
        raise ValueError("no trials to estimate from")
    hits = int(outcomes.sum())
    if hits == 0:
        logger.warning(f"No hits for {label} in {trials} trials; standard error undefined.")
        return BernoulliEstimate(0, trials, 0.0, None, "zero_hits")
    return BernoulliEstimate(hits, trials, hits / trials, binomial_stderr(hits, trials))


def bootstrap_stderr(values: Sequence[float], reps: int = DEFAULT_BOOTSTRAP_REPS, rng: Optional[RngLike] = None) -> float:
    """Standard deviation of resampled means."""
    values = np.asarray(values, dtype=float)
    gen = as_generator(rng if rng is not None else RngStream(0))
    means = values[gen.integers(0, values.shape[0], size=(reps, values.shape[0]))].mean(axis=1)
    return float(means.std(ddof=1))


def pooled_stderr(*stderrs: Optional[float]) -> float:
    """Standard error of a difference of independent estimates."""
    return math.sqrt(sum((s or 0.0) ** 2 for s in stderrs))
