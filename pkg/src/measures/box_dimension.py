"""
Box-counting dimension of rescaled cut-point sets.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from src.cut_detect.cut_points import CutPointSet
from src.estimators.fitting import FitResult, fit_exponent
from src.walk_core.rng_streams import RngLike

MIN_SIZES = 3
MIN_DECADES = 1.5


def check_box_sizes(box_sizes: Sequence[float]) -> np.ndarray:
    """Sorted box sizes: at least MIN_SIZES of them, positive, spanning MIN_DECADES decades."""
    sizes = np.asarray(sorted(float(size) for size in box_sizes))
    if sizes.shape[0] < MIN_SIZES:
        raise ValueError(f"need at least {MIN_SIZES} box sizes, got {sizes.shape[0]}")
    if sizes[0] <= 0:
        raise ValueError("box sizes must be positive")
    if math.log10(sizes[-1] / sizes[0]) < MIN_DECADES:
        raise ValueError(f"box sizes must span at least {MIN_DECADES} decades, got {math.log10(sizes[-1] / sizes[0]):.2f}")
    return sizes


def occupied_box_counts(points: np.ndarray, box_sizes: np.ndarray) -> np.ndarray:
    """Number of grid boxes of each size that contain at least one point."""
    return np.array([np.unique(np.floor(points / size).astype(np.int64), axis=0).shape[0] for size in box_sizes])


def _count_points(cutset: CutPointSet, n: float, sizes: np.ndarray) -> list[tuple[float, float]]:
    """(log 1/size, log count) for one cut set."""
    counts = occupied_box_counts(cutset.sites * math.exp(-n), sizes)
    return [(math.log(1 / size), math.log(count)) for size, count in zip(sizes, counts)]


def box_dimension(
    cutset: CutPointSet,
    n: float,
    box_sizes: Sequence[float],
    *,
    bootstrap_reps: int = 1000,
    rng: Optional[RngLike] = None,
) -> FitResult:
    """
    Slope of log(occupied boxes) against log(1 / size) for the cut set
    blown down by e^{-n} into the unit ball.
    """
    if not len(cutset):
        raise ValueError("box dimension of an empty cut set is undefined")
    return fit_exponent(_count_points(cutset, n, check_box_sizes(box_sizes)), bootstrap_reps, rng=rng)


def pooled_box_dimension(
    cutsets: Sequence[CutPointSet],
    n: float,
    box_sizes: Sequence[float],
    *,
    bootstrap_reps: int = 1000,
    rng: Optional[RngLike] = None,
) -> FitResult:
    """One regression through the box counts of every non-empty cut set."""
    sizes = check_box_sizes(box_sizes)
    points = [point for cutset in cutsets if len(cutset) for point in _count_points(cutset, n, sizes)]
    if not points:
        raise ValueError("every cut set is empty")
    return fit_exponent(points, bootstrap_reps, rng=rng)
