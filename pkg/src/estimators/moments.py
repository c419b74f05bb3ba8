"""
Moments of the number of cut points of a walk stopped at lattice radius R.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial
from typing import Optional

import numpy as np
import pandas as pd
from loguru import logger

from src.cut_detect.cut_points import cut_points_fast
from src.estimators.trial_pool import map_trials
from src.walk_core.lattice_walk import BallSpec, check_dimension, sample_srw_until_exit
from src.walk_core.rng_streams import RngStream

RECOMMENDED_RADIUS = 4
MOMENT_ORDERS = (1, 2)


@dataclass(frozen=True)
class MomentRow:
    R: float
    k: int
    estimate: float
    stderr: float
    trials: int

    def to_record(self) -> dict:
        return {"R": self.R, "k": self.k, "estimate": self.estimate, "stderr": self.stderr, "trials": self.trials}


@dataclass
class MomentTable:
    rows: list = field(default_factory=list)

    def extend(self, rows) -> None:
        self.rows.extend(rows)

    def lookup(self, R: float, k: int) -> Optional[MomentRow]:
        """Row of order k at radius R, if any."""
        return next((row for row in self.rows if row.R == R and row.k == k), None)

    def second_moment_ratio(self, R: float) -> Optional[float]:
        """E[M^2] / E[M]^2 at radius R."""
        first, second = self.lookup(R, 1), self.lookup(R, 2)
        if first is None or second is None or first.estimate == 0:
            return None
        return second.estimate / first.estimate ** 2

    def to_frame(self) -> pd.DataFrame:
        """Rows as a DataFrame."""
        return pd.DataFrame([row.to_record() for row in self.rows])


def _cut_count_trial(d: int, R: float, stream: RngStream) -> int:
    """Cut points of one walk stopped at lattice radius R."""
    origin = (0,) * d
    path = sample_srw_until_exit(origin, BallSpec.around(origin, R), stream)
    return len(cut_points_fast(path))


def cut_count_samples(R: float, trials: int, rng: RngStream, *, d: int = 2, workers: int = 1) -> np.ndarray:
    """Cut-point counts of ``trials`` independent walks from 0 stopped at radius R."""
    check_dimension(d)
    if R < 1:
        raise ValueError(f"radius must be at least 1, got {R}")
    if R < RECOMMENDED_RADIUS:
        logger.warning(f"Radius {R} is below {RECOMMENDED_RADIUS}; cut-point counts are mostly zero.")
    counts = map_trials(partial(_cut_count_trial, d, float(R)), rng, trials, workers=workers, desc=f"cut counts R={R:g}")
    return np.asarray(counts, dtype=np.int64)


def moment_rows(R: float, counts: np.ndarray, orders=MOMENT_ORDERS) -> list[MomentRow]:
    """Moment estimates of the given orders from one sample of counts."""
    rows = []
    for k in orders:
        if k not in MOMENT_ORDERS:
            raise ValueError(f"moment order must be 1 or 2, got {k}")
        powers = counts.astype(float) ** k
        stderr = float(powers.std(ddof=1)) / math.sqrt(powers.shape[0]) if powers.shape[0] > 1 else 0.0
        rows.append(MomentRow(R, k, float(powers.mean()), stderr, int(powers.shape[0])))
    return rows


def estimate_cut_count_moments(R: float, k: int, trials: int, rng: RngStream, *, d: int = 2, workers: int = 1) -> MomentRow:
    """Empirical E[M^k] for the number M of cut points of a walk stopped at radius R."""
    if k not in MOMENT_ORDERS:
        raise ValueError(f"moment order must be 1 or 2, got {k}")
    row = moment_rows(R, cut_count_samples(R, trials, rng, d=d, workers=workers), (k,))[0]
    logger.info(f"Cut-point moment d={d} R={R:g} k={k}: {row.estimate:.4g} +/- {row.stderr:.2g}")
    return row
