"""
One- and two-point cut-point functions, cut-ball frequencies and the cut-ball / cut-point transfer
ratio, all scored on walks from 0 stopped at radius e^n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from loguru import logger

from src.brownian_coupling.brownian_paths import sample_bm_until_exit
from src.brownian_coupling.continuous_cut_balls import DEFAULT_RHO, RESOLUTION_FACTOR, default_dt, is_cut_ball_continuous
from src.brownian_coupling.errors import UnderResolvedError
from src.cut_detect.cut_balls import is_cut_ball_discrete
from src.cut_detect.cut_points import is_cut_point
from src.estimators.fitting import FitResult, bernoulli_estimate, fit_exponent
from src.estimators.trial_pool import map_trials
from src.measures.boxes import NiceBox
from src.walk_core.lattice_walk import check_bulk_point, check_dimension, sample_exit_path, scaled_lattice_point
from src.walk_core.path_io import AXIS_NAMES
from src.walk_core.rng_streams import RngLike, RngStream

SHAPE_REGION = 0.5


def _as_point(z: Sequence[float]) -> tuple:
    """Point as a tuple of floats in a supported dimension."""
    point = tuple(float(c) for c in z)
    check_dimension(len(point))
    return point


# --- 1. Tables ---

@dataclass(frozen=True)
class PointFunctionRow:
    z: tuple
    n: float
    trials: int
    hits: int
    p_hat: float
    stderr: Optional[float]
    w: Optional[tuple] = None
    flag: Optional[str] = None

    @property
    def separation(self) -> Optional[float]:
        if self.w is None:
            return None
        return math.dist(self.z, self.w)

    def green_estimate(self, eta: float, normalization: float = 1.0) -> float:
        """normalization * e^{eta n} * p_hat, with e^{2 eta n} for two-point rows."""
        order = 1 if self.w is None else 2
        return normalization * math.exp(order * eta * self.n) * self.p_hat

    def to_record(self) -> dict:
        record = {f"z_{axis}": c for axis, c in zip(AXIS_NAMES, self.z)}
        if self.w is not None:
            record.update({f"w_{axis}": c for axis, c in zip(AXIS_NAMES, self.w)})
            record["separation"] = self.separation
        record.update(
            n=self.n, trials=self.trials, hits=self.hits, p_hat=self.p_hat, stderr=self.stderr, flag=self.flag
        )
        return record


@dataclass
class PointFunctionTable:
    rows: list = field(default_factory=list)

    def append(self, row: PointFunctionRow) -> None:
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def to_frame(self) -> pd.DataFrame:
        """Rows as a DataFrame."""
        return pd.DataFrame([row.to_record() for row in self.rows])


# --- 2. Trials ---

def _one_point_trial(z: tuple, n: float, stream: RngStream) -> bool:
    """Whether floor(e^n z) is a cut point of one walk."""
    path = sample_exit_path(len(z), n, stream)
    return is_cut_point(path, scaled_lattice_point(z, n))


def _two_point_trial(z: tuple, w: tuple, n: float, stream: RngStream) -> bool:
    """Whether floor(e^n z) and floor(e^n w) are both cut points of one walk."""
    path = sample_exit_path(len(z), n, stream)
    return is_cut_point(path, scaled_lattice_point(z, n)) and is_cut_point(path, scaled_lattice_point(w, n))


def _transfer_trial(z: tuple, n: float, stream: RngStream) -> tuple[bool, bool]:
    """Cut-point and cut-ball outcomes at z on the same walk."""
    path = sample_exit_path(len(z), n, stream)
    point = is_cut_point(path, scaled_lattice_point(z, n))
    return point, is_cut_ball_discrete(path, z, n).occurred


def _row(outcomes: list, z: tuple, n: float, label: str, w: Optional[tuple] = None) -> PointFunctionRow:
    """PointFunctionRow from boolean outcomes."""
    estimate = bernoulli_estimate(outcomes, label)
    return PointFunctionRow(z, n, estimate.trials, estimate.hits, estimate.p_hat, estimate.stderr, w, estimate.flag)


# --- 3. Estimators ---

def estimate_one_point(
    z: Sequence[float], n: float, trials: int, rng: RngStream, *, workers: int = 1, strict: bool = True
) -> PointFunctionRow:
    """
    Frequency of floor(e^n z) being a cut point of the walk from 0 stopped
    at radius e^n.

    Args:
        z: nonzero point of the open unit ball at distance e^{-n/6} or more
            from 0 and from the unit sphere.
        n: scale.
        trials: walks to sample.
        rng: stream of this (z, n) cell.
        workers: worker processes.
        strict: reject z outside the bulk; False only warns.

    Returns:
        PointFunctionRow.
    """
    z = _as_point(z)
    check_bulk_point(z, n, strict=strict)
    outcomes = map_trials(partial(_one_point_trial, z, n), rng, trials, workers=workers, desc=f"one-point n={n:g}")
    row = _row(outcomes, z, n, f"one-point at z={z}, n={n:g}")
    logger.info(f"One-point z={z} n={n:g}: p_hat={row.p_hat:.4g} ({row.hits}/{row.trials})")
    return row


def estimate_two_point(
    z: Sequence[float],
    w: Sequence[float],
    n: float,
    trials: int,
    rng: RngStream,
    *,
    box: Optional[NiceBox] = None,
    workers: int = 1,
    strict: bool = True,
) -> PointFunctionRow:
    """
    Joint frequency of floor(e^n z) and floor(e^n w) both being cut points of one walk.

    With ``strict`` both points must be in the bulk and |z - w| at least
    e^{-n/6}; otherwise shortfalls are only logged.
    """
    z, w = _as_point(z), _as_point(w)
    if len(z) != len(w):
        raise ValueError("z and w have different dimensions")
    if math.dist(z, w) == 0:
        raise ValueError("z and w must be distinct points")
    check_bulk_point(z, n, strict=strict)
    check_bulk_point(w, n, strict=strict)
    if math.dist(z, w) < math.exp(-n / 6):
        message = f"|z - w| = {math.dist(z, w):.3g} is below e^(-n/6) = {math.exp(-n / 6):.3g}"
        if strict:
            raise ValueError(message)
        logger.warning(f"{message}.")
    if box is not None and not (box.contains(z) and box.contains(w)):
        raise ValueError(f"z and w must both lie in the box {box}")
    outcomes = map_trials(partial(_two_point_trial, z, w, n), rng, trials, workers=workers, desc=f"two-point n={n:g}")
    row = _row(outcomes, z, n, f"two-point at z={z}, w={w}, n={n:g}", w)
    logger.info(f"Two-point |z-w|={row.separation:.3g} n={n:g}: p_hat={row.p_hat:.4g}")
    return row


def boundary_shape_fit(rows: Sequence[PointFunctionRow], *, bootstrap_reps: int = 1000, rng: Optional[RngLike] = None) -> FitResult:
    """
    Slope of log p_hat against log dist(z, unit sphere) over rows with
    |z| >= 1/2 and at least one hit.
    """
    points = [
        (math.log(1 - math.hypot(*row.z)), math.log(row.p_hat))
        for row in rows
        if row.w is None and row.hits > 0 and math.hypot(*row.z) >= SHAPE_REGION
    ]
    return fit_exponent(points, bootstrap_reps, rng=rng)


def separation_decay_fit(rows: Sequence[PointFunctionRow], *, bootstrap_reps: int = 1000, rng: Optional[RngLike] = None) -> FitResult:
    """Slope of log p_hat against log |z - w| over two-point rows with hits."""
    points = [(math.log(row.separation), math.log(row.p_hat)) for row in rows if row.w is not None and row.hits > 0]
    return fit_exponent(points, bootstrap_reps, rng=rng)


# --- 4. Transfer ratio ---

@dataclass(frozen=True)
class TransferRatio:
    n: float
    z: tuple
    f_hat: Optional[float]
    stderr: Optional[float]
    trials: int
    cut_point_hits: int
    cut_ball_hits: int
    flag: Optional[str] = None

    def to_record(self) -> dict:
        record = {f"z_{axis}": c for axis, c in zip(AXIS_NAMES, self.z)}
        record.update(
            n=self.n,
            f_hat=self.f_hat,
            stderr=self.stderr,
            trials=self.trials,
            cut_point_hits=self.cut_point_hits,
            cut_ball_hits=self.cut_ball_hits,
            flag=self.flag,
        )
        return record


def estimate_transfer_ratio(
    z: Sequence[float], n: float, trials: int, rng: RngStream, *, workers: int = 1, strict: bool = True
) -> TransferRatio:
    """
    P(cut ball at z) / P(cut point at z), both events scored on the same walks.

    The standard error is the delta-method one for a ratio of correlated
    proportions.
    """
    z = _as_point(z)
    check_bulk_point(z, n, strict=strict)
    outcomes = np.asarray(
        map_trials(partial(_transfer_trial, z, n), rng, trials, workers=workers, desc=f"transfer n={n:g}"), dtype=bool
    ).reshape(-1, 2)
    point, ball = outcomes[:, 0], outcomes[:, 1]
    hits_point, hits_ball = int(point.sum()), int(ball.sum())
    if hits_point == 0:
        logger.warning(f"No cut point at z={z}, n={n:g} in {trials} trials; transfer ratio undefined.")
        return TransferRatio(n, z, None, None, trials, 0, hits_ball, "zero_denominator")

    p_point, p_ball = hits_point / trials, hits_ball / trials
    joint = float((point & ball).mean())
    f_hat = p_ball / p_point
    var_point = p_point * (1 - p_point) / trials
    var_ball = p_ball * (1 - p_ball) / trials
    covariance = (joint - p_point * p_ball) / trials
    variance = (var_ball - 2 * f_hat * covariance + f_hat ** 2 * var_point) / p_point ** 2
    stderr = math.sqrt(max(variance, 0.0))
    logger.info(f"Transfer ratio z={z} n={n:g}: f_hat={f_hat:.4g} +/- {stderr:.2g}")
    return TransferRatio(n, z, f_hat, stderr, trials, hits_point, hits_ball)


# --- 5. Cut-ball frequencies ---

def _discrete_cut_ball_trial(z: tuple, n: float, stream: RngStream) -> bool:
    """Discrete cut-ball outcome at z on one walk."""
    return is_cut_ball_discrete(sample_exit_path(len(z), n, stream), z, n).occurred


def _continuous_cut_ball_trial(z: tuple, s: float, dt: float, rho: float, stream: RngStream) -> bool:
    """Continuous cut-ball outcome at z on one Brownian path in the unit ball."""
    bm = sample_bm_until_exit(np.zeros(len(z)), 0.0, dt, stream)
    return is_cut_ball_continuous(bm, z, s, rho).occurred


def estimate_cut_ball(
    z: Sequence[float], n: float, trials: int, rng: RngStream, *, workers: int = 1, strict: bool = True
) -> PointFunctionRow:
    """Frequency of the discrete cut-ball event at z for walks stopped at radius e^n."""
    z = _as_point(z)
    check_bulk_point(z, n, strict=strict)
    outcomes = map_trials(partial(_discrete_cut_ball_trial, z, n), rng, trials, workers=workers, desc=f"cut ball n={n:g}")
    row = _row(outcomes, z, n, f"discrete cut ball at z={z}, n={n:g}")
    logger.info(f"Discrete cut ball z={z} n={n:g}: p_hat={row.p_hat:.4g}")
    return row


def estimate_cut_ball_continuous(
    z: Sequence[float],
    s: float,
    trials: int,
    rng: RngStream,
    *,
    dt: Optional[float] = None,
    rho: float = DEFAULT_RHO,
    workers: int = 1,
) -> PointFunctionRow:
    """Frequency of the Brownian cut-ball event at z, scale s, for BM stopped on the unit sphere."""
    z = _as_point(z)
    dt = default_dt(s) if dt is None else dt
    if dt > RESOLUTION_FACTOR * math.exp(-2 * s):
        raise UnderResolvedError(f"dt={dt:.3g} too coarse for cut balls at scale s={s:g}")
    trial = partial(_continuous_cut_ball_trial, z, s, dt, rho)
    row = _row(map_trials(trial, rng, trials, workers=workers, desc=f"BM cut ball s={s:g}"), z, s, f"continuous cut ball at z={z}, s={s:g}")
    logger.info(f"Continuous cut ball z={z} s={s:g}: p_hat={row.p_hat:.4g}")
    return row
