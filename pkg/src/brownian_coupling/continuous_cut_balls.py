"""
Cut balls for sampled Brownian paths.

Inside a domain ball of radius e^L the inner ball has radius e^{L-s} around
e^L z and the envelope radius e^{L-2s/3}. L = 0 is the unit-disk picture;
L = n is the same event blown up by e^n, which is what the coupled random
walk is compared against.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from src.brownian_coupling.brownian_paths import BrownianPath
from src.brownian_coupling.errors import UnderResolvedError
from src.brownian_coupling.spatial_hash import polylines_separated
from src.cut_detect.cut_balls import check_inner_ball, first_last_in_closed_ball

DEFAULT_RHO = 0.05
# dt must stay below inner_radius**2 * RESOLUTION_FACTOR
RESOLUTION_FACTOR = 0.04


def default_dt(s: float) -> float:
    """Time step fine enough for an inner ball of radius e^{-s}."""
    return min(1e-4, math.exp(-2 * s) / 100)


@dataclass(frozen=True)
class ContinuousCutBallEvent:
    z: tuple
    s: float
    inner_log_radius: float
    envelope_log_radius: float
    occurred: bool
    rho: float
    hit: bool = False

    def to_record(self) -> dict:
        record = asdict(self)
        record["z"] = list(self.z)
        return record


def is_cut_ball_continuous(
    path: BrownianPath,
    z: Sequence[float],
    s: float,
    rho: float = DEFAULT_RHO,
    *,
    domain_log_radius: float = 0.0,
) -> ContinuousCutBallEvent:
    """
    Test whether D_{-s}(z) is a cut ball for the sampled path.

    The path is split at its first and last samples in the closed inner
    ball. The event holds when both exist, the two outer legs stay more
    than rho * e^{-s} apart and the middle leg stays inside the envelope.

    Args:
        path: Brownian path from the origin stopped on leaving the domain ball.
        z: point of the unit ball (centre before blow-up).
        s: inner log-scale, inner radius e^{-s} before blow-up.
        rho: disjointness margin as a fraction of the inner radius.
        domain_log_radius: blow-up exponent L.

    Returns:
        ContinuousCutBallEvent.
    """
    if not 0 < rho < 0.25:
        raise ValueError(f"rho must lie in (0, 1/4), got {rho}")
    scale = math.exp(domain_log_radius)
    inner_radius = scale * math.exp(-s)
    envelope_radius = scale * math.exp(-2 * s / 3)
    if path.dt > RESOLUTION_FACTOR * inner_radius ** 2:
        raise UnderResolvedError(
            f"dt={path.dt:.3g} too coarse for inner radius {inner_radius:.3g} "
            f"(limit {RESOLUTION_FACTOR * inner_radius ** 2:.3g})"
        )
    center = scale * np.asarray(z, dtype=float)
    if center.shape[0] != path.d:
        raise ValueError("z and path have different dimensions")
    check_inner_ball(center, inner_radius, scale)

    inner_log = domain_log_radius - s
    envelope_log = domain_log_radius - 2 * s / 3
    z = tuple(float(c) for c in z)
    span = first_last_in_closed_ball(path.samples, center, inner_radius)
    if span is None:
        return ContinuousCutBallEvent(z, s, inner_log, envelope_log, False, rho)
    a1, a2 = span
    middle = path.samples[a1: a2 + 1] - center
    if not np.all(np.einsum("ij,ij->i", middle, middle) < envelope_radius ** 2):
        return ContinuousCutBallEvent(z, s, inner_log, envelope_log, False, rho, hit=True)
    separated = polylines_separated(path.samples[: a1 + 1], path.samples[a2:], rho * inner_radius)
    return ContinuousCutBallEvent(z, s, inner_log, envelope_log, separated, rho, hit=True)
