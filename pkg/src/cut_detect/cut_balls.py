"""
Discrete cut balls.

The walk from 0 stopped at radius e^n is split at the first entry into and
the last exit from the closed ball of radius e^{3n/4} around z_n. The ball
is a cut ball when the two outer legs have disjoint traces and the middle
leg stays inside the envelope of radius e^{5n/6}.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from src.cut_detect.cut_points import site_keys
from src.walk_core.lattice_walk import LatticePath, scaled_lattice_point


@dataclass(frozen=True)
class CutBallEvent:
    z: tuple
    n: float
    inner_log_radius: float
    envelope_log_radius: float
    occurred: bool
    a1: Optional[int] = None
    a2: Optional[int] = None

    def to_record(self) -> dict:
        record = asdict(self)
        record["z"] = list(self.z)
        return record


def check_inner_ball(center: np.ndarray, inner_radius: float, domain_radius: float) -> None:
    """The inner ball must avoid the origin (closure) and sit inside the domain ball."""
    distance = float(np.linalg.norm(center))
    if distance <= inner_radius:
        raise ValueError("the closed inner ball contains the origin")
    if distance + inner_radius >= domain_radius:
        raise ValueError("the inner ball is not inside the domain ball")


def first_last_in_closed_ball(points: np.ndarray, center: np.ndarray, radius: float) -> Optional[tuple[int, int]]:
    """Indices of the first and last points in the closed ball, if any."""
    delta = np.asarray(points, dtype=float) - center
    inside = np.flatnonzero(np.einsum("ij,ij->i", delta, delta) <= radius ** 2)
    if not inside.size:
        return None
    return int(inside[0]), int(inside[-1])


def traces_disjoint(first: np.ndarray, second: np.ndarray) -> bool:
    """Hash-set test that two lattice traces share no site."""
    small, large = (first, second) if first.shape[0] <= second.shape[0] else (second, first)
    return set(site_keys(small).tolist()).isdisjoint(site_keys(large).tolist())


def is_cut_ball_discrete(
    path: LatticePath,
    z: Sequence[float],
    n: float,
    *,
    inner_log_radius: Optional[float] = None,
    envelope_log_radius: Optional[float] = None,
) -> CutBallEvent:
    """
    Test whether B_{3n/4}(z_n) is a cut ball for ``path``.

    Args:
        path: walk from 0 stopped on leaving the ball of radius e^n.
        z: point of the unit ball; the centre is floor(e^n z).
        n: scale.
        inner_log_radius: defaults to 3n/4.
        envelope_log_radius: defaults to 5n/6.

    Returns:
        CutBallEvent with the decomposition indices when the ball is hit.
    """
    inner = 3 * n / 4 if inner_log_radius is None else inner_log_radius
    envelope = 5 * n / 6 if envelope_log_radius is None else envelope_log_radius
    center = scaled_lattice_point(z, n)
    if center.shape[0] != path.d:
        raise ValueError("z and path have different dimensions")
    check_inner_ball(center.astype(float), math.exp(inner), math.exp(n))

    z = tuple(float(c) for c in z)
    span = first_last_in_closed_ball(path.sites, center, math.exp(inner))
    if span is None:
        return CutBallEvent(z, n, inner, envelope, False)
    a1, a2 = span
    middle = path.sites[a1: a2 + 1].astype(float) - center
    inside_envelope = bool(np.all(np.einsum("ij,ij->i", middle, middle) < math.exp(envelope) ** 2))
    occurred = inside_envelope and traces_disjoint(path.sites[: a1 + 1], path.sites[a2:])
    return CutBallEvent(z, n, inner, envelope, occurred, a1, a2)
