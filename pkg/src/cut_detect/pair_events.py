"""
Events on pairs of walks started from a common site: non-intersection and
the separation quality of the two endpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from src.cut_detect.cut_points import site_keys
from src.walk_core.lattice_walk import LatticePath

WELL_SEPARATED = 0.1


@dataclass(frozen=True)
class SeparationQuality:
    delta: float
    m: float

    @property
    def well_separated(self) -> bool:
        return self.delta >= WELL_SEPARATED


def nonintersection_occurred(p1: LatticePath, p2: LatticePath) -> bool:
    """
    True when the traces meet only at the shared start.

    Neither walk may come back to the start, since the other walk sits
    there at time 0.
    """
    if p1.d != p2.d or not np.array_equal(p1.start, p2.start):
        raise ValueError("both paths must start at the same site")
    keys1 = site_keys(p1.sites)
    keys2 = site_keys(p2.sites)
    origin = keys1[0]
    if np.any(keys1[1:] == origin) or np.any(keys2[1:] == origin):
        return False
    return set(keys1[1:].tolist()).isdisjoint(keys2[1:].tolist())


def distance_to_trace(point: np.ndarray, trace: np.ndarray) -> float:
    """Euclidean distance from ``point`` to the nearest site of ``trace``."""
    delta = trace.astype(float) - np.asarray(point, dtype=float)
    return float(np.sqrt(np.einsum("ij,ij->i", delta, delta).min()))


def separation_quality(p1: LatticePath, p2: LatticePath, m: float) -> SeparationQuality:
    """Delta_m = e^{-m} * min over i of dist(endpoint of p_i, trace of the other)."""
    if not nonintersection_occurred(p1, p2):
        raise ValueError("separation quality is only defined for non-intersecting pairs")
    gap = min(distance_to_trace(p1.end, p2.sites), distance_to_trace(p2.end, p1.sites))
    return SeparationQuality(math.exp(-m) * gap, m)
