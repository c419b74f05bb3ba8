"""
Cut-ball surrogate measure of a Brownian path: a Riemann sum over grid
cells of e^{eta s} times the indicator that the ball of radius e^{-s}
around the cell centre is a cut ball.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from src.brownian_coupling.brownian_paths import BrownianPath
from src.brownian_coupling.continuous_cut_balls import DEFAULT_RHO, RESOLUTION_FACTOR, is_cut_ball_continuous
from src.brownian_coupling.errors import UnderResolvedError
from src.brownian_coupling.spatial_hash import SpatialHash
from src.measures.boxes import NiceBox, TestFunction
from src.measures.occupation import eta_exponent


def default_spacing(s: float) -> float:
    """Grid spacing a quarter of the inner radius e^{-s}."""
    return math.exp(-s) / 4


@dataclass(frozen=True, eq=False)
class GridMeasure:
    """Cell (i, j[, k]) covers origin + h * [i, i+1) x ...; its mass is value * h^d."""

    h: float
    s: float
    origin: tuple
    values: np.ndarray
    eta: float
    compensator: float = 1.0

    @property
    def d(self) -> int:
        return self.values.ndim

    @property
    def cell_volume(self) -> float:
        return self.h ** self.d

    def centers(self) -> np.ndarray:
        """Cell centres, one row per cell in C order of ``values``."""
        axes = [self.origin[i] + (np.arange(self.values.shape[i]) + 0.5) * self.h for i in range(self.d)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.d)

    @property
    def total_mass(self) -> float:
        return math.fsum(self.values.ravel().tolist()) * self.cell_volume

    def mass_in(self, box: NiceBox) -> float:
        """Mass of the cells whose centres fall in ``box``."""
        inside = box.contains(self.centers())
        return math.fsum(self.values.ravel()[inside].tolist()) * self.cell_volume

    def integrate(self, g: TestFunction) -> float:
        """Sum of g over occupied cell centres, weighted by value and cell volume."""
        flat = self.values.ravel()
        occupied = np.flatnonzero(flat)
        if not occupied.size:
            return 0.0
        return math.fsum((g(self.centers()[occupied]) * flat[occupied]).tolist()) * self.cell_volume

    def sidecar(self) -> dict:
        """Grid metadata stored next to the array."""
        return {
            "h": self.h,
            "s": self.s,
            "origin": list(self.origin),
            "eta": self.eta,
            "compensator": self.compensator,
            "shape": list(self.values.shape),
        }

    def write(self, stem: Union[str, Path]) -> tuple[Path, Path]:
        """Dense float32 ``<stem>.npy`` plus a ``<stem>.json`` sidecar."""
        stem = Path(stem)
        stem.parent.mkdir(parents=True, exist_ok=True)
        array_path, sidecar_path = stem.with_suffix(".npy"), stem.with_suffix(".json")
        np.save(array_path, self.values.astype(np.float32))
        sidecar_path.write_text(json.dumps(self.sidecar(), sort_keys=True, indent=2), encoding="utf-8")
        return array_path, sidecar_path


def _grid_frame(d: int, h: float, region: Optional[NiceBox]) -> tuple[np.ndarray, tuple]:
    """Lower corner and cell count per axis of the grid over the unit ball or a box."""
    if region is None:
        lower, span = np.full(d, -1.0), 2.0
    else:
        if region.d != d:
            raise ValueError("region and path have different dimensions")
        lower, span = region.lower, region.side
    cells = max(1, math.ceil(span / h - 1e-9))
    return lower, (cells,) * d


def _geometry_ok(centers: np.ndarray, inner_radius: float) -> np.ndarray:
    """Cells whose inner ball avoids 0 and stays inside the unit ball."""
    norms = np.linalg.norm(centers, axis=1)
    return (norms > inner_radius) & (norms + inner_radius < 1)


def cutball_measure(
    bm: BrownianPath,
    s: float,
    h: Optional[float] = None,
    rho: float = DEFAULT_RHO,
    *,
    compensator: float = 1.0,
    eta: Optional[float] = None,
    region: Optional[NiceBox] = None,
) -> GridMeasure:
    """
    Grid measure of cut balls at scale s for a path in unit-ball coordinates.

    Only cells whose inner ball the path actually reaches are tested;
    cells whose inner ball contains the origin or leaves the unit ball are 0.

    Args:
        bm: Brownian path from 0 stopped on leaving the unit ball.
        s: scale, inner radius e^{-s}.
        h: grid spacing, default e^{-s}/4, at most e^{-s}/2.
        rho: disjointness margin of the cut-ball test.
        compensator: constant factor on every cell value.
        eta: exponent of the e^{eta s} weight, defaults to xi + d - 2.
        region: restrict the grid to this box; the whole [-1, 1]^d otherwise.

    Returns:
        GridMeasure.

    Raises:
        UnderResolvedError: h above e^{-s}/2, or dt too coarse for scale s.
    """
    inner_radius = math.exp(-s)
    h = default_spacing(s) if h is None else float(h)
    if not 0 < h <= inner_radius / 2:
        raise UnderResolvedError(f"grid spacing h={h:.3g} must lie in (0, e^(-s)/2 = {inner_radius / 2:.3g}]")
    if bm.dt > RESOLUTION_FACTOR * inner_radius ** 2:
        raise UnderResolvedError(f"dt={bm.dt:.3g} too coarse for cut balls at scale s={s:g}")
    eta = eta_exponent(bm.d) if eta is None else eta

    lower, shape = _grid_frame(bm.d, h, region)
    values = np.zeros(shape)
    frame = GridMeasure(h, s, tuple(float(c) for c in lower), values, eta, compensator)
    centers = frame.centers()

    index = SpatialHash(inner_radius)
    index.insert(bm.samples)
    queries, stored = index.query_candidates(centers)
    delta = centers[queries] - bm.samples[stored]
    reached = np.zeros(centers.shape[0], dtype=bool)
    reached[queries[np.einsum("ij,ij->i", delta, delta) <= inner_radius ** 2]] = True
    candidates = np.flatnonzero(reached & _geometry_ok(centers, inner_radius))

    weight = compensator * math.exp(eta * s)
    flat = values.reshape(-1)
    for cell in candidates:
        if is_cut_ball_continuous(bm, centers[cell], s, rho).occurred:
            flat[cell] = weight
    return GridMeasure(h, s, frame.origin, values, eta, compensator)

