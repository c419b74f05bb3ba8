"""
Rescaled cut-point occupation measure of a walk: a point mass
normalization * e^{-n(2 - xi)} at every cut point, placed at e^{-n} x.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from src.cut_detect.cut_points import cut_points_fast
from src.measures.boxes import NiceBox, TestFunction
from src.walk_core.lattice_walk import LatticePath, check_dimension
from src.walk_core.path_io import AXIS_NAMES

# xi is exact in the plane; the 3-D value is a numerical estimate
XI_BY_DIMENSION = {2: 1.25, 3: 0.58}


def default_xi(d: int) -> float:
    """Intersection exponent used when none is given."""
    check_dimension(d)
    return XI_BY_DIMENSION[d]


def eta_exponent(d: int, xi: Optional[float] = None) -> float:
    """eta = xi + d - 2."""
    return (default_xi(d) if xi is None else xi) + d - 2


def cut_set_dimension(d: int, xi: Optional[float] = None) -> float:
    """delta = d - eta."""
    return d - eta_exponent(d, xi)


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    n: float
    normalization: float
    xi: float
    sites: np.ndarray
    masses: np.ndarray

    @property
    def d(self) -> int:
        return self.sites.shape[1]

    def __len__(self) -> int:
        return int(self.masses.shape[0])

    @property
    def total_mass(self) -> float:
        return math.fsum(self.masses.tolist())

    @property
    def rescaled_sites(self) -> np.ndarray:
        return self.sites * math.exp(-self.n)

    def mass_in(self, box: NiceBox) -> float:
        """Total mass of atoms in ``box``."""
        if not len(self):
            return 0.0
        return math.fsum(self.masses[box.contains(self.rescaled_sites)].tolist())

    def integrate(self, g: TestFunction) -> float:
        """Sum of g over the atoms, weighted by mass."""
        if not len(self):
            return 0.0
        return math.fsum((g(self.rescaled_sites) * self.masses).tolist())

    def to_json(self) -> dict:
        """Scale, constants and atoms as plain JSON."""
        atoms = [
            {**{axis: int(c) for axis, c in zip(AXIS_NAMES, site)}, "mass": float(mass)}
            for site, mass in zip(self.sites.tolist(), self.masses.tolist())
        ]
        return {"n": self.n, "normalization": self.normalization, "xi": self.xi, "atoms": atoms}

    def write_json(self, file_path: Union[str, Path]) -> Path:
        """Write the measure as JSON."""
        file_path = Path(file_path)
        file_path.parent.mkdir(parents=True, exist_ok=True)
        file_path.write_text(json.dumps(self.to_json(), sort_keys=True, indent=2), encoding="utf-8")
        return file_path


def occupation_measure(path: LatticePath, n: float, normalization: float = 1.0, *, xi: Optional[float] = None) -> AtomicMeasure:
    """
    Occupation measure of the cut points of ``path``.

    Args:
        path: walk from 0 stopped at radius e^n.
        n: scale.
        normalization: constant factor on every mass, positive.
        xi: intersection exponent, defaults to 5/4 (d=2) or 0.58 (d=3).

    Returns:
        AtomicMeasure, empty when the path has no cut points.
    """
    if normalization <= 0:
        raise ValueError(f"normalization must be positive, got {normalization}")
    xi = default_xi(path.d) if xi is None else float(xi)
    cut = cut_points_fast(path)
    mass = normalization * math.exp(-n * (2 - xi))
    return AtomicMeasure(n, float(normalization), xi, cut.sites, np.full(len(cut), mass))
