"""
Dyadic boxes of the unit ball and bounded test functions on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Sequence

import numpy as np

from src.walk_core.lattice_walk import check_dimension


@dataclass(frozen=True)
class NiceBox:
    """
    Half-open dyadic cube prod_i [k_i 2^-n_box, (k_i + 1) 2^-n_box) whose
    distance to the origin and to the unit sphere is at least twice its
    diameter.
    """

    k: tuple
    n_box: int

    def __post_init__(self):
        object.__setattr__(self, "k", tuple(int(c) for c in self.k))
        check_dimension(len(self.k))
        if self.n_box < 0:
            raise ValueError(f"n_box must be non-negative, got {self.n_box}")
        margin = min(self.dist_to_origin, self.dist_to_boundary)
        if margin < 2 * self.diameter:
            raise ValueError(
                f"box k={self.k}, n_box={self.n_box} is not nice: distance {margin:.4g} "
                f"to the origin or the unit sphere is below twice its diameter ({2 * self.diameter:.4g})"
            )

    @property
    def d(self) -> int:
        return len(self.k)

    @property
    def side(self) -> float:
        return 2.0 ** -self.n_box

    @property
    def diameter(self) -> float:
        return math.sqrt(self.d) * self.side

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.k, dtype=float) * self.side

    @property
    def upper(self) -> np.ndarray:
        return self.lower + self.side

    @property
    def dist_to_origin(self) -> float:
        nearest = np.clip(0.0, self.lower, self.upper)
        return float(np.linalg.norm(nearest))

    @property
    def dist_to_boundary(self) -> float:
        farthest = np.maximum(np.abs(self.lower), np.abs(self.upper))
        return 1.0 - float(np.linalg.norm(farthest))

    def in_bulk(self, n: float) -> bool:
        """Both distances are at least e^{-n/6}."""
        return min(self.dist_to_origin, self.dist_to_boundary) >= math.exp(-n / 6)

    def contains(self, points) -> np.ndarray:
        """Membership of one point or of every row of an array."""
        points = np.asarray(points, dtype=float)
        inside = np.all((points >= self.lower) & (points < self.upper), axis=-1)
        return bool(inside) if inside.ndim == 0 else inside

    def children(self) -> list["NiceBox"]:
        """The 2^d dyadic sub-boxes one level down."""
        offsets = np.stack(np.meshgrid(*[[0, 1]] * self.d, indexing="ij"), axis=-1).reshape(-1, self.d)
        return [NiceBox(tuple(2 * np.asarray(self.k) + offset), self.n_box + 1) for offset in offsets]

    def to_record(self) -> dict:
        return {"k": list(self.k), "n_box": self.n_box}


# --- Test functions ---
# Built from module-level functions and functools.partial so they pickle
# into worker processes.

def _constant(value: float, points: np.ndarray) -> np.ndarray:
    """Constant function."""
    return np.full(points.shape[0], value)


def _box_indicator(box: NiceBox, points: np.ndarray) -> np.ndarray:
    """Indicator of ``box``."""
    return box.contains(points).astype(float)


def _gaussian_bump(center: np.ndarray, width: float, points: np.ndarray) -> np.ndarray:
    """Unnormalised Gaussian centred at ``center``."""
    delta = points - center
    return np.exp(-np.einsum("ij,ij->i", delta, delta) / (2 * width ** 2))


def _combination(terms: tuple, points: np.ndarray) -> np.ndarray:
    """Weighted sum of test functions."""
    total = np.zeros(points.shape[0])
    for a, g in terms:
        total = total + a * g(points)
    return total


@dataclass(frozen=True)
class TestFunction:
    """Bounded function on the closed unit ball, evaluated on (N, d) arrays."""

    __test__ = False

    func: Callable[[np.ndarray], np.ndarray]
    modulus: float
    name: str = field(default="g")

    def __call__(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return np.broadcast_to(np.asarray(self.func(points), dtype=float), (points.shape[0],))

    @classmethod
    def constant(cls, value: float) -> "TestFunction":
        """Constant test function."""
        return cls(partial(_constant, float(value)), 0.0, f"const({value:g})")

    @classmethod
    def box_indicator(cls, box: NiceBox) -> "TestFunction":
        """Indicator of a nice box; not Lipschitz, so its modulus is infinite."""
        return cls(partial(_box_indicator, box), math.inf, f"1_box{box.k}@{box.n_box}")

    @classmethod
    def gaussian_bump(cls, center: Sequence[float], width: float) -> "TestFunction":
        """Gaussian bump of the given width, peak value 1."""
        if width <= 0:
            raise ValueError(f"width must be positive, got {width}")
        center = np.asarray(center, dtype=float)
        # Lipschitz constant of exp(-r^2 / 2w^2)
        return cls(partial(_gaussian_bump, center, float(width)), math.exp(-0.5) / width, f"bump({tuple(center)}, {width:g})")

    @classmethod
    def linear_combination(cls, terms: Sequence[tuple[float, "TestFunction"]]) -> "TestFunction":
        """Sum of a_i g_i; the modulus adds up accordingly."""
        terms = tuple((float(a), g) for a, g in terms)
        modulus = sum(abs(a) * g.modulus for a, g in terms if a != 0)
        return cls(partial(_combination, terms), modulus, " + ".join(f"{a:g}*{g.name}" for a, g in terms))
