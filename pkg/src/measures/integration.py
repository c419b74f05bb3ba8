from __future__ import annotations

from typing import Union

from src.measures.boxes import NiceBox, TestFunction
from src.measures.grid import GridMeasure
from src.measures.occupation import AtomicMeasure

Measure = Union[AtomicMeasure, GridMeasure]


def integrate(measure: Measure, g: TestFunction) -> float:
    """Atoms are weighed at their rescaled sites, grid cells at their centres."""
    return measure.integrate(g)


def mass_in(measure: Measure, box: NiceBox) -> float:
    """Mass of ``box`` under either kind of measure."""
    return measure.mass_in(box)
