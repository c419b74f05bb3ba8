"""
Uniform-grid spatial hash for proximity queries between sampled polylines.
"""

from __future__ import annotations

import itertools
from typing import Iterator

import numpy as np

from src.cut_detect.cut_points import site_keys

QUERY_BATCH = 1 << 14


class SpatialHash:
    """Points bucketed by cell floor(x / cell_size); lookups cover neighbouring cells."""

    def __init__(self, cell_size: float):
        if cell_size <= 0:
            raise ValueError(f"cell size must be positive, got {cell_size}")
        self.cell_size = float(cell_size)
        self.points = np.empty((0, 0))
        self._sorted_keys = np.empty(0, dtype=np.int64)
        self._order = np.empty(0, dtype=np.int64)

    def _cells(self, points: np.ndarray) -> np.ndarray:
        """Integer cell of every point."""
        return np.floor(points / self.cell_size).astype(np.int64)

    def insert(self, points: np.ndarray) -> None:
        """Replace the stored points and sort them by cell key."""
        self.points = np.asarray(points, dtype=float)
        keys = site_keys(self._cells(self.points))
        self._order = np.argsort(keys, kind="stable")
        self._sorted_keys = keys[self._order]

    def iter_candidates(self, queries: np.ndarray) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """
        Yield (query index, stored index) pairs whose cells are neighbours.

        Every stored point within ``cell_size`` of a query is among the
        candidates. Pairs come in batches so callers can stop early.
        """
        if not self._sorted_keys.size:
            return
        queries = np.asarray(queries, dtype=float)
        d = queries.shape[1]
        offsets = np.array(list(itertools.product((-1, 0, 1), repeat=d)), dtype=np.int64)
        for begin in range(0, queries.shape[0], QUERY_BATCH):
            cells = self._cells(queries[begin: begin + QUERY_BATCH])
            for offset in offsets:
                keys = site_keys(cells + offset)
                lo = np.searchsorted(self._sorted_keys, keys, side="left")
                hi = np.searchsorted(self._sorted_keys, keys, side="right")
                counts = hi - lo
                total = int(counts.sum())
                if not total:
                    continue
                query_index = np.repeat(np.arange(cells.shape[0]), counts)
                run_start = np.repeat(np.cumsum(counts) - counts, counts)
                position = np.arange(total) - run_start + np.repeat(lo, counts)
                yield query_index + begin, self._order[position]

    def query_candidates(self, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """All candidate pairs as (query index, stored index) arrays."""
        pairs = list(self.iter_candidates(queries))
        if not pairs:
            empty = np.empty(0, dtype=np.int64)
            return empty, empty
        return np.concatenate([p[0] for p in pairs]), np.concatenate([p[1] for p in pairs])


# --- Segment geometry ---

def segment_distances(p1: np.ndarray, q1: np.ndarray, p2: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Row-wise distance between segments [p1, q1] and [p2, q2]."""
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = np.einsum("ij,ij->i", d1, d1)
    e = np.einsum("ij,ij->i", d2, d2)
    f = np.einsum("ij,ij->i", d2, r)
    c = np.einsum("ij,ij->i", d1, r)
    b = np.einsum("ij,ij->i", d1, d2)
    tiny = 1e-300
    point1 = a <= tiny
    point2 = e <= tiny
    safe_a = np.where(point1, 1.0, a)
    safe_e = np.where(point2, 1.0, e)
    denom = a * e - b * b

    general = denom > 1e-12 * a * e
    s = np.where(general, np.clip((b * f - c * e) / np.where(general, denom, 1.0), 0.0, 1.0), 0.0)
    t = (b * s + f) / safe_e
    low = t < 0
    high = t > 1
    t = np.clip(t, 0.0, 1.0)
    s = np.where(low, np.clip(-c / safe_a, 0.0, 1.0), s)
    s = np.where(high, np.clip((b - c) / safe_a, 0.0, 1.0), s)
    # degenerate segments
    s = np.where(point2, np.clip(-c / safe_a, 0.0, 1.0), s)
    t = np.where(point2, 0.0, t)
    s = np.where(point1, 0.0, s)
    t = np.where(point1 & ~point2, np.clip(f / safe_e, 0.0, 1.0), t)

    gap = r + s[:, None] * d1 - t[:, None] * d2
    return np.sqrt(np.einsum("ij,ij->i", gap, gap))


def _segment_ends(polyline: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Start and end points of every segment; a single point is a degenerate segment."""
    if polyline.shape[0] == 1:
        return polyline, polyline
    return polyline[:-1], polyline[1:]


def _longest_segment(polyline: np.ndarray) -> float:
    """Length of the longest segment of the polyline."""
    if polyline.shape[0] < 2:
        return 0.0
    steps = np.diff(polyline, axis=0)
    return float(np.sqrt(np.einsum("ij,ij->i", steps, steps).max()))


def polylines_separated(first: np.ndarray, second: np.ndarray, margin: float) -> bool:
    """
    True when every point of one polyline is farther than ``margin`` from
    every point of the other.

    Vertex pairs closer than margin + (longest segments)/2 are found through
    a spatial hash; only the segments incident to those vertices are
    measured exactly.
    """
    first = np.asarray(first, dtype=float)
    second = np.asarray(second, dtype=float)
    if not first.shape[0] or not second.shape[0]:
        return True
    reach = margin + 0.5 * (_longest_segment(first) + _longest_segment(second))
    index = SpatialHash(reach)
    index.insert(second)
    starts1, ends1 = _segment_ends(first)
    starts2, ends2 = _segment_ends(second)
    last1, last2 = starts1.shape[0] - 1, starts2.shape[0] - 1

    for qi, si in index.iter_candidates(first):
        gap = first[qi] - second[si]
        dist = np.sqrt(np.einsum("ij,ij->i", gap, gap))
        if np.any(dist <= margin):
            return False
        near = dist <= reach
        if not near.any():
            continue
        qi, si = qi[near], si[near]
        for seg1 in (np.clip(qi - 1, 0, last1), np.clip(qi, 0, last1)):
            for seg2 in (np.clip(si - 1, 0, last2), np.clip(si, 0, last2)):
                if np.any(segment_distances(starts1[seg1], ends1[seg1], starts2[seg2], ends2[seg2]) <= margin):
                    return False
    return True
