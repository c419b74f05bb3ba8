"""
Cut points of lattice paths.

A time 0 < t < T is a cut time of a path when its site is visited exactly
once and no site is visited both before and after t.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd

from src.walk_core.lattice_walk import LatticePath
from src.walk_core.path_io import AXIS_NAMES

KEY_BITS = 21
KEY_OFFSET = 1 << (KEY_BITS - 1)


def site_keys(sites: np.ndarray) -> np.ndarray:
    """Pack lattice sites into int64 keys; every coordinate must satisfy |x| < 2^20."""
    sites = np.asarray(sites, dtype=np.int64)
    if sites.size and np.abs(sites).max() >= KEY_OFFSET:
        raise ValueError("lattice coordinates too large for packed site keys")
    shifted = sites + KEY_OFFSET
    keys = np.zeros(sites.shape[0], dtype=np.int64)
    for axis in range(sites.shape[1]):
        keys = (keys << KEY_BITS) | shifted[:, axis]
    return keys


# --- 1. Visit index ---

@dataclass(frozen=True)
class VisitIndex:
    """
    Per-site visit times of one path, built by a single sort.

    Sites are packed into int64 keys of KEY_BITS = 21 bits per axis, so
    every coordinate must satisfy |x| < 2^20; larger paths raise ValueError.
    Walks stopped at radius e^n fit for n < 20 ln 2 (about 13.8).
    """

    sites: np.ndarray      # distinct sites, shape (k, d)
    inverse: np.ndarray    # path index -> distinct site number
    first: np.ndarray
    last: np.ndarray
    count: np.ndarray
    order: np.ndarray      # path indices grouped by site, ascending inside a group
    offsets: np.ndarray

    @classmethod
    def build(cls, path: LatticePath) -> "VisitIndex":
        """Index every visit of ``path``."""
        keys = site_keys(path.sites)
        unique_keys, first_pos, inverse, count = np.unique(
            keys, return_index=True, return_inverse=True, return_counts=True
        )
        order = np.argsort(inverse, kind="stable")
        last = np.zeros(unique_keys.shape[0], dtype=np.int64)
        np.maximum.at(last, inverse, np.arange(keys.shape[0]))
        offsets = np.concatenate([[0], np.cumsum(count)])
        return cls(
            sites=path.sites[first_pos],
            inverse=inverse.reshape(-1),
            first=first_pos.astype(np.int64),
            last=last,
            count=count.astype(np.int64),
            order=order,
            offsets=offsets,
        )

    def visits(self, site: Sequence[int]) -> list[int]:
        """Sorted visit times of ``site`` (empty if never visited)."""
        target = np.asarray(site, dtype=np.int64)
        match = np.flatnonzero(np.all(self.sites == target, axis=1))
        if not match.size:
            return []
        i = int(match[0])
        return self.order[self.offsets[i]: self.offsets[i + 1]].tolist()

    def __len__(self) -> int:
        return self.sites.shape[0]


# --- 2. Cut point sets ---

@dataclass(frozen=True)
class CutPointSet:
    times: np.ndarray
    sites: np.ndarray
    path_id: Optional[str] = field(default=None, compare=False)

    def __len__(self) -> int:
        return int(self.times.shape[0])

    def __eq__(self, other):
        if not isinstance(other, CutPointSet):
            return NotImplemented
        return np.array_equal(self.times, other.times) and np.array_equal(self.sites, other.sites)

    def to_frame(self) -> pd.DataFrame:
        """One row per cut point: t_index and coordinates."""
        d = self.sites.shape[1]
        frame = pd.DataFrame(self.sites, columns=list(AXIS_NAMES[:d]))
        frame.insert(0, "t_index", self.times)
        return frame

    def to_csv(self, file_path: Union[str, Path]) -> Path:
        """Write the cut points as CSV."""
        file_path = Path(file_path)
        file_path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(file_path, index=False)
        return file_path


def _cut_set(path: LatticePath, times: Sequence[int]) -> CutPointSet:
    """CutPointSet of ``path`` at the given times."""
    times = np.asarray(times, dtype=np.int64)
    return CutPointSet(times, path.sites[times].reshape(-1, path.d), path.path_id)


def cut_points_naive(path: LatticePath) -> CutPointSet:
    """Quadratic reference implementation of the cut-point definition."""
    trace = [tuple(site) for site in path.sites.tolist()]
    times = []
    for t in range(1, path.n_steps):
        if trace.count(trace[t]) != 1:
            continue
        if set(trace[:t]).isdisjoint(trace[t + 1:]):
            times.append(t)
    return _cut_set(path, times)


def cut_points_fast(path: LatticePath) -> CutPointSet:
    """
    Cut points by an interval sweep.

    Each site covers the open interval (first visit, last visit). A time is
    a cut time when no interval covers it and its own site is visited once.
    """
    index = VisitIndex.build(path)
    length = path.n_steps
    cover = np.zeros(length + 2, dtype=np.int64)
    spans = index.last > index.first + 1
    np.add.at(cover, index.first[spans] + 1, 1)
    np.add.at(cover, index.last[spans], -1)
    covered = np.cumsum(cover)[: length + 1] > 0
    single = index.count[index.inverse] == 1
    interior = np.zeros(length + 1, dtype=bool)
    interior[1:length] = True
    return _cut_set(path, np.flatnonzero(single & ~covered & interior))


def is_cut_point(path: LatticePath, site: Sequence[int]) -> bool:
    """Whether ``site`` is a cut point of ``path``."""
    keys = site_keys(path.sites)
    target = site_keys(np.asarray(site, dtype=np.int64).reshape(1, -1))[0]
    visits = np.flatnonzero(keys == target)
    if visits.size != 1:
        return False
    t = int(visits[0])
    if t == 0 or t == path.n_steps:
        return False
    before, after = keys[:t], keys[t + 1:]
    if before.size > after.size:
        before, after = after, before
    return not np.isin(before, after).any()
