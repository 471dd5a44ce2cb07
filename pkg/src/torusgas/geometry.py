"""Periodic-box geometry: wrapping, minimal-image displacements, cell lists.

All positions live on a torus [0, L)^d with d in {1, 2, 3}.  Displacements
follow the half-open convention [-L/2, L/2) so that ties at exactly L/2 are
resolved deterministically.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TorusDomain:
    """Periodic simulation box of side L in dimension d."""

    d: int
    L: float

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if not (self.L > 0):
            raise ValueError(f"side length must be positive, got {self.L}")

    @property
    def volume(self) -> float:
        return self.L ** self.d


def _mod_box(x: np.ndarray, L: float) -> np.ndarray:
    """Componentwise modulo into [0, L), guarding the float edge at L.

    np.mod of a tiny negative value can round up to exactly L; fold it back.
    """
    out = np.mod(x, L)
    return np.where(out >= L, out - L, out)


def wrap(x, dom: TorusDomain) -> np.ndarray:
    """Wrap a point (or an array of points) into [0, L)^d."""
    return _mod_box(np.asarray(x, dtype=float), dom.L)


def min_image_disp(x, y, dom: TorusDomain) -> np.ndarray:
    """Minimal-image displacement x - y, each coordinate in [-L/2, L/2)."""
    L = dom.L
    dx = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return _mod_box(dx + 0.5 * L, L) - 0.5 * L


def min_image_dist(x, y, dom: TorusDomain) -> float:
    d = min_image_disp(x, y, dom)
    return float(np.sqrt(np.sum(d * d, axis=-1)))


class CellList:
    """Bucket points into cells of side >= the interaction range.

    Range queries then only visit the 3^d adjacent cells, making energy
    evaluation O(neighbors) instead of O(N).  Cells map to lists of integer
    point ids; positions are kept alongside so removal needs only the id.
    """

    def __init__(self, dom: TorusDomain, interaction_range: float):
        if interaction_range < 0:
            raise ValueError("interaction range must be >= 0")
        self.dom = dom
        self.range = float(interaction_range)
        if interaction_range > 0:
            self.n_per_dim = max(1, int(math.floor(dom.L / interaction_range)))
        else:
            self.n_per_dim = 1
        self.h = dom.L / self.n_per_dim  # cell side, >= interaction_range
        self.cells: dict[tuple[int, ...], list[int]] = {}
        self.positions: dict[int, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.positions)

    def cell_index(self, x) -> tuple[int, ...]:
        xw = wrap(x, self.dom)
        idx = np.minimum((xw / self.h).astype(int), self.n_per_dim - 1)
        return tuple(int(i) for i in np.atleast_1d(idx))

    def insert(self, pid: int, x) -> None:
        if pid in self.positions:
            raise KeyError(f"point id {pid} already present")
        xw = wrap(x, self.dom)
        self.positions[pid] = xw
        self.cells.setdefault(self.cell_index(xw), []).append(pid)

    def remove(self, pid: int) -> None:
        x = self.positions.pop(pid)
        key = self.cell_index(x)
        members = self.cells[key]
        members.remove(pid)
        if not members:
            del self.cells[key]

    def move(self, pid: int, x_new) -> None:
        self.remove(pid)
        self.insert(pid, x_new)

    def rebuild(self, points: np.ndarray) -> None:
        self.cells.clear()
        self.positions.clear()
        for i, x in enumerate(np.atleast_2d(points)):
            self.insert(i, x)

    def _covering_cells(self, x, radius: float):
        center = self.cell_index(x)
        reach = max(1, int(math.ceil(radius / self.h)))
        n = self.n_per_dim
        seen = set()
        for offset in itertools.product(range(-reach, reach + 1), repeat=self.dom.d):
            key = tuple((c + o) % n for c, o in zip(center, offset))
            if key not in seen:
                seen.add(key)
                yield key

    def query(self, x, radius: float) -> list[int]:
        """Ids of all points with minimal-image distance <= radius from x.

        The distance filter admits a relative slack of 1e-12 so points
        sitting exactly on the shell are never lost to rounding.
        """
        cutoff = radius * (1.0 + 1e-12)
        out = []
        xq = wrap(x, self.dom)
        for key in self._covering_cells(xq, radius):
            for pid in self.cells.get(key, ()):
                if min_image_dist(xq, self.positions[pid], self.dom) <= cutoff:
                    out.append(pid)
        return out


def neighbors(cl: CellList, x, radius: float, expected_count: int | None = None) -> list[int]:
    """Range query against a cell list.

    A mismatch between `expected_count` (the caller's point count) and the
    cell list's content is a logic error, not a recoverable condition.
    """
    if expected_count is not None:
        assert len(cl) == expected_count, (
            f"stale cell list: holds {len(cl)} points, caller has {expected_count}")
    return cl.query(x, radius)


def brute_force_neighbors(points: np.ndarray, x, radius: float, dom: TorusDomain) -> list[int]:
    """O(N^2)-style reference scan used as the oracle for cell-list queries."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        return []
    dx = _mod_box(pts - np.asarray(x, dtype=float) + 0.5 * dom.L, dom.L) - 0.5 * dom.L
    dist = np.sqrt(np.sum(dx * dx, axis=1))
    return list(np.nonzero(dist <= radius * (1.0 + 1e-12))[0])
