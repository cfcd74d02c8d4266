"""Square tiling of the unit square and its site-percolation view.

Cells have side ``a``, normally ``r / sqrt(2)`` so that any two nodes
sharing a cell are within ``r`` of each other. A cell is *occupied* when it
holds at least one non-faulty node.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .deployment import Deployment, FailureMask
from .errors import InvalidParameterError

Q_CRITICAL = 0.4073

_FOUR_NEIGHBORS = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class PercolationParams:
    q_c: float = Q_CRITICAL
    c1: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.q_c < 1.0:
            raise InvalidParameterError(f"q_c must lie in (0, 1), got {self.q_c}")
        if self.c1 <= 0:
            raise InvalidParameterError(f"c1 must be > 0, got {self.c1}")


def cells_per_axis(a: float) -> int:
    # 1e-9 absorbs float noise such as 1 / (1/3) = 3.0000000000000004.
    return max(1, math.ceil(1.0 / a - 1e-9))


@dataclass(frozen=True, eq=False)
class CellGrid:
    a: float
    k: int
    cell_of: np.ndarray  # int (n, 2): (column i, row j) per node
    faulty: np.ndarray  # bool (n,)
    alive_count: np.ndarray  # int (k, k), indexed [i, j]
    faulty_count: np.ndarray  # int (k, k)
    _members: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return len(self.cell_of)

    @property
    def n_cells(self) -> int:
        return self.k * self.k

    @property
    def occupied(self) -> np.ndarray:
        return self.alive_count > 0

    def members(self, i: int, j: int, faulty: bool = False) -> np.ndarray:
        """Node indices in cell ``(i, j)`` that are faulty (or non-faulty)."""
        if not self._members:
            key = self.cell_of[:, 0] * self.k + self.cell_of[:, 1]
            order = np.argsort(key, kind="stable")
            bounds = np.searchsorted(key[order], np.arange(self.k * self.k + 1))
            self._members["order"] = order
            self._members["bounds"] = bounds
        order = self._members["order"]
        bounds = self._members["bounds"]
        c = i * self.k + j
        idx = order[bounds[c]:bounds[c + 1]]
        return idx[self.faulty[idx] == faulty]

    def cell_bounds(self, i: int, j: int) -> tuple[float, float, float, float]:
        """``(x0, y0, x1, y1)``; the last row and column end at 1."""
        return (i * self.a, j * self.a,
                1.0 if i == self.k - 1 else (i + 1) * self.a,
                1.0 if j == self.k - 1 else (j + 1) * self.a)

    def cell_center(self, i: int, j: int) -> tuple[float, float]:
        x0, y0, x1, y1 = self.cell_bounds(i, j)
        return 0.5 * (x0 + x1), 0.5 * (y0 + y1)


def build_grid(d: Deployment, m: FailureMask, a: float) -> CellGrid:
    if not 0.0 < a <= 1.0:
        raise InvalidParameterError(f"cell side must lie in (0, 1], got {a}")
    k = cells_per_axis(a)
    cell = np.minimum(np.floor(d.positions / a).astype(np.int64), k - 1)
    cell = np.maximum(cell, 0)
    alive = np.zeros((k, k), dtype=np.int64)
    dead = np.zeros((k, k), dtype=np.int64)
    np.add.at(alive, (cell[~m.faulty, 0], cell[~m.faulty, 1]), 1)
    np.add.at(dead, (cell[m.faulty, 0], cell[m.faulty, 1]), 1)
    return CellGrid(float(a), k, cell, m.faulty.copy(), alive, dead)


def cell_occupancy_stats(g: CellGrid) -> tuple[int, int, float]:
    """``(min, max, mean)`` non-faulty nodes per cell over all ``k*k`` cells."""
    c = g.alive_count
    return int(c.min()), int(c.max()), float(c.mean())


def site_percolation_connected(g: CellGrid, mode: str = "strict") -> bool:
    """Whether the occupied cells percolate.

    ``strict`` demands that no cell is empty, so the whole lattice relays.
    ``giant`` only demands that the occupied cells form one 4-connected
    component.
    """
    occ = g.occupied
    if mode == "strict":
        return bool(occ.all())
    if mode == "giant":
        _, n_lab = ndimage.label(occ, structure=_FOUR_NEIGHBORS)
        return n_lab == 1
    raise InvalidParameterError(f"unknown percolation mode {mode!r}")


def empty_cell_count(g: CellGrid) -> int:
    return int(np.count_nonzero(~g.occupied))


def phase_threshold(n: int, p: PercolationParams) -> float:
    """Largest failure probability, ``q_c ** (1 / (c1 ln n))``, that keeps the lattice percolating."""
    if n < 2:
        raise InvalidParameterError(f"n must be >= 2, got {n}")
    return p.q_c ** (1.0 / (p.c1 * math.log(n)))


def phase_condition(n: int, q: float, p: PercolationParams = PercolationParams()) -> bool:
    return q < phase_threshold(n, p)


def estimate_c1(g: CellGrid, n: int) -> float:
    """Mean non-faulty occupancy per cell in units of ``ln n``."""
    return float(g.alive_count.mean()) / math.log(n)
