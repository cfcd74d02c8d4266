"""Protocol-model interference and the M x M cell TDMA schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleLinkError, InvalidParameterError
from .percolation import CellGrid

OMNI = "omnidirectional"
DIRECTIONAL = "directional"

# Slack on the "tx-rx distance <= r" precondition for rounding noise.
_RADIUS_RTOL = 1e-9


@dataclass(frozen=True)
class MacParams:
    delta: float = 0.0
    antenna: str = OMNI
    theta: float | None = None  # beamwidth, radians
    W: float = 1.0  # bits per slot

    def __post_init__(self):
        if self.delta < 0:
            raise InvalidParameterError(f"delta must be >= 0, got {self.delta}")
        if self.W <= 0:
            raise InvalidParameterError(f"W must be > 0, got {self.W}")
        if self.antenna not in (OMNI, DIRECTIONAL):
            raise InvalidParameterError(f"unknown antenna type {self.antenna!r}")
        if self.antenna == DIRECTIONAL:
            if self.theta is None:
                raise InvalidParameterError("directional antenna requires theta")
            if not 0 < self.theta <= 2 * math.pi:
                raise InvalidParameterError(f"theta must lie in (0, 2pi], got {self.theta}")


@dataclass(frozen=True, eq=False)
class Schedule:
    M: int
    phase: np.ndarray  # int (k, k), indexed [i, j]

    @property
    def n_phases(self) -> int:
        return self.M * self.M


def effective_delta(p: MacParams) -> float:
    if p.antenna == OMNI:
        return p.delta
    if p.theta is None:
        raise InvalidParameterError("directional antenna requires theta")
    return min(p.delta, math.sin(p.theta / 2.0))


def cluster_size(delta_prime: float) -> int:
    """Smallest integer strictly greater than ``1 + sqrt(2) (2 + delta')``."""
    if delta_prime < 0:
        raise InvalidParameterError(f"delta' must be >= 0, got {delta_prime}")
    return max(3, math.floor(1.0 + math.sqrt(2.0) * (2.0 + delta_prime)) + 1)


def build_tdma(g: CellGrid, M: int) -> Schedule:
    if M < 1:
        raise InvalidParameterError(f"M must be >= 1, got {M}")
    i, j = np.meshgrid(np.arange(g.k), np.arange(g.k), indexing="ij")
    return Schedule(int(M), (i % M) * M + (j % M))


def _as_links(active):
    tx = np.array([a[0] for a in active], dtype=float).reshape(-1, 2)
    rx = np.array([a[1] for a in active], dtype=float).reshape(-1, 2)
    return tx, rx


def protocol_feasible(active, delta_prime: float, r: float) -> bool:
    """Check ``|tx_k - rx_i| >= (1 + delta') |tx_i - rx_i|`` for every ``k != i``.

    ``active`` is a sequence of ``(tx_xy, rx_xy)``.
    """
    tx, rx = _as_links(active)
    own = np.linalg.norm(tx - rx, axis=1)
    too_long = np.flatnonzero(own > r * (1 + _RADIUS_RTOL))
    if len(too_long):
        raise InfeasibleLinkError(f"link {too_long[0]} has length {own[too_long[0]]:.6g} > r={r:.6g}")
    if len(tx) < 2:
        return True
    cross = np.linalg.norm(tx[:, None, :] - rx[None, :, :], axis=2)  # [k, i]
    need = (1.0 + delta_prime) * own[None, :]
    np.fill_diagonal(cross, np.inf)
    return bool(np.all(cross >= need))


def guard_disks_disjoint(active, delta_prime: float) -> bool:
    """Receiver-centred disks of radius ``delta'/2 * |tx_i - rx_i|`` do not overlap.

    Implied by :func:`protocol_feasible` through the triangle inequality.
    """
    tx, rx = _as_links(active)
    if len(tx) < 2:
        return True
    radius = 0.5 * delta_prime * np.linalg.norm(tx - rx, axis=1)
    sep = np.linalg.norm(rx[:, None, :] - rx[None, :, :], axis=2)
    reach = radius[:, None] + radius[None, :]
    np.fill_diagonal(sep, np.inf)
    return bool(np.all(sep >= reach))


def _worst_case_links(g: CellGrid, ci: np.ndarray, ck: np.ndarray, r: float):
    """Adversarial placement for transmitter cells ``ci`` against interferer cells ``ck``.

    The transmitter sits on the corner of its cell nearest the interferer's
    cell, the receiver is a full ``r`` away towards the interferer, and the
    interferer sits on its own nearest corner.
    """
    a = g.a
    lo_i, lo_k = ci * a, ck * a
    hi_i = np.minimum((ci + 1) * a, 1.0)
    hi_k = np.minimum((ck + 1) * a, 1.0)
    # nearest points between the two closed squares, per axis
    tx_i = np.where(ck > ci, hi_i, lo_i)
    tx_k = np.where(ck > ci, lo_k, np.where(ck < ci, hi_k, tx_i))
    direction = tx_k - tx_i
    norm = np.linalg.norm(direction, axis=1, keepdims=True)
    unit = np.divide(direction, norm, out=np.tile([[1.0, 0.0]], (len(norm), 1)), where=norm > 0)
    rx_i = tx_i + r * unit
    return tx_i, rx_i, tx_k


def verify_schedule(g: CellGrid, s: Schedule, delta_prime: float, r: float) -> bool:
    """Whether every same-phase pair of cells survives a worst-case transmission.

    For each ordered pair of distinct cells sharing a phase, a maximal-length
    link out of the first cell must satisfy the protocol condition against an
    interferer placed anywhere in the second.
    """
    cells = np.argwhere(np.ones((g.k, g.k), dtype=bool))
    phases = s.phase[cells[:, 0], cells[:, 1]]
    for ph in np.unique(phases):
        group = cells[phases == ph]
        if len(group) < 2:
            continue
        a_idx, b_idx = np.nonzero(~np.eye(len(group), dtype=bool))
        tx, rx, intf = _worst_case_links(g, group[a_idx], group[b_idx], r)
        own = np.linalg.norm(tx - rx, axis=1)
        cross = np.linalg.norm(intf - rx, axis=1)
        if np.any(cross < (1.0 + delta_prime) * own * (1 - 1e-12)):
            return False
    return True


def relay_nodes(g: CellGrid, positions: np.ndarray) -> np.ndarray:
    """Per-cell relay: the non-faulty node nearest the cell centre, lowest index on ties.

    Returns an int array ``(k, k)`` with -1 for empty cells.
    """
    out = np.full((g.k, g.k), -1, dtype=np.int64)
    alive = np.flatnonzero(~g.faulty)
    if len(alive) == 0:
        return out
    ci = g.cell_of[alive]
    x0 = ci * g.a
    x1 = np.where(ci == g.k - 1, 1.0, (ci + 1) * g.a)
    dist = np.linalg.norm(positions[alive] - 0.5 * (x0 + x1), axis=1)
    order = np.lexsort((alive, dist))  # primary: distance, then index
    for idx in order[::-1]:
        out[ci[idx, 0], ci[idx, 1]] = alive[idx]
    return out
