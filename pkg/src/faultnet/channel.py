"""Link budgets with path loss, log-normal shadowing and Rayleigh fading,
plus the SINR reception rule.

Received power in dBm is ``P_t - 10 alpha log10(d) + S + F`` where ``S`` is a
Normal(0, sigma^2) dB variate and ``F = 10 log10(G)`` with
``G ~ Exponential(1)``. ``literal_fading=True`` adds ``G`` itself instead,
which is dimensionally loose but matches some published figures.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import pdist

from .deployment import STREAM_CHANNEL, SeedSpec, place_nodes, sample_failures
from .errors import InvalidParameterError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChannelParams:
    p_t_dbm: float = 0.0
    p_min_dbm: float = -80.0
    alpha: float = 2.0
    sigma_db: float = 0.0
    fading: bool = False
    rho0: float = 1e-6  # minimum propagation distance, coordinate units
    noise: float = 1.0  # linear
    beta: float = 1.0  # linear SINR threshold
    distance_scale: float = 1.0  # metres per coordinate unit in the link budget
    literal_fading: bool = False

    def __post_init__(self):
        if self.sigma_db < 0:
            raise InvalidParameterError(f"sigma_db must be >= 0, got {self.sigma_db}")
        if self.rho0 <= 0:
            raise InvalidParameterError(f"rho0 must be > 0, got {self.rho0}")
        if self.beta <= 0:
            raise InvalidParameterError(f"beta must be > 0, got {self.beta}")
        if self.alpha <= 0:
            raise InvalidParameterError(f"alpha must be > 0, got {self.alpha}")
        if self.distance_scale <= 0:
            raise InvalidParameterError(f"distance_scale must be > 0, got {self.distance_scale}")

    @property
    def threshold_distance(self) -> float:
        """Distance (coordinate units) at which the mean received power equals ``P_min``."""
        return 10.0 ** ((self.p_t_dbm - self.p_min_dbm) / (10.0 * self.alpha)) / self.distance_scale

    def at_threshold_distance(self, r: float) -> "ChannelParams":
        """Copy with ``P_t`` chosen so that :attr:`threshold_distance` equals ``r``."""
        p_t = self.p_min_dbm + 10.0 * self.alpha * math.log10(r * self.distance_scale)
        return replace(self, p_t_dbm=p_t)


def received_power_dbm(p: ChannelParams, dist, shadow_sample=0.0, fading_sample=1.0):
    dist = np.asarray(dist, dtype=float)
    if np.any(dist < p.rho0):
        log.debug("distance below rho0=%g clamped", p.rho0)
        dist = np.maximum(dist, p.rho0)
    pr = p.p_t_dbm - 10.0 * p.alpha * np.log10(dist * p.distance_scale) + shadow_sample
    if p.fading:
        if p.literal_fading:
            pr = pr + fading_sample
        else:
            with np.errstate(divide="ignore"):
                pr = pr + 10.0 * np.log10(fading_sample)
    return pr if pr.ndim else float(pr)


def sample_links(dist: np.ndarray, p: ChannelParams, rng: np.random.Generator) -> np.ndarray:
    """One link decision per distance, each with fresh shadowing and fading draws."""
    dist = np.asarray(dist, dtype=float)
    shadow = rng.normal(0.0, p.sigma_db, dist.shape) if p.sigma_db > 0 else 0.0
    fade = rng.exponential(1.0, dist.shape) if p.fading else 1.0
    return received_power_dbm(p, dist, shadow, fade) > p.p_min_dbm


def sample_link(xi, xj, p: ChannelParams, seed) -> bool:
    rng = seed.rng(STREAM_CHANNEL) if isinstance(seed, SeedSpec) else np.random.default_rng(seed)
    d = math.dist(xi, xj)
    return bool(sample_links(np.array([d]), p, rng)[0])


def sinr(active_pairs, idx: int, powers, p: ChannelParams) -> float:
    """SINR at the receiver of pair ``idx`` with all other pairs transmitting.

    ``active_pairs`` is a sequence of ``(tx_xy, rx_xy)``. Path gain is
    ``max(dist, rho0) ** -alpha`` with no shadowing or fading.
    """
    if p.alpha <= 2:
        raise InvalidParameterError(f"SINR model needs alpha > 2, got {p.alpha}")
    if len(active_pairs) == 0:
        raise InvalidParameterError("active set is empty")
    tx = np.array([pair[0] for pair in active_pairs], dtype=float)
    rx = np.asarray(active_pairs[idx][1], dtype=float)
    powers = np.broadcast_to(np.asarray(powers, dtype=float), (len(tx),))
    dist = np.maximum(np.linalg.norm(tx - rx, axis=1), p.rho0)
    gain = powers * dist ** (-p.alpha)
    # summing the others directly avoids cancellation against a dominant own gain
    interference = np.delete(gain, idx).sum()
    denom = p.noise + interference
    if denom == 0:
        return math.inf
    return float(gain[idx] / denom)


def delta_of_beta(beta: float, alpha: float) -> float:
    """Protocol guard zone that the SINR threshold ``beta`` translates to:
    ``(48 beta 2**(alpha-2) / (alpha-2)) ** (1/alpha)``."""
    if alpha <= 2:
        raise InvalidParameterError(f"alpha must be > 2, got {alpha}")
    if beta <= 0:
        raise InvalidParameterError(f"beta must be > 0, got {beta}")
    return (48.0 * beta * 2.0 ** (alpha - 2.0) / (alpha - 2.0)) ** (1.0 / alpha)


def _condensed_pairs(m: int) -> tuple[np.ndarray, np.ndarray]:
    i, j = np.triu_indices(m, k=1)
    return i, j


def channel_trial_connected(n: int, q: float, p: ChannelParams, spec: SeedSpec) -> bool:
    """Two-condition connectivity with randomly sampled links.

    Links are drawn once per unordered pair so both conditions see the same
    link set.
    """
    d = place_nodes(n, spec)
    m = sample_failures(d, q, spec)
    if n == 0:
        return True
    alive = ~m.faulty
    n_alive = int(alive.sum())
    if n_alive == 0:
        return False
    if n == 1:
        return True
    i, j = _condensed_pairs(n)
    link = sample_links(pdist(d.positions), p, spec.rng(STREAM_CHANNEL))
    both = link & alive[i] & alive[j]
    graph = coo_matrix((np.ones(int(both.sum())), (i[both], j[both])), shape=(n, n))
    labels = connected_components(graph, directed=False)[1]
    if len(np.unique(labels[alive])) != 1:
        return False
    if n_alive == n:
        return True
    # each faulty node needs a link to some survivor
    mixed = link & (alive[i] ^ alive[j])
    dead_end = np.where(alive[i[mixed]], j[mixed], i[mixed])
    covered = np.zeros(n, dtype=bool)
    covered[dead_end] = True
    return bool(covered[m.faulty].all())


def channel_connectivity_probability(n: int, q: float, p: ChannelParams, trials: int, seed: int) -> float:
    if trials < 1:
        raise InvalidParameterError(f"trials must be >= 1, got {trials}")
    hits = sum(channel_trial_connected(n, q, p, SeedSpec(seed, t)) for t in range(trials))
    return hits / trials
