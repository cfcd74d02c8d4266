"""Geometric graphs over surviving nodes and two-condition connectivity.

A network is connected when the non-faulty nodes form one component under
the distance rule ``dist <= r`` and every faulty node has at least one
non-faulty node within ``r``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, minimum_spanning_tree
from scipy.spatial import Delaunay, QhullError, cKDTree
from scipy.spatial.distance import pdist, squareform

from .deployment import Deployment, FailureMask, SeedSpec, place_nodes, sample_failures
from .errors import InvalidParameterError, NumericalError

SQRT2 = math.sqrt(2.0)

# Cap on hash cells per axis; cells only get larger than r, never smaller.
_MAX_HASH_CELLS = 2048

_FORWARD_OFFSETS = ((0, 0), (1, -1), (1, 0), (1, 1), (0, 1))


@dataclass(frozen=True, eq=False)
class GeomGraph:
    nodes: np.ndarray  # original indices of the non-faulty nodes
    r: float
    edges: np.ndarray  # int (E, 2), original indices, i < j

    def adjacency(self) -> dict[int, set[int]]:
        adj = {int(v): set() for v in self.nodes}
        for i, j in self.edges:
            adj[int(i)].add(int(j))
            adj[int(j)].add(int(i))
        return adj

    def n_components(self) -> int:
        m = len(self.nodes)
        if m == 0:
            return 0
        local = np.searchsorted(self.nodes, self.edges) if len(self.edges) else np.empty((0, 2), int)
        graph = coo_matrix(
            (np.ones(len(local)), (local[:, 0], local[:, 1])), shape=(m, m)
        )
        return connected_components(graph, directed=False)[0]


def critical_radius_closed_form(n: int, q: float, xi: float = 0.0, with_pi: bool = False) -> float:
    """Radius ``sqrt((ln n + xi) / ((1 - q) n))``.

    ``with_pi=True`` puts an extra factor pi in the denominator, the
    disk-area form of the same threshold.
    """
    if n < 2:
        raise InvalidParameterError(f"n must be >= 2, got {n}")
    if not 0.0 <= q < 1.0:
        raise InvalidParameterError(f"q must lie in [0, 1), got {q}")
    if xi < 0:
        raise InvalidParameterError(f"xi must be >= 0, got {xi}")
    denom = (1.0 - q) * n * (math.pi if with_pi else 1.0)
    return math.sqrt((math.log(n) + xi) / denom)


def pairs_within(points: np.ndarray, r: float) -> np.ndarray:
    """All index pairs ``i < j`` with ``|p_i - p_j| <= r``, by uniform-cell hashing."""
    m = len(points)
    if m < 2 or r <= 0:
        return np.empty((0, 2), dtype=np.int64)
    ncell = max(1, min(_MAX_HASH_CELLS, int(1.0 / r)))
    cell = np.minimum((points * ncell).astype(np.int64), ncell - 1)
    key = cell[:, 0] * ncell + cell[:, 1]
    order = np.argsort(key, kind="stable")
    skey = key[order]
    uniq, start = np.unique(skey, return_index=True)
    stop = np.append(start[1:], len(skey))
    lookup = {int(k): (s, e) for k, s, e in zip(uniq, start, stop)}
    r2 = r * r
    out = []
    for k, (s, e) in lookup.items():
        cx, cy = divmod(k, ncell)
        a_idx = order[s:e]
        a_pts = points[a_idx]
        for dx, dy in _FORWARD_OFFSETS:
            nx_, ny_ = cx + dx, cy + dy
            if not (0 <= nx_ < ncell and 0 <= ny_ < ncell):
                continue
            hit = lookup.get(nx_ * ncell + ny_)
            if hit is None:
                continue
            b_idx = order[hit[0]:hit[1]]
            diff = a_pts[:, None, :] - points[b_idx][None, :, :]
            close = np.einsum("ijk,ijk->ij", diff, diff) <= r2
            ii, jj = np.nonzero(close)
            if dx == 0 and dy == 0:
                keep = ii < jj
                ii, jj = ii[keep], jj[keep]
            if len(ii):
                out.append(np.stack([a_idx[ii], b_idx[jj]], axis=1))
    if not out:
        return np.empty((0, 2), dtype=np.int64)
    pairs = np.concatenate(out)
    return np.sort(pairs, axis=1)


def build_graph(d: Deployment, m: FailureMask, r: float) -> GeomGraph:
    if r <= 0:
        raise InvalidParameterError(f"radius must be > 0, got {r}")
    nodes = np.flatnonzero(~m.faulty)
    local = pairs_within(d.positions[nodes], r)
    edges = nodes[local] if len(local) else np.empty((0, 2), dtype=np.int64)
    if len(edges):
        edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))]
    return GeomGraph(nodes, float(r), edges)


def is_connected_def1(d: Deployment, m: FailureMask, r: float) -> bool:
    if r <= 0:
        raise InvalidParameterError(f"radius must be > 0, got {r}")
    if d.n == 0:
        return True
    g = build_graph(d, m, r)
    if len(g.nodes) == 0:
        return False
    if g.n_components() != 1:
        return False
    dead = d.positions[m.faulty]
    if len(dead) == 0:
        return True
    dist, _ = cKDTree(d.positions[g.nodes]).query(dead)
    return bool(np.all(dist <= r))


def _mst_longest_edge(points: np.ndarray) -> float:
    m = len(points)
    if m < 2:
        return 0.0
    edges = None
    if m >= 3:
        try:
            simplices = Delaunay(points).simplices
            e = np.concatenate([simplices[:, [0, 1]], simplices[:, [1, 2]], simplices[:, [0, 2]]])
            edges = np.unique(np.sort(e, axis=1), axis=0)
        except QhullError:
            edges = None  # collinear input
    if edges is not None:
        w = np.linalg.norm(points[edges[:, 0]] - points[edges[:, 1]], axis=1)
        tree = minimum_spanning_tree(coo_matrix((w, (edges[:, 0], edges[:, 1])), shape=(m, m)))
        if tree.nnz == m - 1:
            return float(tree.data.max())
    tree = minimum_spanning_tree(squareform(pdist(points)))
    return float(tree.data.max()) if tree.nnz else 0.0


def connectivity_threshold(d: Deployment, m: FailureMask) -> float:
    """Smallest radius at which :func:`is_connected_def1` holds.

    This is the larger of the longest minimum-spanning-tree edge over the
    non-faulty nodes and the farthest faulty-to-nearest-survivor distance.
    Returns ``inf`` when every node has failed.
    """
    if d.n == 0:
        return 0.0
    alive = d.positions[~m.faulty]
    if len(alive) == 0:
        return math.inf
    span = _mst_longest_edge(alive)
    dead = d.positions[m.faulty]
    cover = float(cKDTree(alive).query(dead)[0].max()) if len(dead) else 0.0
    return max(span, cover)


def trial_thresholds(n: int, q: float, trials: int, seed: int) -> np.ndarray:
    """Per-trial connectivity thresholds; trial ``t`` uses ``SeedSpec(seed, t)``."""
    if trials < 1:
        raise InvalidParameterError(f"trials must be >= 1, got {trials}")
    out = np.empty(trials)
    for t in range(trials):
        spec = SeedSpec(seed, t)
        d = place_nodes(n, spec)
        out[t] = connectivity_threshold(d, sample_failures(d, q, spec))
    return out


def connectivity_probability(n: int, q: float, r: float, trials: int, seed: int) -> float:
    """Fraction of trials whose deployment is connected at radius ``r``.

    Trials share random numbers across ``r`` and ``q``, so the estimate is
    monotone in both.
    """
    th = trial_thresholds(n, q, trials, seed)
    return float(np.mean(th <= r))


def estimate_critical_radius(n: int, q: float, trials: int, target_prob: float, seed: int,
                             max_steps: int = 40, tol: float = 0.02) -> float:
    if not 0.0 < target_prob < 1.0:
        raise InvalidParameterError(f"target_prob must lie in (0, 1), got {target_prob}")
    th = trial_thresholds(n, q, trials, seed)

    def prob(r):
        return float(np.mean(th <= r))

    lo, hi = 0.0, SQRT2
    if prob(hi) < target_prob:
        raise NumericalError(f"connectivity at r=sqrt(2) is {prob(hi):.3f} < target {target_prob}")
    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        p = prob(mid)
        if abs(p - target_prob) <= tol:
            return mid
        if p >= target_prob:
            hi = mid
        else:
            lo = mid
    # Too few trials to resolve the target: the bracket has collapsed onto the
    # jump of the empirical curve, which is the crossing itself.
    if hi - lo > 1e-9:
        raise NumericalError(f"bisection did not converge after {max_steps} steps")
    return hi
