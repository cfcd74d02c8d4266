"""Cell-level multi-hop routing along source-destination lines.

Each flow follows the 4-connected chain of cells its straight S-D segment
crosses. An empty cell on that chain (no non-faulty relay) is bypassed by a
breadth-first detour kept within a few cells of the line; when the local
detour fails, the flow falls back to a shortest path over all non-empty
cells.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .deployment import Deployment, FlowSet
from .errors import InvalidParameterError, RoutingError, UndefinedRateError
from .percolation import CellGrid
from .scheduling import MacParams

DETOUR_REACH = 4  # lateral cells a local detour may stray from the line

_STEPS = ((1, 0), (-1, 0), (0, 1), (0, -1))


@dataclass(frozen=True, eq=False)
class Route:
    flow_id: int
    cells: np.ndarray  # int (L, 2)
    rerouted: bool = False

    @property
    def hops(self) -> int:
        return len(self.cells) - 1


@dataclass(frozen=True, eq=False)
class LoadMap:
    counts: np.ndarray  # int (k, k): routes crossing each cell

    @property
    def max_load(self) -> int:
        return int(self.counts.max()) if self.counts.size else 0

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def _cell_index(v: float, a: float, k: int) -> int:
    return min(max(int(math.floor(v / a)), 0), k - 1)


def cells_on_segment(src, dst, g: CellGrid) -> list[tuple[int, int]]:
    """Cells crossed by the segment ``src -> dst`` as a 4-connected chain.

    When the segment passes exactly through a cell corner, the horizontal
    neighbour is inserted before the vertical one.
    """
    a, k = g.a, g.k
    x0, y0 = float(src[0]), float(src[1])
    x1, y1 = float(dst[0]), float(dst[1])
    i, j = _cell_index(x0, a, k), _cell_index(y0, a, k)
    i1, j1 = _cell_index(x1, a, k), _cell_index(y1, a, k)
    dx, dy = x1 - x0, y1 - y0
    si = 1 if i1 > i else -1
    sj = 1 if j1 > j else -1
    nx_, ny_ = abs(i1 - i), abs(j1 - j)

    def first_crossing(p, d, c, s):
        if d == 0:
            return math.inf, math.inf
        edge = (c + 1) * a if s > 0 else c * a
        return (edge - p) / d, a / abs(d)

    tx, step_x = first_crossing(x0, dx, i, si)
    ty, step_y = first_crossing(y0, dy, j, sj)
    out = [(i, j)]
    while nx_ or ny_:
        if nx_ and (not ny_ or tx <= ty):
            i += si
            nx_ -= 1
            tx += step_x
        else:
            j += sj
            ny_ -= 1
            ty += step_y
        out.append((i, j))
    return out


def _segment_distance(px, py, src, dst) -> np.ndarray:
    sx, sy = src
    vx, vy = dst[0] - sx, dst[1] - sy
    L2 = vx * vx + vy * vy
    if L2 == 0:
        return np.hypot(px - sx, py - sy)
    t = np.clip(((px - sx) * vx + (py - sy) * vy) / L2, 0.0, 1.0)
    return np.hypot(px - (sx + t * vx), py - (sy + t * vy))


def _bfs(start, goal, allowed: np.ndarray, rank: np.ndarray):
    """Shortest 4-neighbour path over ``allowed`` cells, expanding low ``rank`` first."""
    k = allowed.shape[0]
    prev = {start: None}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        if cur == goal:
            path = []
            while cur is not None:
                path.append(cur)
                cur = prev[cur]
            return path[::-1]
        nbrs = []
        for di, dj in _STEPS:
            ni, nj = cur[0] + di, cur[1] + dj
            if 0 <= ni < k and 0 <= nj < k and allowed[ni, nj] and (ni, nj) not in prev:
                nbrs.append((rank[ni, nj], ni * k + nj, (ni, nj)))
        for _, _, nb in sorted(nbrs):
            prev[nb] = cur
            queue.append(nb)
    return None


def _drop_loops(cells: list) -> list:
    out, seen = [], {}
    for c in cells:
        if c in seen:
            cut = seen[c]
            for dropped in out[cut + 1:]:
                del seen[dropped]
            out = out[:cut + 1]
        else:
            seen[c] = len(out)
            out.append(c)
    return out


class _Ranker:
    """Lazily computed per-cell distance from each cell centre to one segment."""

    def __init__(self, g: CellGrid, src, dst):
        self.g, self.src, self.dst = g, src, dst
        self._rank = None

    def __call__(self) -> np.ndarray:
        if self._rank is None:
            g = self.g
            edges = np.minimum(np.arange(g.k + 1) * g.a, 1.0)
            mid = 0.5 * (edges[:-1] + edges[1:])
            px, py = np.meshgrid(mid, mid, indexing="ij")
            self._rank = _segment_distance(px, py, self.src, self.dst)
        return self._rank


def route_flow(g: CellGrid, src, dst, flow_id: int = 0, policy: str = "lateral") -> Route:
    """Route one flow from point ``src`` to point ``dst`` over non-empty cells.

    ``policy="lateral"`` follows the S-D line and detours locally around empty
    cells; ``policy="shortest"`` ignores the line and takes a shortest path
    over non-empty cells.
    """
    occ = g.occupied
    line = cells_on_segment(src, dst, g)
    if not (occ[line[0]] and occ[line[-1]]):
        raise RoutingError(flow_id, f"flow {flow_id}: endpoint cell holds no live node")
    ranker = _Ranker(g, src, dst)
    if policy == "shortest":
        path = _bfs(line[0], line[-1], occ, ranker())
        if path is None:
            raise RoutingError(flow_id)
        return Route(flow_id, np.array(path, dtype=np.int64), path != line)
    if policy != "lateral":
        raise InvalidParameterError(f"unknown routing policy {policy!r}")
    if all(occ[c] for c in line):
        return Route(flow_id, np.array(line, dtype=np.int64), False)

    on_line = np.zeros_like(occ)
    for c in line:
        on_line[c] = True
    window = np.ones((2 * DETOUR_REACH + 1,) * 2, dtype=bool)
    corridor = ndimage.binary_dilation(on_line, structure=window) & occ

    route = [line[0]]
    t = 1
    while t < len(line):
        c = line[t]
        if occ[c]:
            route.append(c)
            t += 1
            continue
        u = t + 1
        while not occ[line[u]]:
            u += 1
        path = _bfs(route[-1], line[u], corridor, ranker())
        if path is None:
            path = _bfs(route[-1], line[-1], occ, ranker())
            if path is None:
                raise RoutingError(flow_id)
            route.extend(path[1:])
            break
        route.extend(path[1:])
        t = u + 1
    return Route(flow_id, np.array(_drop_loops(route), dtype=np.int64), True)


def route_flows(g: CellGrid, d: Deployment, flows: FlowSet, policy: str = "lateral"):
    """Route every flow; returns ``(routes, failed_flow_ids)``."""
    routes, failed = [], []
    pos = d.positions
    for fid, (s, t) in enumerate(flows.pairs):
        try:
            routes.append(route_flow(g, pos[s], pos[t], fid, policy))
        except RoutingError as exc:
            failed.append(exc.flow_id)
    return routes, failed


def cell_loads(routes, g: CellGrid) -> LoadMap:
    counts = np.zeros((g.k, g.k), dtype=np.int64)
    for rt in routes:
        cells = np.unique(rt.cells, axis=0)
        counts[cells[:, 0], cells[:, 1]] += 1
    return LoadMap(counts)


def achieved_rate(loads: LoadMap, mac: MacParams, M: int) -> float:
    """Per-flow rate ``W / (M^2 max_j Y_j)``: the busiest cell is served once per
    ``M^2`` slots and splits that slot evenly among its flows."""
    peak = loads.max_load
    if peak < 1:
        raise UndefinedRateError("no cell carries any route")
    return mac.W / (M * M * peak)


def measure_delay(routes, slot_time: float = 1.0) -> float:
    """Mean hop count times the per-hop slot time."""
    if len(routes) == 0:
        raise InvalidParameterError("no routes to average over")
    return slot_time * float(np.mean([rt.hops for rt in routes]))
