"""Grid shortest paths over an inflated occupancy map.

Moves are 8-connected; a diagonal step needs both orthogonal neighbours to be
passable.  Entering a cell costs the step length (``res`` or ``sqrt(2) res``),
multiplied by ``c_unk`` when the cell is Unknown.  Cells within ``inflation``
of an Occupied cell are impassable, except the start cell.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import ndimage
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import NoPath, StartInObstacle
from .gridworld import OCCUPIED, UNKNOWN, OccupancyGrid, Point

SQRT2 = math.sqrt(2.0)

# scan order: E, N, W, S, NE, NW, SW, SE  (dr, dc)
NEIGHBOURS = ((0, 1), (1, 0), (0, -1), (-1, 0), (1, 1), (1, -1), (-1, -1), (-1, 1))


@dataclass(frozen=True)
class PlannerParams:
    inflation: float = 0.25
    c_unk: float = 2.0

    def __post_init__(self):
        if self.inflation < 0:
            raise ValueError("inflation must be non-negative")
        if self.c_unk < 1.0:
            raise ValueError("c_unk below 1 would break the admissible heuristic")


class Plan(NamedTuple):
    cells: list[tuple[int, int]]
    points: list[Point]
    cost: float


def inflate(grid: OccupancyGrid, inflation: float) -> np.ndarray:
    """Occupied cells dilated to every cell whose center is within ``inflation``."""
    occ = grid.cells == OCCUPIED
    k = int(math.floor(inflation / grid.resolution + 1e-9))
    if k <= 0 or not occ.any():
        return occ
    ii, jj = np.mgrid[-k:k + 1, -k:k + 1]
    disk = (ii * ii + jj * jj) * grid.resolution ** 2 <= inflation * inflation + 1e-9
    return ndimage.binary_dilation(occ, structure=disk)


def _start_cell(grid: OccupancyGrid, start: Sequence[float]) -> tuple[int, int]:
    r, c = grid.world_to_cell(start[0], start[1])
    if not grid.in_bounds(r, c) or grid.cells[r, c] == OCCUPIED:
        raise StartInObstacle(f"start ({start[0]:.3f}, {start[1]:.3f}) is not traversable")
    return r, c


def passable_mask(grid: OccupancyGrid, params: PlannerParams, start_cell: tuple[int, int] | None = None) -> np.ndarray:
    ok = ~inflate(grid, params.inflation)
    if start_cell is not None:
        ok[start_cell] = True
    return ok


def plan(grid: OccupancyGrid, start: Sequence[float], goal: Sequence[float],
         params: PlannerParams = PlannerParams()) -> Plan:
    """A* with an octile heuristic; ties resolve in neighbour-scan / push order."""
    sr, sc = _start_cell(grid, start)
    gr, gc = grid.world_to_cell(goal[0], goal[1])
    if not grid.in_bounds(gr, gc):
        raise NoPath("goal outside the map")
    ok = passable_mask(grid, params, (sr, sc))
    if not ok[gr, gc]:
        raise NoPath("goal cell is blocked")
    h, w = grid.shape
    res = grid.resolution
    okl = ok.ravel().tolist()
    mult = np.where(grid.cells == UNKNOWN, params.c_unk, 1.0).ravel().tolist()
    start, target = sr * w + sc, gr * w + gc
    straight, diag = res, SQRT2 * res

    def heuristic(idx):
        dr, dc = abs(idx // w - gr), abs(idx % w - gc)
        lo, hi = (dr, dc) if dr < dc else (dc, dr)
        return (hi - lo) * straight + lo * diag

    g = {start: 0.0}
    parent = {start: -1}
    closed = set()
    seq = 0
    heap = [(heuristic(start), seq, start)]
    while heap:
        _, _, u = heapq.heappop(heap)
        if u in closed:
            continue
        if u == target:
            break
        closed.add(u)
        ur, uc = divmod(u, w)
        gu = g[u]
        for dr, dc in NEIGHBOURS:
            vr, vc = ur + dr, uc + dc
            if not (0 <= vr < h and 0 <= vc < w):
                continue
            v = vr * w + vc
            if not okl[v] or v in closed:
                continue
            if dr and dc:
                if not (okl[ur * w + vc] and okl[vr * w + uc]):
                    continue
                step = diag
            else:
                step = straight
            cand = gu + step * mult[v]
            if cand < g.get(v, math.inf) - 1e-12:
                g[v] = cand
                parent[v] = u
                seq += 1
                heapq.heappush(heap, (cand + heuristic(v), seq, v))
    if target not in g:
        raise NoPath(f"no path from {(sr, sc)} to {(gr, gc)}")
    cells = []
    v = target
    while v != -1:
        cells.append(divmod(v, w))
        v = parent[v]
    cells.reverse()
    return Plan(cells, [grid.cell_center(r, c) for r, c in cells], g[target])


def plan_path(grid: OccupancyGrid, start: Sequence[float], goal: Sequence[float],
              params: PlannerParams = PlannerParams()) -> list[Point]:
    return plan(grid, start, goal, params).points


def cost_graph(grid: OccupancyGrid, ok: np.ndarray, params: PlannerParams) -> csr_matrix:
    """Directed sparse graph of legal moves weighted like :func:`plan`."""
    h, w = grid.shape
    idx = np.arange(h * w).reshape(h, w)
    mult = np.where(grid.cells == UNKNOWN, params.c_unk, 1.0)
    src, dst, wts = [], [], []
    for dr, dc in NEIGHBOURS:
        r0, r1 = max(0, -dr), h - max(0, dr)
        c0, c1 = max(0, -dc), w - max(0, dc)
        a = (slice(r0, r1), slice(c0, c1))
        b = (slice(r0 + dr, r1 + dr), slice(c0 + dc, c1 + dc))
        valid = ok[a] & ok[b]
        step = grid.resolution
        if dr and dc:
            valid &= ok[(slice(r0, r1), slice(c0 + dc, c1 + dc))] & ok[(slice(r0 + dr, r1 + dr), slice(c0, c1))]
            step *= SQRT2
        src.append(idx[a][valid])
        dst.append(idx[b][valid])
        wts.append(step * mult[b][valid])
    return csr_matrix((np.concatenate(wts), (np.concatenate(src), np.concatenate(dst))), shape=(h * w, h * w))


def distance_field(grid: OccupancyGrid, start: Sequence[float],
                   params: PlannerParams = PlannerParams()) -> np.ndarray:
    """Planner cost from ``start`` to every cell (``inf`` where unreachable)."""
    sr, sc = _start_cell(grid, start)
    ok = passable_mask(grid, params, (sr, sc))
    dist = dijkstra(cost_graph(grid, ok, params), directed=True, indices=sr * grid.width + sc)
    return dist.reshape(grid.shape)


def path_length(points: Sequence[Point]) -> float:
    return sum(math.dist(a, b) for a, b in zip(points, points[1:]))
