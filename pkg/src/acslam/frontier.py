"""Frontier detection on local maps and unknown-fraction filtering on the merged map."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import OutOfBounds
from .gridworld import FREE, OCCUPIED, UNKNOWN, OccupancyGrid

_EIGHT = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class FrontierPoint:
    x: float
    y: float
    source_agent: int | None = None

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class FilterParams:
    """Frontier filter thresholds; adapted values persist between cycles."""

    rad: float = 1.0
    per_unk: float = 60.0
    min_pts: int = 0
    max_pts: int = 10
    rad_step: float = 0.25
    per_unk_step: float = 10.0
    max_adapt_iters: int = 8

    def __post_init__(self):
        if not self.rad > 0:
            raise ValueError("rad must be positive")
        if not 0.0 <= self.per_unk <= 100.0:
            raise ValueError("per_unk must lie in [0, 100]")
        if self.min_pts > self.max_pts:
            raise ValueError("min_pts must not exceed max_pts")
        if not (self.rad_step > 0 and self.per_unk_step > 0):
            raise ValueError("adaptation steps must be positive")
        if self.max_adapt_iters < 1:
            raise ValueError("max_adapt_iters must be >= 1")


def frontier_mask(grid: OccupancyGrid) -> np.ndarray:
    """Free cells with at least one 8-neighbour Unknown."""
    near_unknown = ndimage.binary_dilation(grid.cells == UNKNOWN, structure=_EIGHT)
    return (grid.cells == FREE) & near_unknown


def detect_frontiers(local: OccupancyGrid, agent: int | None = None) -> list[FrontierPoint]:
    """One representative per 8-connected frontier cluster.

    The representative is the cluster cell closest to the cluster centroid
    (ties go to the lowest (row, col)); output is ordered by the
    representative's (row, col).
    """
    mask = frontier_mask(local)
    labels, n = ndimage.label(mask, structure=_EIGHT)
    if n == 0:
        return []
    coords = np.argwhere(mask)  # row-major order
    lab = labels[coords[:, 0], coords[:, 1]]
    order = np.argsort(lab, kind="stable")
    coords, lab = coords[order], lab[order]
    bounds = np.flatnonzero(np.diff(lab)) + 1
    reps = []
    for group in np.split(coords, bounds):
        k = len(group)
        sr, sc = int(group[:, 0].sum()), int(group[:, 1].sum())
        # k^2 * squared distance to centroid, exact in integers
        d = (k * group[:, 0] - sr) ** 2 + (k * group[:, 1] - sc) ** 2
        r, c = group[int(np.argmin(d))]
        reps.append((int(r), int(c)))
    reps.sort()
    return [FrontierPoint(*local.cell_center(r, c), source_agent=agent) for r, c in reps]


def _disc_offsets(resolution: float, rad: float) -> np.ndarray:
    n = int(math.ceil(rad / resolution)) + 1
    ii, jj = np.mgrid[-n:n + 1, -n:n + 1]
    return np.stack([ii, jj], axis=-1).reshape(-1, 2)


def unknown_percentage(merged: OccupancyGrid, p: Sequence[float], rad: float) -> float:
    """Share of in-map cells whose centers lie within ``rad`` of ``p`` that are Unknown."""
    x, y = float(p[0]), float(p[1])
    r0, c0 = merged.world_to_cell(x, y)
    if not merged.in_bounds(r0, c0):
        raise OutOfBounds(f"point ({x}, {y}) outside the merged map")
    res = merged.resolution
    n = int(math.ceil(rad / res)) + 1
    rlo, rhi = max(0, r0 - n), min(merged.height, r0 + n + 1)
    clo, chi = max(0, c0 - n), min(merged.width, c0 + n + 1)
    cy = merged.origin[1] + (np.arange(rlo, rhi) + 0.5) * res
    cx = merged.origin[0] + (np.arange(clo, chi) + 0.5) * res
    inside = (cy[:, None] - y) ** 2 + (cx[None, :] - x) ** 2 <= rad * rad + 1e-9
    total = int(inside.sum())
    if total == 0:
        return 100.0 if merged.cells[r0, c0] == UNKNOWN else 0.0
    unk = int((merged.cells[rlo:rhi, clo:chi][inside] == UNKNOWN).sum())
    return 100.0 * unk / total


def filter_points(points: Sequence[FrontierPoint], merged: OccupancyGrid,
                  fp: FilterParams) -> list[FrontierPoint]:
    """Keep points whose neighbourhood is at least ``fp.per_unk`` percent Unknown.

    Points on Occupied merged cells or outside the merged map are dropped.
    """
    kept = []
    for pt in points:
        if not merged.contains(pt.x, pt.y):
            continue
        if merged.state_at(pt.x, pt.y) == OCCUPIED:
            continue
        if unknown_percentage(merged, pt.position, fp.rad) >= fp.per_unk:
            kept.append(pt)
    return kept


def adaptive_filter(points: Sequence[FrontierPoint], merged: OccupancyGrid,
                    fp: FilterParams) -> tuple[list[FrontierPoint], FilterParams]:
    """Filter, then widen RAD / lower PER_UNK until the count fits [min_pts, max_pts].

    At most ``fp.max_adapt_iters`` refilter passes run; the parameters used for
    the final pass are returned so the caller can carry them to the next cycle.
    """
    kept = filter_points(points, merged, fp)
    for _ in range(fp.max_adapt_iters):
        if len(kept) > fp.max_pts:
            fp = replace(fp, rad=fp.rad + fp.rad_step)
        elif len(kept) < fp.min_pts and fp.per_unk > 0.0:
            fp = replace(fp, per_unk=max(0.0, fp.per_unk - fp.per_unk_step))
        else:
            break
        kept = filter_points(points, merged, fp)
    return kept, fp
