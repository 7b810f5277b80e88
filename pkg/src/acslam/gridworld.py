"""Ternary occupancy grids, simulated range sensing, frame transforms and map metrics.

Grid convention: ``cells[row, col]`` with row 0 at the lowest y.  A world point
``(x, y)`` falls in ``row = floor((y - oy) / res)``, ``col = floor((x - ox) / res)``.
PGM files store the image top-down, so rows are flipped on read/write.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml
from scipy import ndimage

from .errors import DimensionMismatch, PoseInObstacle


class CellState(IntEnum):
    UNKNOWN = -1
    FREE = 0
    OCCUPIED = 1


UNKNOWN = int(CellState.UNKNOWN)
FREE = int(CellState.FREE)
OCCUPIED = int(CellState.OCCUPIED)

Point = tuple[float, float]
Cell = tuple[int, int]


@dataclass(eq=False)
class OccupancyGrid:
    """Row-major raster of :class:`CellState` values.

    ``origin`` is the world position of the lower-left corner of cell (0, 0).
    """

    cells: np.ndarray
    resolution: float
    origin: Point = (0.0, 0.0)
    _rows: list | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.int8)
        if self.cells.ndim != 2 or self.cells.shape[0] == 0 or self.cells.shape[1] == 0:
            raise ValueError(f"grid must be a non-empty 2-D array, got shape {self.cells.shape}")
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        bad = ~np.isin(self.cells, (UNKNOWN, FREE, OCCUPIED))
        if bad.any():
            raise ValueError("cells may only hold UNKNOWN, FREE or OCCUPIED")
        self.origin = (float(self.origin[0]), float(self.origin[1]))

    @classmethod
    def filled(cls, width: int, height: int, resolution: float, origin: Point = (0.0, 0.0),
               state: int = UNKNOWN) -> "OccupancyGrid":
        return cls(np.full((height, width), state, dtype=np.int8), resolution, origin)

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    def world_to_cell(self, x: float, y: float) -> Cell:
        return (math.floor((y - self.origin[1]) / self.resolution),
                math.floor((x - self.origin[0]) / self.resolution))

    def cell_center(self, row: int, col: int) -> Point:
        return (self.origin[0] + (col + 0.5) * self.resolution,
                self.origin[1] + (row + 0.5) * self.resolution)

    def in_bounds(self, row: int, col: int) -> bool:
        return 0 <= row < self.height and 0 <= col < self.width

    def contains(self, x: float, y: float) -> bool:
        return self.in_bounds(*self.world_to_cell(x, y))

    def state_at(self, x: float, y: float) -> int:
        r, c = self.world_to_cell(x, y)
        return int(self.cells[r, c])

    def copy(self) -> "OccupancyGrid":
        return OccupancyGrid(self.cells.copy(), self.resolution, self.origin)

    def with_origin(self, origin: Point) -> "OccupancyGrid":
        return OccupancyGrid(self.cells.copy(), self.resolution, origin)

    def same_geometry(self, other: "OccupancyGrid", tol: float = 1e-9) -> bool:
        return (self.shape == other.shape
                and abs(self.resolution - other.resolution) <= tol
                and abs(self.origin[0] - other.origin[0]) <= tol
                and abs(self.origin[1] - other.origin[1]) <= tol)

    def occupancy_rows(self) -> list:
        # Cached python lists for the per-cell ray walk; invalidated by integrate_scan.
        if self._rows is None:
            self._rows = (self.cells == OCCUPIED).tolist()
        return self._rows

    def invalidate(self) -> None:
        self._rows = None

    def __eq__(self, other):
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return self.same_geometry(other, tol=0.0) and np.array_equal(self.cells, other.cells)


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    a = (theta + math.pi) % (2.0 * math.pi) - math.pi
    return math.pi if a == -math.pi else a


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))

    @property
    def xy(self) -> Point:
        return (self.x, self.y)


@dataclass(frozen=True)
class Transform2D:
    """Planar rigid transform ``p -> R(rotation) p + translation``."""

    rotation: float = 0.0
    translation: Point = (0.0, 0.0)

    @classmethod
    def identity(cls) -> "Transform2D":
        return cls()

    def apply(self, p: Sequence[float]) -> Point:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        x, y = p[0], p[1]
        return (c * x - s * y + self.translation[0], s * x + c * y + self.translation[1])

    def apply_pose(self, pose: Pose2D) -> Pose2D:
        x, y = self.apply(pose.xy)
        return Pose2D(x, y, pose.theta + self.rotation)

    def inverse(self) -> "Transform2D":
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        tx, ty = self.translation
        return Transform2D(-self.rotation, (-(c * tx + s * ty), s * tx - c * ty))

    def compose(self, other: "Transform2D") -> "Transform2D":
        """Return ``self o other`` (apply ``other`` first)."""
        return Transform2D(self.rotation + other.rotation, self.apply(other.translation))

    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return np.array([[c, -s, self.translation[0]], [s, c, self.translation[1]], [0.0, 0.0, 1.0]])


def transform_point(T: Transform2D, p: Sequence[float]) -> Point:
    """Map a point from an agent frame into the merged-map frame."""
    return T.apply(p)


@dataclass(frozen=True)
class SensorParams:
    max_range: float = 4.0
    num_rays: int = 120
    field_of_view: float = 2.0 * math.pi

    def __post_init__(self):
        if not self.max_range > 0:
            raise ValueError("max_range must be positive")
        if self.num_rays < 1:
            raise ValueError("num_rays must be >= 1")
        if not self.field_of_view > 0:
            raise ValueError("field_of_view must be positive")

    def bearings(self, theta: float) -> list[float]:
        n = self.num_rays
        if n == 1:
            return [theta]
        if self.field_of_view >= 2.0 * math.pi - 1e-12:
            return [theta + 2.0 * math.pi * i / n for i in range(n)]
        half = self.field_of_view / 2.0
        return [theta - half + self.field_of_view * i / (n - 1) for i in range(n)]


_TIE = 1e-9


def cast_ray(truth: OccupancyGrid, x: float, y: float, angle: float,
             max_range: float) -> list[tuple[Cell, int]]:
    """Walk one ray with supercover stepping and return the observed cells in order.

    When the ray crosses a cell corner exactly, both side cells are visited;
    if either is occupied the ray stops there so nothing leaks diagonally.
    """
    occ = truth.occupancy_rows()
    res = truth.resolution
    gx = (x - truth.origin[0]) / res
    gy = (y - truth.origin[1]) / res
    col, row = math.floor(gx), math.floor(gy)
    h, w = truth.height, truth.width
    if not (0 <= row < h and 0 <= col < w):
        return []
    out: list[tuple[Cell, int]] = []
    if occ[row][col]:
        out.append(((row, col), OCCUPIED))
        return out
    out.append(((row, col), FREE))
    reach = max_range / res
    dx, dy = math.cos(angle), math.sin(angle)
    if abs(dx) < 1e-12:
        dx = 0.0
    if abs(dy) < 1e-12:
        dy = 0.0
    inf = math.inf
    if dx > 0:
        sx, tx, ddx = 1, (col + 1 - gx) / dx, 1.0 / dx
    elif dx < 0:
        sx, tx, ddx = -1, (gx - col) / -dx, -1.0 / dx
    else:
        sx, tx, ddx = 0, inf, inf
    if dy > 0:
        sy, ty, ddy = 1, (row + 1 - gy) / dy, 1.0 / dy
    elif dy < 0:
        sy, ty, ddy = -1, (gy - row) / -dy, -1.0 / dy
    else:
        sy, ty, ddy = 0, inf, inf

    while True:
        if tx < ty - _TIE:
            t = tx
            if t > reach:
                break
            col += sx
            tx += ddx
        elif ty < tx - _TIE:
            t = ty
            if t > reach:
                break
            row += sy
            ty += ddy
        else:
            t = tx
            if t > reach:
                break
            hit = False
            for r, c in ((row, col + sx), (row + sy, col)):
                if 0 <= r < h and 0 <= c < w:
                    if occ[r][c]:
                        out.append(((r, c), OCCUPIED))
                        hit = True
                    else:
                        out.append(((r, c), FREE))
            if hit:
                break
            col += sx
            row += sy
            tx += ddx
            ty += ddy
        if not (0 <= row < h and 0 <= col < w):
            break
        if occ[row][col]:
            out.append(((row, col), OCCUPIED))
            break
        out.append(((row, col), FREE))
    return out


def raycast_scan(truth: OccupancyGrid, pose: Pose2D, sp: SensorParams) -> list[tuple[Cell, int]]:
    """Simulate a range scan from ``pose`` against the ground-truth grid.

    Returns each observed cell once, in first-seen order.
    """
    if not truth.contains(pose.x, pose.y) or truth.state_at(pose.x, pose.y) != FREE:
        raise PoseInObstacle(f"pose ({pose.x:.3f}, {pose.y:.3f}) is not in a free cell")
    seen: dict[Cell, int] = {}
    for angle in sp.bearings(pose.theta):
        for cell, state in cast_ray(truth, pose.x, pose.y, angle, sp.max_range):
            if cell not in seen:
                seen[cell] = state
    return list(seen.items())


def integrate_scan(local: OccupancyGrid, observations: Iterable[tuple[Cell, int]]) -> OccupancyGrid:
    """Fold observations into ``local`` in place and return it.

    Occupied always wins; Free only overwrites Unknown.
    """
    obs = list(observations)
    if not obs:
        return local
    rows = np.fromiter((o[0][0] for o in obs), dtype=np.intp, count=len(obs))
    cols = np.fromiter((o[0][1] for o in obs), dtype=np.intp, count=len(obs))
    states = np.fromiter((o[1] for o in obs), dtype=np.int8, count=len(obs))
    if rows.min() < 0 or cols.min() < 0 or rows.max() >= local.height or cols.max() >= local.width:
        raise IndexError("observation outside the local map")
    cur = local.cells[rows, cols]
    new = np.where(states == OCCUPIED, OCCUPIED, np.where(cur == UNKNOWN, states, cur))
    local.cells[rows, cols] = new
    # Duplicate indices with mixed states: make sure Occupied survives the fancy assignment.
    occ = states == OCCUPIED
    if occ.any():
        local.cells[rows[occ], cols[occ]] = OCCUPIED
    local.invalidate()
    return local


def _snap(v: float) -> float:
    return round(v, 9) + 0.0


def merge_maps(maps: Sequence[OccupancyGrid], transforms: Sequence[Transform2D]) -> OccupancyGrid:
    """Merge agent maps into one grid spanning the union of their footprints.

    Precedence per cell: Occupied > Free > Unknown.  Merged cells are sampled at
    their centers, so rotated inputs are resampled nearest-cell.
    """
    if not maps:
        raise ValueError("need at least one map")
    if len(maps) != len(transforms):
        raise ValueError("one transform per map is required")
    res = maps[0].resolution
    xs, ys = [], []
    for m, T in zip(maps, transforms):
        ox, oy = m.origin
        for cx, cy in ((ox, oy), (ox + m.width * m.resolution, oy),
                       (ox, oy + m.height * m.resolution),
                       (ox + m.width * m.resolution, oy + m.height * m.resolution)):
            px, py = T.apply((cx, cy))
            xs.append(px)
            ys.append(py)
    x0, y0 = _snap(min(xs)), _snap(min(ys))

    def _extent(span: float) -> int:
        n = span / res
        return max(1, int(round(n)) if abs(n - round(n)) < 1e-6 else math.ceil(n))

    width, height = _extent(max(xs) - x0), _extent(max(ys) - y0)
    cx = x0 + (np.arange(width) + 0.5) * res
    cy = y0 + (np.arange(height) + 0.5) * res
    gx, gy = np.meshgrid(cx, cy)
    any_occ = np.zeros((height, width), dtype=bool)
    any_free = np.zeros((height, width), dtype=bool)
    for m, T in zip(maps, transforms):
        inv = T.inverse()
        c, s = math.cos(inv.rotation), math.sin(inv.rotation)
        lx = c * gx - s * gy + inv.translation[0]
        ly = s * gx + c * gy + inv.translation[1]
        cols = np.floor((lx - m.origin[0]) / m.resolution).astype(np.intp)
        rows = np.floor((ly - m.origin[1]) / m.resolution).astype(np.intp)
        ok = (rows >= 0) & (rows < m.height) & (cols >= 0) & (cols < m.width)
        vals = np.full((height, width), UNKNOWN, dtype=np.int8)
        vals[ok] = m.cells[rows[ok], cols[ok]]
        any_occ |= vals == OCCUPIED
        any_free |= vals == FREE
    cells = np.where(any_occ, OCCUPIED, np.where(any_free, FREE, UNKNOWN)).astype(np.int8)
    return OccupancyGrid(cells, res, (x0, y0))


def reachable_mask(truth: OccupancyGrid, seeds: Iterable[Point]) -> np.ndarray:
    """Free cells 4-connected to any seed, plus the occupied cells bordering them."""
    free = truth.cells == FREE
    labels, _ = ndimage.label(free)
    keep = set()
    for x, y in seeds:
        r, c = truth.world_to_cell(x, y)
        if truth.in_bounds(r, c) and labels[r, c] > 0:
            keep.add(int(labels[r, c]))
    region = np.isin(labels, sorted(keep)) if keep else np.zeros_like(free)
    border = ndimage.binary_dilation(region, structure=np.ones((3, 3), dtype=bool))
    return region | (border & (truth.cells == OCCUPIED))


def coverage_percent(grid: OccupancyGrid, truth: OccupancyGrid, reachable: np.ndarray | None = None) -> float:
    """Percentage of the (reachable) known truth cells that are known in ``grid``."""
    if grid.shape != truth.shape:
        raise DimensionMismatch(f"{grid.shape} vs {truth.shape}")
    target = truth.cells != UNKNOWN
    if reachable is not None:
        target = target & reachable
    total = int(target.sum())
    if total == 0:
        return 0.0
    found = int(((grid.cells != UNKNOWN) & target).sum())
    return 100.0 * found / total


def render(grid: OccupancyGrid) -> np.ndarray:
    """Grayscale intensity image: Occupied 0, Unknown 0.5, Free 1."""
    img = np.full(grid.shape, 0.5)
    img[grid.cells == FREE] = 1.0
    img[grid.cells == OCCUPIED] = 0.0
    return img


_SSIM_SIGMA = 1.5
_SSIM_TRUNCATE = 3.5  # radius 5 -> 11-pixel window


def ssim(a: np.ndarray, b: np.ndarray, data_range: float = 1.0) -> float:
    """Mean structural similarity with an 11x11 Gaussian window (sigma 1.5).

    Uses K1=0.01, K2=0.03 and population covariances; borders within the
    window radius are excluded from the mean when the image is large enough.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2

    def blur(img):
        return ndimage.gaussian_filter(img, sigma=_SSIM_SIGMA, truncate=_SSIM_TRUNCATE, mode="reflect")

    ua, ub = blur(a), blur(b)
    vaa = blur(a * a) - ua * ua
    vbb = blur(b * b) - ub * ub
    vab = blur(a * b) - ua * ub
    smap = ((2 * ua * ub + c1) * (2 * vab + c2)) / ((ua * ua + ub * ub + c1) * (vaa + vbb + c2))
    pad = 5
    if smap.shape[0] > 2 * pad and smap.shape[1] > 2 * pad:
        smap = smap[pad:-pad, pad:-pad]
    return float(smap.mean())


def map_quality(grid: OccupancyGrid, truth: OccupancyGrid) -> tuple[float, float]:
    """Return ``(rmse, ssim)`` between the rendered map and the rendered truth."""
    if grid.shape != truth.shape:
        raise DimensionMismatch(f"{grid.shape} vs {truth.shape}")
    a, b = render(grid), render(truth)
    rmse = float(np.sqrt(np.mean((a - b) ** 2)))
    return rmse, ssim(a, b)


# -- PGM (P2) with a YAML sidecar -------------------------------------------------

PGM_VALUE = {UNKNOWN: 128, FREE: 255, OCCUPIED: 0}


def _pgm_tokens(text: str) -> list[str]:
    toks = []
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        toks.extend(line.split())
    return toks


def sidecar_path(path: str | Path) -> Path:
    return Path(path).with_suffix(".yaml")


def read_pgm(path: str | Path, resolution: float | None = None, origin: Point | None = None) -> OccupancyGrid:
    """Load an ASCII PGM map; resolution/origin come from the sidecar unless given."""
    path = Path(path)
    toks = _pgm_tokens(path.read_text())
    if not toks or toks[0] != "P2":
        raise ValueError(f"{path}: not an ASCII (P2) PGM file")
    width, height, maxval = int(toks[1]), int(toks[2]), int(toks[3])
    vals = np.array([int(t) for t in toks[4:4 + width * height]], dtype=np.int64)
    if vals.size != width * height:
        raise ValueError(f"{path}: expected {width * height} pixels, got {vals.size}")
    if maxval != 255:
        vals = np.rint(vals * (255.0 / maxval)).astype(np.int64)
    img = vals.reshape(height, width)[::-1]
    cells = np.full(img.shape, UNKNOWN, dtype=np.int8)
    cells[img < 100] = OCCUPIED
    cells[img > 200] = FREE
    side = sidecar_path(path)
    if (resolution is None or origin is None) and side.exists():
        meta = yaml.safe_load(side.read_text()) or {}
        if not isinstance(meta, dict) or "resolution" not in meta:
            raise ValueError(f"{side}: sidecar has no 'resolution' entry")
        if resolution is None:
            resolution = float(meta["resolution"])
        if origin is None:
            o = meta.get("origin", [0.0, 0.0])
            origin = (float(o[0]), float(o[1]))
    if resolution is None:
        raise ValueError(f"{path}: no resolution given and no sidecar {side.name}")
    return OccupancyGrid(cells, resolution, origin or (0.0, 0.0))


def write_pgm(grid: OccupancyGrid, path: str | Path) -> Path:
    """Write ``grid`` as P2 PGM plus sidecar metadata; output is byte-stable."""
    path = Path(path)
    img = np.vectorize(PGM_VALUE.__getitem__, otypes=[np.int64])(grid.cells)[::-1]
    lines = ["P2", f"{grid.width} {grid.height}", "255"]
    lines.extend(" ".join(str(v) for v in row) for row in img)
    path.write_text("\n".join(lines) + "\n")
    side = sidecar_path(path)
    side.write_text(
        f"image: {path.name}\n"
        f"resolution: {grid.resolution!r}\n"
        f"origin: [{grid.origin[0]!r}, {grid.origin[1]!r}, 0.0]\n"
    )
    return path
