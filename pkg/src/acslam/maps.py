"""Bundled ground-truth maps.

``office``: 25 m x 25 m, three horizontal bands of rooms joined by two
corridors and a central spine.  ``ward``: 25 m x 20 m, one long hallway lined
with small patient rooms plus a day room.  Both are drawn procedurally and
stored as PGM under ``acslam/maps``.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from .gridworld import FREE, OCCUPIED, OccupancyGrid, read_pgm, write_pgm

RESOLUTION = 0.25


class _Canvas:
    def __init__(self, width: int, height: int):
        self.c = np.full((height, width), FREE, dtype=np.int8)
        self.c[0, :] = self.c[-1, :] = OCCUPIED
        self.c[:, 0] = self.c[:, -1] = OCCUPIED

    def hwall(self, row, c0, c1):
        self.c[row, c0:c1 + 1] = OCCUPIED

    def vwall(self, col, r0, r1):
        self.c[r0:r1 + 1, col] = OCCUPIED

    def block(self, r0, r1, c0, c1):
        self.c[r0:r1 + 1, c0:c1 + 1] = OCCUPIED

    def door_h(self, row, c0, width=5):
        self.c[row, c0:c0 + width] = FREE

    def door_v(self, col, r0, width=5):
        self.c[r0:r0 + width, col] = FREE

    def grid(self) -> OccupancyGrid:
        return OccupancyGrid(self.c.copy(), RESOLUTION, (0.0, 0.0))


def build_office() -> OccupancyGrid:
    cv = _Canvas(100, 100)
    # corridor walls: lower corridor rows 30..37, upper corridor rows 62..69, spine cols 46..53
    for row in (29, 38, 61, 70):
        cv.hwall(row, 0, 99)
    for col in (45, 54):
        cv.vwall(col, 0, 99)
    # reopen the corridors where they cross the spine
    cv.c[30:38, 45] = cv.c[30:38, 54] = FREE
    cv.c[62:70, 45] = cv.c[62:70, 54] = FREE
    cv.c[29, 46:54] = cv.c[38, 46:54] = cv.c[61, 46:54] = cv.c[70, 46:54] = FREE
    # split each band half into two rooms
    for col in (22, 77):
        cv.vwall(col, 0, 29)
        cv.vwall(col, 38, 61)
        cv.vwall(col, 70, 99)
    # doors from rooms to corridors
    for c0 in (9, 32, 62, 86):
        cv.door_h(29, c0)
        cv.door_h(70, c0)
    for c0 in (9, 62):
        cv.door_h(38, c0)
    for c0 in (32, 86):
        cv.door_h(61, c0)
    # bottom and top rooms also open onto the spine
    cv.door_v(45, 12)
    cv.door_v(54, 84)
    # furniture
    cv.block(10, 16, 8, 13)
    cv.block(45, 50, 30, 36)
    cv.block(80, 86, 62, 68)
    cv.block(48, 52, 84, 90)
    cv.block(14, 18, 64, 72)
    return cv.grid()


def build_ward() -> OccupancyGrid:
    cv = _Canvas(100, 80)
    # hallway rows 36..43 along the whole width
    cv.hwall(35, 0, 99)
    cv.hwall(44, 0, 99)
    # patient rooms: 11 cells wide on both sides, day room at the east end
    for col in range(12, 85, 12):
        cv.vwall(col, 0, 35)
        cv.vwall(col, 44, 79)
    for c0 in range(3, 98, 12):
        cv.door_h(35, c0, width=4)
        cv.door_h(44, c0, width=4)
    # inner partitions: each patient room has a bathroom alcove
    for col in range(6, 85, 12):
        cv.hwall(10, col - 2, col + 2)
        cv.hwall(69, col - 2, col + 2)
    cv.block(55, 60, 90, 94)
    cv.block(18, 22, 88, 95)
    return cv.grid()


BUILDERS = {"office": build_office, "ward": build_ward}


def builtin_path(name: str) -> Path:
    return Path(str(resources.files("acslam") / "maps" / f"{name}.pgm"))


def load_builtin(name: str) -> OccupancyGrid:
    if name not in BUILDERS:
        raise KeyError(f"unknown bundled map {name!r}; have {sorted(BUILDERS)}")
    path = builtin_path(name)
    if path.exists():
        return read_pgm(path)
    return BUILDERS[name]()


def regenerate(directory: str | Path | None = None) -> list[Path]:
    """Rewrite the bundled PGM files from the builders."""
    directory = Path(directory) if directory else builtin_path("office").parent
    directory.mkdir(parents=True, exist_ok=True)
    return [write_pgm(build(), directory / f"{name}.pgm") for name, build in BUILDERS.items()]
