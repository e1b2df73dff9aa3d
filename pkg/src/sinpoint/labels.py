"""Ground-truth singular points, disk-mask rasterization, annotation files.

Coordinate convention used everywhere in this package: x is the column,
y is the row, origin at the top-left pixel, 0-indexed.

A point's label disk and the scorer's acceptance region are the same set:
pixels with squared distance to the point strictly below ACCEPT_RADIUS**2.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

ACCEPT_RADIUS = 10

CORE = "core"
DELTA = "delta"
POINT_TYPES = (CORE, DELTA)


@dataclass(frozen=True)
class SingularPoint:
    x: int
    y: int
    ptype: str

    def __post_init__(self):
        if self.ptype not in POINT_TYPES:
            raise ValueError(f"unknown point type {self.ptype!r}, expected one of {POINT_TYPES}")


@dataclass
class LabelMaskPair:
    core_mask: np.ndarray
    delta_mask: np.ndarray


def rasterize(points: list[SingularPoint], width: int, height: int) -> LabelMaskPair:
    """Draw a foreground disk of radius ACCEPT_RADIUS around every point.

    Disk membership is strict: (x-x0)^2 + (y-y0)^2 < ACCEPT_RADIUS^2.
    Disks are clipped at the borders; overlapping disks union.
    """
    core = np.zeros((height, width), dtype=np.uint8)
    delta = np.zeros((height, width), dtype=np.uint8)
    r = ACCEPT_RADIUS
    for p in points:
        if not (0 <= p.x < width and 0 <= p.y < height):
            raise ValueError(f"point ({p.x}, {p.y}) outside image bounds {width}x{height}")
        mask = core if p.ptype == CORE else delta
        y0, y1 = max(0, p.y - r + 1), min(height, p.y + r)
        x0, x1 = max(0, p.x - r + 1), min(width, p.x + r)
        yy, xx = np.mgrid[y0:y1, x0:x1]
        mask[y0:y1, x0:x1] |= ((xx - p.x) ** 2 + (yy - p.y) ** 2 < r * r).astype(np.uint8)
    return LabelMaskPair(core_mask=core, delta_mask=delta)


def load_annotations(path: str) -> list[SingularPoint]:
    """Parse the text annotation format: one `<x> <y> <core|delta>` per line.

    Blank lines and lines starting with '#' are ignored.
    """
    points: list[SingularPoint] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected '<x> <y> <type>', got {line!r}")
            try:
                x, y = int(parts[0]), int(parts[1])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-integer coordinates in {line!r}") from None
            if parts[2] not in POINT_TYPES:
                raise ValueError(f"{path}:{lineno}: unknown point type {parts[2]!r}")
            points.append(SingularPoint(x, y, parts[2]))
    return points


def format_annotations(points: list[SingularPoint]) -> str:
    return "".join(f"{p.x} {p.y} {p.ptype}\n" for p in points)


def save_annotations(points: list[SingularPoint], path: str) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(format_annotations(points))
    os.replace(tmp, path)
