"""Blob localization: threshold, label connected components, filter by area.

The detector turns a probability map into at most two points per type:
blobs with area outside [min_area, max_area] are dropped, surviving blob
centroids (rounded to integer pixels) become points, and if three or more
blobs survive the whole result is discarded as too noisy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .labels import SingularPoint


@dataclass
class BlobParams:
    threshold: float = 0.5
    min_area: int = 100
    max_area: int = 800
    connectivity: int = 8
    max_points_per_type: int = 2

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must be in (0, 1), got {self.threshold}")
        if not 0 < self.min_area <= self.max_area:
            raise ValueError(f"need 0 < min_area <= max_area, got [{self.min_area}, {self.max_area}]")
        if self.connectivity not in (4, 8):
            raise ValueError(f"connectivity must be 4 or 8, got {self.connectivity}")


@dataclass(frozen=True)
class Blob:
    label_id: int
    area: int
    centroid: tuple[float, float]  # (x, y)
    bbox: tuple[int, int, int, int]  # (x0, y0, x1, y1) inclusive


def binarize(prob_map: np.ndarray, threshold: float) -> np.ndarray:
    """Foreground where value >= threshold."""
    return (prob_map >= threshold).astype(np.uint8)


def label_components(mask: np.ndarray, connectivity: int = 8) -> tuple[np.ndarray, list[Blob]]:
    """Two-pass union-find connected-component labeling.

    Labels are assigned in raster order starting from 1; 0 is background.
    Blob centroids are the arithmetic means of member pixel coordinates.
    """
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    h, w = mask.shape
    labels = np.zeros((h, w), dtype=np.int32)
    parent = [0]

    def find(a: int) -> int:
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    next_label = 1
    fg = mask != 0
    for y in range(h):
        row = fg[y]
        lab_row = labels[y]
        lab_up = labels[y - 1] if y else None
        for x in range(w):
            if not row[x]:
                continue
            best = 0
            if x and lab_row[x - 1]:
                best = find(lab_row[x - 1])
            if lab_up is not None:
                if lab_up[x]:
                    n = find(lab_up[x])
                    best = n if not best else min(best, n)
                if connectivity == 8:
                    if x and lab_up[x - 1]:
                        n = find(lab_up[x - 1])
                        best = n if not best else min(best, n)
                    if x + 1 < w and lab_up[x + 1]:
                        n = find(lab_up[x + 1])
                        best = n if not best else min(best, n)
            if not best:
                parent.append(next_label)
                lab_row[x] = next_label
                next_label += 1
                continue
            lab_row[x] = best
            if x and lab_row[x - 1]:
                parent[find(lab_row[x - 1])] = best
            if lab_up is not None:
                if lab_up[x]:
                    parent[find(lab_up[x])] = best
                if connectivity == 8:
                    if x and lab_up[x - 1]:
                        parent[find(lab_up[x - 1])] = best
                    if x + 1 < w and lab_up[x + 1]:
                        parent[find(lab_up[x + 1])] = best

    # resolve provisional labels, renumbering in raster order of first appearance
    roots = np.array([find(i) for i in range(next_label)], dtype=np.int32)
    flat_roots = roots[labels.ravel()]
    nz = np.flatnonzero(flat_roots)
    remap = np.zeros(next_label, dtype=np.int32)
    n_blobs = 0
    if nz.size:
        vals, first = np.unique(flat_roots[nz], return_index=True)
        n_blobs = len(vals)
        remap[vals[np.argsort(first)]] = np.arange(1, n_blobs + 1)
    labels = remap[roots[labels]]

    blobs: list[Blob] = []
    if n_blobs:
        ys, xs = np.nonzero(labels)
        ids = labels[ys, xs]
        areas = np.bincount(ids, minlength=n_blobs + 1)
        sum_x = np.bincount(ids, weights=xs, minlength=n_blobs + 1)
        sum_y = np.bincount(ids, weights=ys, minlength=n_blobs + 1)
        min_x = np.full(n_blobs + 1, w, dtype=np.int64)
        min_y = np.full(n_blobs + 1, h, dtype=np.int64)
        max_x = np.zeros(n_blobs + 1, dtype=np.int64)
        max_y = np.zeros(n_blobs + 1, dtype=np.int64)
        np.minimum.at(min_x, ids, xs)
        np.minimum.at(min_y, ids, ys)
        np.maximum.at(max_x, ids, xs)
        np.maximum.at(max_y, ids, ys)
        for k in range(1, n_blobs + 1):
            a = int(areas[k])
            blobs.append(
                Blob(
                    label_id=k,
                    area=a,
                    centroid=(sum_x[k] / a, sum_y[k] / a),
                    bbox=(int(min_x[k]), int(min_y[k]), int(max_x[k]), int(max_y[k])),
                )
            )
    return labels, blobs


def _round_half_up(v: float) -> int:
    # centroids are non-negative, so half-up equals half-away-from-zero
    return int(math.floor(v + 0.5))


def detect_points(prob_map: np.ndarray, params: BlobParams, ptype: str) -> list[SingularPoint]:
    """Blobs surviving the area filter become points at their rounded
    centroids; three or more survivors mean the map is too noisy and the
    result for this type is empty."""
    mask = binarize(prob_map, params.threshold)
    _, blobs = label_components(mask, params.connectivity)
    keep = [b for b in blobs if params.min_area <= b.area <= params.max_area]
    if len(keep) > params.max_points_per_type:
        return []
    return [
        SingularPoint(_round_half_up(b.centroid[0]), _round_half_up(b.centroid[1]), ptype)
        for b in keep
    ]
