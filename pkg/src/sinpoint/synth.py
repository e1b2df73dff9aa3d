"""Synthetic ridge-pattern corpus for exercising the pipeline end to end.

Each image carries one core and one delta on a striped background: the core
is drawn as concentric sinusoidal ridges around its center, the delta as a
three-armed spiral junction, with seeded Gaussian noise on top.  Ridges are
dark, valleys bright.  These images make no claim to look like real
fingerprints; they exist so that training, detection, and scoring can run
as a deterministic closed loop at desk scale.
"""

from __future__ import annotations

import os

import numpy as np

from .imgio import write_gray
from .labels import CORE, DELTA, SingularPoint, save_annotations

RIDGE_PERIOD = 8.0
PATTERN_RADIUS = 20.0
BLEND_WIDTH = 6.0
MARGIN = 22
MIN_SEPARATION = 44


def synth_image(size: int, rng: np.random.Generator) -> tuple[np.ndarray, list[SingularPoint]]:
    """One (size x size) float32 image in [0, 1] plus its two annotations."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    theta = rng.uniform(0, np.pi)
    phase = rng.uniform(0, 2 * np.pi)
    base = np.cos(2 * np.pi * (xx * np.cos(theta) + yy * np.sin(theta)) / RIDGE_PERIOD + phase)

    if size < 2 * MARGIN + 8:
        raise ValueError(f"image size {size} too small for margin {MARGIN}")
    # keep the separation target reachable inside the margin box on small images
    min_sep = min(MIN_SEPARATION, size - 2 * MARGIN)
    while True:
        cx, cy = (int(v) for v in rng.integers(MARGIN, size - MARGIN, 2))
        dx, dy = (int(v) for v in rng.integers(MARGIN, size - MARGIN, 2))
        if (cx - dx) ** 2 + (cy - dy) ** 2 >= min_sep**2:
            break

    r_core = np.hypot(xx - cx, yy - cy)
    rings = np.cos(2 * np.pi * r_core / RIDGE_PERIOD)
    w_core = np.clip((PATTERN_RADIUS - r_core) / BLEND_WIDTH, 0, 1)

    r_delta = np.hypot(xx - dx, yy - dy)
    ang = np.arctan2(yy - dy, xx - dx)
    spiral3 = np.cos(2 * np.pi * r_delta / RIDGE_PERIOD + 3 * ang)
    w_delta = np.clip((PATTERN_RADIUS - r_delta) / BLEND_WIDTH, 0, 1)

    pattern = base * (1 - w_core) * (1 - w_delta) + rings * w_core + spiral3 * w_delta
    gray = 0.5 - 0.38 * pattern + rng.normal(0, 0.02, base.shape)
    points = [SingularPoint(cx, cy, CORE), SingularPoint(dx, dy, DELTA)]
    return np.clip(gray, 0, 1).astype(np.float32), points


def synth_corpus(count: int, seed: int, size: int, out_dir: str) -> str:
    """Write `count` images + annotations + a manifest; returns manifest path.

    Deterministic per seed: same seed, same bytes.
    """
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    lines = []
    for i in range(count):
        gray, points = synth_image(size, rng)
        img_name = f"synth_{i:03d}.pgm"
        ann_name = f"synth_{i:03d}.txt"
        write_gray(os.path.join(out_dir, img_name), gray)
        save_annotations(points, os.path.join(out_dir, ann_name))
        lines.append(f"{img_name}\t{ann_name}\n")
    manifest_path = os.path.join(out_dir, "manifest.tsv")
    tmp = f"{manifest_path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.writelines(lines)
    os.replace(tmp, manifest_path)
    return manifest_path
