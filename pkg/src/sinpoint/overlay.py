"""Render detections and ground truth on top of a grayscale image.

Ground-truth points get a plus marker and the 10-pixel acceptance circle;
detections get a diagonal cross.  Colors are configurable.  Points outside
the image are clipped with a warning.
"""

from __future__ import annotations

import warnings

import numpy as np
from PIL import Image, ImageDraw

from .labels import ACCEPT_RADIUS, SingularPoint

MARKER_ARM = 4


def render_overlay(
    gray01: np.ndarray,
    detections: list[SingularPoint],
    truth: list[SingularPoint],
    truth_color: tuple[int, int, int] = (255, 0, 0),
    det_color: tuple[int, int, int] = (0, 255, 0),
    circle_color: tuple[int, int, int] = (0, 0, 0),
) -> Image.Image:
    arr = np.clip(np.round(gray01 * 255.0), 0, 255).astype(np.uint8)
    img = Image.fromarray(arr, mode="L").convert("RGB")
    draw = ImageDraw.Draw(img)
    h, w = arr.shape

    def clip_point(p: SingularPoint) -> tuple[int, int]:
        x, y = p.x, p.y
        if not (0 <= x < w and 0 <= y < h):
            warnings.warn(f"point ({x}, {y}) outside {w}x{h} image, clipping marker")
            x = min(max(x, 0), w - 1)
            y = min(max(y, 0), h - 1)
        return x, y

    r = ACCEPT_RADIUS
    for p in truth:
        x, y = clip_point(p)
        draw.ellipse((x - r, y - r, x + r, y + r), outline=circle_color)
        draw.line((x - MARKER_ARM, y, x + MARKER_ARM, y), fill=truth_color)
        draw.line((x, y - MARKER_ARM, x, y + MARKER_ARM), fill=truth_color)
    for p in detections:
        x, y = clip_point(p)
        draw.line((x - MARKER_ARM, y - MARKER_ARM, x + MARKER_ARM, y + MARKER_ARM), fill=det_color)
        draw.line((x - MARKER_ARM, y + MARKER_ARM, x + MARKER_ARM, y - MARKER_ARM), fill=det_color)
    return img
