"""End-to-end inference: pad, forward, crop, localize points."""

from __future__ import annotations

import numpy as np

from .blobs import BlobParams, detect_points
from .labels import CORE, DELTA, SingularPoint
from .model import CoreDeltaNet, crop_output, pad_image
from .tensor import Tensor


def detect_image(
    model: CoreDeltaNet, gray: np.ndarray, params: BlobParams
) -> tuple[list[SingularPoint], np.ndarray, np.ndarray]:
    """Run the detector on one [0, 1] grayscale image.

    Returns (points, core probability map, delta probability map); the maps
    are cropped back to the original image dims.
    """
    if gray.ndim != 2:
        raise ValueError(f"expected a 2-d grayscale image, got shape {gray.shape}")
    padded, record = pad_image(gray, dtype=model.dtype)
    core_map, delta_map = model.forward(padded, training=False)
    core2d = crop_output(core_map, record).data[0, 0]
    delta2d = crop_output(delta_map, record).data[0, 0]
    points = detect_points(core2d, params, CORE) + detect_points(delta2d, params, DELTA)
    return points, core2d, delta2d
