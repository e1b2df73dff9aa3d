"""Grayscale image I/O: portable graymaps (PGM) and PNG.

Internal processing is 8-bit grayscale normalized to [0, 1]; ridges are the
dark (low-valued) pixels.  PGM is read and written natively; PNG goes
through Pillow.  All writes are atomic (tmp file + rename).
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image


def atomic_write_bytes(path: str, data: bytes) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def read_gray(path: str) -> np.ndarray:
    """Load a grayscale image as float32 (H, W) in [0, 1]."""
    if path.lower().endswith((".pgm", ".pnm")):
        return read_pgm(path).astype(np.float32) / 255.0
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"), dtype=np.float32)
    return arr / 255.0


def write_gray(path: str, gray01: np.ndarray) -> None:
    """Save a float [0, 1] grayscale image as 8-bit PGM or PNG by extension."""
    arr = np.clip(np.round(gray01 * 255.0), 0, 255).astype(np.uint8)
    if path.lower().endswith((".pgm", ".pnm")):
        write_pgm(path, arr)
    else:
        write_png_gray(path, arr)


def read_pgm(path: str) -> np.ndarray:
    """Binary (P5) or ASCII (P2) portable graymap, maxval <= 255."""
    with open(path, "rb") as fh:
        data = fh.read()

    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4 and pos < len(data):
        # skip whitespace and '#' comment lines
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if pos > start:
            tokens.append(data[start:pos])
    if len(tokens) < 4 or tokens[0] not in (b"P5", b"P2"):
        raise ValueError(f"{path}: not a P2/P5 graymap")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if not 0 < maxval <= 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    if tokens[0] == b"P5":
        pos += 1  # single whitespace after maxval
        raster = data[pos : pos + width * height]
        if len(raster) != width * height:
            raise ValueError(f"{path}: truncated raster")
        return np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    values = data[pos:].split()
    if len(values) != width * height:
        raise ValueError(f"{path}: expected {width * height} values, got {len(values)}")
    return np.array([int(v) for v in values], dtype=np.uint8).reshape(height, width)


def write_pgm(path: str, gray: np.ndarray) -> None:
    if gray.dtype != np.uint8:
        raise ValueError(f"write_pgm expects uint8, got {gray.dtype}")
    h, w = gray.shape
    atomic_write_bytes(path, b"P5\n%d %d\n255\n" % (w, h) + gray.tobytes())


def write_mask_pgm(path: str, mask: np.ndarray) -> None:
    """Persist a binary mask as 0/255 graymap for inspection."""
    write_pgm(path, (mask.astype(np.uint8) * 255))


def write_png_gray(path: str, gray: np.ndarray) -> None:
    img = Image.fromarray(gray, mode="L")
    tmp = f"{path}.tmp.{os.getpid()}"
    img.save(tmp, format="PNG")
    os.replace(tmp, path)
