"""Grayscale rendering of 361-dimensional data vectors as 19x19 PGM images."""
from __future__ import annotations

from pathlib import Path

import numpy as np

SIDE = 19


def to_pixels(x) -> np.ndarray:
    """Map each component through ``(tanh(2x/3) + 1) / 2`` onto 0..255, rounding halves up."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != SIDE * SIDE:
        raise ValueError(f"expected {SIDE * SIDE} components, got {x.size}")
    if np.any(np.isnan(x)):
        raise ValueError("cannot render nan components")
    level = 255.0 * 0.5 * (np.tanh(2.0 * x / 3.0) + 1.0)
    return np.floor(level + 0.5).astype(np.uint8).reshape(SIDE, SIDE)


def render_image(x, path) -> Path:
    """Write ``x`` as a binary (P5) PGM, row-major, maxval 255."""
    pixels = to_pixels(x)
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{SIDE} {SIDE}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    width, height = (int(v) for v in parts[1].split())
    if int(parts[2]) != 255:
        raise ValueError("only maxval 255 is supported")
    body = parts[3]
    if len(body) != width * height:
        raise ValueError("truncated PGM body")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width)


def center_index() -> int:
    """Flat index of the centre cell of the 19x19 grid."""
    return (SIDE // 2) * SIDE + SIDE // 2

