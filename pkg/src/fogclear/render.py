"""Grayscale heatmaps of single feature-map channels (binary PGM + CSV grid)."""

import numpy as np

from .errors import InvalidArgument
from .gamestate import GRID, N_CHANNELS, downsample_sum_8x8

MODES = ("raw32", "sum8")
SEPARATOR_PX = 2


def heatmap_grid(fmap, channel, mode="raw32"):
    """The numeric grid that a heatmap shows: the raw 32x32 channel or its 8x8 block sums."""
    if mode not in MODES:
        raise InvalidArgument(f"mode must be one of {MODES}, got {mode!r}")
    if not 0 <= channel < N_CHANNELS:
        raise InvalidArgument(f"channel must be in 0..{N_CHANNELS - 1}, got {channel}")
    fmap = np.asarray(fmap)
    if fmap.shape != (N_CHANNELS, GRID, GRID):
        raise InvalidArgument(f"feature map must be (66, 32, 32), got {fmap.shape}")
    if mode == "sum8":
        return downsample_sum_8x8(fmap, channel)
    return np.asarray(fmap[channel], dtype=np.float64)


def to_gray(grid):
    """Scale linearly so the grid maximum maps to 255; an all-zero grid stays black."""
    grid = np.clip(np.asarray(grid, dtype=np.float64), 0, None)
    peak = grid.max() if grid.size else 0.0
    if peak <= 0:
        return np.zeros(grid.shape, np.uint8)
    return np.round(grid / peak * 255.0).astype(np.uint8)


def render_heatmap(fmap, channel, mode="raw32"):
    """Returns ``(image uint8, grid float64)`` for one channel."""
    grid = heatmap_grid(fmap, channel, mode)
    return to_gray(grid), grid


def triptych(images):
    """Place equally sized panels side by side with white separators."""
    h = images[0].shape[0]
    if any(img.shape[0] != h for img in images):
        raise InvalidArgument("triptych panels must share a height")
    sep = np.full((h, SEPARATOR_PX), 255, np.uint8)
    parts = []
    for i, img in enumerate(images):
        if i:
            parts.append(sep)
        parts.append(img)
    return np.hstack(parts)


def pgm_bytes(image):
    image = np.asarray(image)
    if image.ndim != 2 or image.dtype != np.uint8:
        raise InvalidArgument("PGM images must be 2-D uint8 arrays")
    h, w = image.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + image.tobytes()


def write_pgm(path, image):
    with open(path, "wb") as fh:
        fh.write(pgm_bytes(image))


def read_pgm(path):
    """Reader for the exact layout :func:`pgm_bytes` writes."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, dims, maxval, rest = data.split(b"\n", 3)
    if magic != b"P5" or maxval != b"255":
        raise InvalidArgument("not an 8-bit binary PGM")
    w, h = (int(v) for v in dims.split())
    return np.frombuffer(rest, np.uint8, count=w * h).reshape(h, w)


def grid_csv(grid):
    """Comma-separated rows; integers print without a fractional part."""
    lines = []
    for row in np.asarray(grid, dtype=np.float64):
        lines.append(",".join(format(v, ".9g") for v in row))
    return "\n".join(lines) + "\n"
