"""Bilinear image sampling shared by cost volumes, rendering, and patches.

Implemented in plain numpy (not cv2.remap) so results are bit-reproducible
and identical between the fast paths and the brute-force test oracles.
"""

from __future__ import annotations

import numpy as np


def in_bounds(x: np.ndarray, y: np.ndarray, width: int, height: int) -> np.ndarray:
    """True where (x, y) lies inside the sampleable image domain
    [0, width-1] x [0, height-1]."""
    return (x >= 0.0) & (x <= width - 1.0) & (y >= 0.0) & (y <= height - 1.0)


def bilinear_sample(image: np.ndarray, x: np.ndarray, y: np.ndarray):
    """Sample `image` (h, w) or (h, w, c) at continuous coordinates.

    Out-of-bounds samples are clamped to the border but reported invalid in
    the returned mask; callers decide whether to use or discard them.

    Returns (values, valid) where values has shape x.shape (+ (c,)) and
    valid is boolean with x.shape.
    """
    h, w = image.shape[:2]
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    valid = in_bounds(x, y, w, h)

    xc = np.clip(x, 0.0, w - 1.0)
    yc = np.clip(y, 0.0, h - 1.0)
    x0 = np.floor(xc).astype(np.intp)
    y0 = np.floor(yc).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xc - x0
    fy = yc - y0

    if image.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    img = image.astype(np.float64, copy=False)
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    values = top * (1.0 - fy) + bot * fy
    return values, valid


def round_half_up(x: np.ndarray) -> np.ndarray:
    """Round to nearest integer with exact .5 going toward +inf."""
    return np.floor(np.asarray(x) + 0.5).astype(np.int64)
