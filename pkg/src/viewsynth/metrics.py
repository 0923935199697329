"""Full-reference image quality metrics (unit dynamic range)."""

from __future__ import annotations

import cv2
import numpy as np

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


def psnr(a: np.ndarray, b: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Peak signal-to-noise ratio in dB over [0, 1] images, channels averaged.

    mask optionally restricts the error to selected pixels. Identical
    inputs return +inf.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"size mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != a.shape[:2]:
            raise ValueError("mask size mismatch")
        if not mask.any():
            raise ValueError("empty mask")
        diff = diff[mask]
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity with the standard 11x11 Gaussian window
    (sigma 1.5, K1=0.01, K2=0.03, dynamic range 1), averaged over channels.
    Window statistics are evaluated on the interior region only, so borders
    never see padded values.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"size mismatch: {a.shape} vs {b.shape}")
    if min(a.shape[0], a.shape[1]) < _SSIM_WINDOW:
        raise ValueError(f"images must be at least {_SSIM_WINDOW} pixels on a side")
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]

    c1 = _SSIM_K1 ** 2
    c2 = _SSIM_K2 ** 2
    r = _SSIM_WINDOW // 2

    def blur(img):
        return cv2.GaussianBlur(img, (_SSIM_WINDOW, _SSIM_WINDOW), _SSIM_SIGMA)

    scores = []
    for ch in range(a.shape[2]):
        x = a[:, :, ch]
        y = b[:, :, ch]
        mu_x = blur(x)
        mu_y = blur(y)
        sigma_x = blur(x * x) - mu_x * mu_x
        sigma_y = blur(y * y) - mu_y * mu_y
        sigma_xy = blur(x * y) - mu_x * mu_y
        ssim_map = ((2 * mu_x * mu_y + c1) * (2 * sigma_xy + c2)) / \
                   ((mu_x * mu_x + mu_y * mu_y + c1) * (sigma_x + sigma_y + c2))
        scores.append(float(ssim_map[r:-r, r:-r].mean()))
    return float(np.mean(scores))
