"""Depth probability volumes from posed images.

Pipeline: plane-sweep photoconsistency costs (windowed zero-mean normalized
cross-correlation against every other view) -> per-ray softmax -> guided
mean-field filtering. The volume semantics (one probability distribution
over disparity levels per pixel ray) are what downstream fusion and
rendering rely on; any front-end producing the same semantics can be
swapped in through the DPV1 file format.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import cv2
import numpy as np

from . import _crf
from .errors import (
    GuideMismatchError,
    InvalidCostsError,
    NoDepthSupportError,
    NoOverlapError,
)
from .geometry import Camera, DisparityRange
from .runtime import apply_thread_limit
from .sampling import bilinear_sample

_RAY_SUM_TOL = 1e-5
_VAR_EPS = 1e-10

DEFAULT_WINDOW = 7
DEFAULT_TEMPERATURE = 0.07
DEFAULT_THETA_ALPHA = 25.0
DEFAULT_THETA_BETA = 10.0
DEFAULT_MU = 5.0
DEFAULT_ITERATIONS = 5
DEFAULT_N_D = 100


@dataclass
class DepthProbabilityVolume:
    """Per-ray probability distributions over disparity levels.

    values has shape (height, width, n_d), float32, nonnegative, and every
    ray sums to 1 within 1e-5.
    """

    values: np.ndarray
    disparity_range: DisparityRange
    camera: Camera

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def n_d(self) -> int:
        return self.values.shape[2]

    def validate(self) -> None:
        if self.values.shape != (self.camera.height, self.camera.width,
                                 self.disparity_range.n_d):
            raise ValueError("volume shape does not match camera/range")
        if np.any(self.values < 0):
            raise ValueError("volume has negative entries")
        sums = self.values.sum(axis=2, dtype=np.float64)
        err = np.abs(sums - 1.0).max()
        if err > _RAY_SUM_TOL:
            raise ValueError(f"per-ray sums deviate from 1 by {err:.3e}")

    @classmethod
    def uniform(cls, camera: Camera, disparity_range: DisparityRange):
        values = np.full(
            (camera.height, camera.width, disparity_range.n_d),
            1.0 / disparity_range.n_d, dtype=np.float32,
        )
        return cls(values, disparity_range, camera)


def disparity_range_from_depth_percentiles(depths, n_d: int = DEFAULT_N_D) -> DisparityRange:
    """Disparity range spanning the bottom-2 to top-98 depth percentiles.

    d_min = 1 / (98th percentile), d_max = 1 / (2nd percentile), using
    linear-interpolation percentiles over the positive finite samples.
    """
    depths = np.asarray(depths, dtype=np.float64).ravel()
    depths = depths[np.isfinite(depths) & (depths > 0)]
    if depths.size == 0:
        raise NoDepthSupportError("no positive depth samples")
    if depths.size < 50:
        raise NoDepthSupportError(f"need at least 50 depth samples, got {depths.size}")
    far = np.percentile(depths, 98.0)
    near = np.percentile(depths, 2.0)
    return DisparityRange(d_min=1.0 / far, d_max=1.0 / near, n_d=n_d)


def _to_gray(image: np.ndarray) -> np.ndarray:
    return np.asarray(image, dtype=np.float64).mean(axis=2)


def _box_sum(arr: np.ndarray, window: int) -> np.ndarray:
    """Sum over a window x window neighborhood clipped to the image bounds."""
    return cv2.boxFilter(arr, ddepth=-1, ksize=(window, window),
                         normalize=False, borderType=cv2.BORDER_CONSTANT)


def build_cost_volume(reference_image, reference_camera: Camera, others,
                      disparity_range: DisparityRange,
                      window: int = DEFAULT_WINDOW) -> np.ndarray:
    """Plane-sweep matching costs for the reference view.

    cost(y, x, d) = mean over other views of (1 - ZNCC) between the window
    around (x, y) in the reference and the window backward-warped from the
    other view through the plane at disparity level d. Windows are clipped
    to image bounds; only pixels whose warp lands inside the other view
    enter the statistics. Zero-variance windows score correlation 0
    (cost 1), and views whose center sample is out of bounds are excluded
    from the mean. Pixels excluded by every view get the uninformative
    sentinel cost 1.0.
    """
    if not others:
        raise ValueError("need at least one other view")
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be odd and >= 1")
    h, w = reference_camera.height, reference_camera.width
    ref_gray = _to_gray(reference_image)
    n_d = disparity_range.n_d

    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    grid = np.stack([xs.ravel(), ys.ravel(), np.ones(h * w)], axis=0)

    cost_sum = np.zeros((h, w, n_d), dtype=np.float64)
    view_count = np.zeros((h, w, n_d), dtype=np.uint16)
    any_valid = False

    for other_image, other_camera in others:
        other_gray = _to_gray(other_image)
        r_rel = other_camera.rotation @ reference_camera.rotation.T
        t_rel = other_camera.translation - r_rel @ reference_camera.translation
        k_ref_inv = np.array(
            [[1.0 / reference_camera.fx, 0.0, -reference_camera.cx / reference_camera.fx],
             [0.0, 1.0 / reference_camera.fy, -reference_camera.cy / reference_camera.fy],
             [0.0, 0.0, 1.0]]
        )
        for d in range(n_d):
            disparity = disparity_range.levels[d]
            m = r_rel.copy()
            m[:, 2] += disparity * t_rel
            h_raw = other_camera.intrinsics @ m @ k_ref_inv
            mapped = h_raw @ grid
            z = mapped[2]
            with np.errstate(divide="ignore", invalid="ignore"):
                u = (mapped[0] / z).reshape(h, w)
                v = (mapped[1] / z).reshape(h, w)
            # Unnormalized third coordinate is d * depth-in-other-view, so its
            # sign rejects samples behind the other camera.
            in_front = (z > 0).reshape(h, w)
            warped, valid = bilinear_sample(other_gray, u, v)
            valid &= in_front
            if not valid.any():
                continue
            any_valid = True
            vmask = valid.astype(np.float64)
            warped = warped * vmask
            ref_masked = ref_gray * vmask

            n = _box_sum(vmask, window)
            sr = _box_sum(ref_masked, window)
            sw = _box_sum(warped, window)
            srr = _box_sum(ref_masked * ref_gray, window)
            sww = _box_sum(warped * warped, window)
            srw = _box_sum(ref_masked * warped, window)
            with np.errstate(divide="ignore", invalid="ignore"):
                mr = sr / n
                mw = sw / n
                cov = srw / n - mr * mw
                var_r = srr / n - mr * mr
                var_w = sww / n - mw * mw
                zncc = cov / np.sqrt(var_r * var_w)
            textured = (var_r > _VAR_EPS) & (var_w > _VAR_EPS) & (n > 0)
            zncc = np.clip(np.where(textured, zncc, 0.0), -1.0, 1.0)
            cost_sum[:, :, d] += np.where(valid, 1.0 - zncc, 0.0)
            view_count[:, :, d] += valid

    if not any_valid:
        raise NoOverlapError("no other view overlaps the reference frustum")
    with np.errstate(divide="ignore", invalid="ignore"):
        costs = cost_sum / view_count
    costs[view_count == 0] = 1.0
    return costs.astype(np.float32)


def costs_to_probabilities(costs: np.ndarray, temperature: float,
                           disparity_range: DisparityRange,
                           camera: Camera) -> DepthProbabilityVolume:
    """Per-ray softmax over -costs / temperature."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    costs = np.asarray(costs, dtype=np.float64)
    if not np.all(np.isfinite(costs)):
        raise InvalidCostsError("cost field contains non-finite values")
    logits = -costs / temperature
    logits -= logits.max(axis=2, keepdims=True)
    e = np.exp(logits)
    values = e / e.sum(axis=2, keepdims=True)
    return DepthProbabilityVolume(values.astype(np.float32), disparity_range, camera)


def crf_filter(volume: DepthProbabilityVolume, guide: np.ndarray,
               theta_alpha: float = DEFAULT_THETA_ALPHA,
               theta_beta: float = DEFAULT_THETA_BETA,
               mu: float = DEFAULT_MU,
               iterations: int = DEFAULT_ITERATIONS) -> DepthProbabilityVolume:
    """Edge-aware mean-field smoothing guided by an RGB image.

    Each iteration replaces each ray with a renormalized combination of its
    original distribution (unary) and the bilateral-weighted average of its
    neighbors' current distributions, weighted mu. Spatial stddev is
    theta_alpha pixels, color stddev theta_beta on the 0-255 scale; the
    window is truncated at 3 * theta_alpha.
    """
    guide = np.asarray(guide)
    if guide.shape[:2] != (volume.height, volume.width) or guide.ndim != 3 \
            or guide.shape[2] != 3:
        raise GuideMismatchError(
            f"guide shape {guide.shape} does not match volume "
            f"{volume.height}x{volume.width}"
        )
    if min(theta_alpha, theta_beta, mu) <= 0 or iterations < 1:
        raise ValueError("filter parameters must be positive")
    apply_thread_limit()
    filtered = _crf.mean_field_filter(
        np.ascontiguousarray(volume.values, dtype=np.float32),
        np.ascontiguousarray(guide * 255.0, dtype=np.float32),
        float(theta_alpha), float(theta_beta), float(mu), int(iterations),
    )
    return DepthProbabilityVolume(filtered, volume.disparity_range, volume.camera)


# ---------------------------------------------------------------------------
# DPV1 volume file format
# ---------------------------------------------------------------------------

def write_volume(path, volume: DepthProbabilityVolume) -> None:
    """Binary little-endian volume file, magic DPV1: u32 w, h, n_d; f64
    d_min, d_max; camera (9 f64 rotation row-major, 3 f64 translation,
    4 f64 fx fy cx cy); then h*w*n_d float32 values in (y, x, d) order."""
    cam = volume.camera
    with open(path, "wb") as f:
        f.write(b"DPV1")
        f.write(struct.pack("<III", volume.width, volume.height, volume.n_d))
        f.write(struct.pack("<dd", volume.disparity_range.d_min,
                            volume.disparity_range.d_max))
        f.write(np.ascontiguousarray(cam.rotation, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(cam.translation, dtype="<f8").tobytes())
        f.write(struct.pack("<dddd", cam.fx, cam.fy, cam.cx, cam.cy))
        f.write(np.ascontiguousarray(volume.values, dtype="<f4").tobytes())


def read_volume(path) -> DepthProbabilityVolume:
    with open(path, "rb") as f:
        if f.read(4) != b"DPV1":
            raise ValueError(f"not a DPV1 file: {path}")
        w, h, n_d = struct.unpack("<III", f.read(12))
        d_min, d_max = struct.unpack("<dd", f.read(16))
        rotation = np.frombuffer(f.read(72), dtype="<f8").reshape(3, 3)
        translation = np.frombuffer(f.read(24), dtype="<f8")
        fx, fy, cx, cy = struct.unpack("<dddd", f.read(32))
        data = np.frombuffer(f.read(), dtype="<f4")
    if data.size != h * w * n_d:
        raise ValueError(f"truncated DPV1 file: {path}")
    camera = Camera(fx, fy, cx, cy, rotation.copy(), translation.copy(), w, h)
    values = data.reshape(h, w, n_d).astype(np.float32)
    return DepthProbabilityVolume(values, DisparityRange(d_min, d_max, n_d), camera)
