"""Pinhole cameras, projection, back-projection, and plane-induced homographies.

Conventions used throughout the package:

- World-to-camera extrinsics: ``x_cam = R @ x_world + t``.
- Pixel coordinates are continuous, origin at the top-left pixel center,
  x to the right, y down.
- Disparity is inverse depth measured along the camera's optical axis.
- Disparity levels are indexed 0 (farthest, ``d_min``) up to ``n_d - 1``
  (nearest, ``d_max``).
- Homographies are returned in dst->src direction (they map dst pixels to
  src pixels) because rendering and patch warping backward-sample source
  images at destination coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BehindCameraError,
    DegeneratePlaneError,
    DegenerateRangeError,
    InvalidDisparityError,
)

_ORTHONORMALITY_TOL = 1e-9


@dataclass(frozen=True)
class Camera:
    """Pinhole camera with world-to-camera pose. Immutable after construction."""

    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray   # 3x3 orthonormal, world-to-camera
    translation: np.ndarray  # 3-vector, world-to-camera
    width: int
    height: int

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        trans = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)
        err = np.abs(rot.T @ rot - np.eye(3)).max()
        if err > _ORTHONORMALITY_TOL:
            raise ValueError(f"rotation is not orthonormal (max |R^T R - I| = {err:.3e})")
        if np.linalg.det(rot) < 0:
            raise ValueError("improper rotation (determinant -1)")
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside the image")
        rot.setflags(write=False)
        trans.setflags(write=False)

    @property
    def intrinsics(self) -> np.ndarray:
        """3x3 calibration matrix K."""
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    @property
    def principal_axis(self) -> np.ndarray:
        """Unit optical-axis direction in world coordinates."""
        return self.rotation[2, :].copy()

    def with_pose(self, rotation: np.ndarray, translation: np.ndarray) -> "Camera":
        """Same intrinsics and size, different pose."""
        return Camera(self.fx, self.fy, self.cx, self.cy, rotation, translation,
                      self.width, self.height)


@dataclass(frozen=True)
class DisparityRange:
    """Uniformly spaced disparity levels between d_min (far) and d_max (near)."""

    d_min: float
    d_max: float
    n_d: int
    levels: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_d < 2:
            raise ValueError("n_d must be at least 2")
        if not (0 < self.d_min < self.d_max):
            raise DegenerateRangeError(
                f"need 0 < d_min < d_max, got [{self.d_min}, {self.d_max}]"
            )
        levels = np.linspace(self.d_min, self.d_max, self.n_d)
        levels.setflags(write=False)
        object.__setattr__(self, "levels", levels)

    @property
    def step(self) -> float:
        return (self.d_max - self.d_min) / (self.n_d - 1)

    def nearest_level(self, disparity: float) -> int:
        """Nearest level index; exact half-step ties go to the farther level."""
        f = (disparity - self.d_min) / self.step
        idx = int(np.ceil(f - 0.5))
        return min(max(idx, 0), self.n_d - 1)

    def contains(self, disparity) -> np.ndarray:
        """Range membership with a 1e-9-of-span tolerance so that disparities
        recovered through a backproject/project roundtrip (off by an ulp)
        still count as inside at the boundary levels."""
        tol = 1e-9 * (self.d_max - self.d_min)
        return (disparity >= self.d_min - tol) & (disparity <= self.d_max + tol)


def project(camera: Camera, point) -> tuple[np.ndarray, float]:
    """Project one world point; returns (pixel, depth along the optical axis).

    Raises BehindCameraError if the point is at or behind the camera plane.
    """
    p_cam = camera.rotation @ np.asarray(point, dtype=np.float64) + camera.translation
    z = p_cam[2]
    if z <= 0:
        raise BehindCameraError(f"point has non-positive depth {z}")
    pixel = np.array(
        [camera.fx * p_cam[0] / z + camera.cx, camera.fy * p_cam[1] / z + camera.cy]
    )
    return pixel, float(z)


def project_many(camera: Camera, points: np.ndarray):
    """Vectorized projection without the behind-camera check.

    points: (..., 3). Returns (pixels (..., 2), depths (...)). Callers must
    mask on depths > 0 themselves; pixel values where depth <= 0 are garbage.
    """
    p = np.asarray(points, dtype=np.float64)
    p_cam = p @ camera.rotation.T + camera.translation
    z = p_cam[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = camera.fx * p_cam[..., 0] / z + camera.cx
        v = camera.fy * p_cam[..., 1] / z + camera.cy
    return np.stack([u, v], axis=-1), z


def backproject(camera: Camera, pixel, disparity: float) -> np.ndarray:
    """World point on the pixel's ray at depth 1/disparity. Requires disparity > 0."""
    if disparity <= 0:
        raise InvalidDisparityError(f"disparity must be positive, got {disparity}")
    x, y = float(pixel[0]), float(pixel[1])
    z = 1.0 / disparity
    p_cam = np.array([(x - camera.cx) / camera.fx * z, (y - camera.cy) / camera.fy * z, z])
    return camera.rotation.T @ (p_cam - camera.translation)


def backproject_many(camera: Camera, pixels: np.ndarray, disparity: float) -> np.ndarray:
    """Vectorized back-projection. pixels: (..., 2) -> world points (..., 3)."""
    if disparity <= 0:
        raise InvalidDisparityError(f"disparity must be positive, got {disparity}")
    px = np.asarray(pixels, dtype=np.float64)
    z = 1.0 / disparity
    p_cam = np.empty(px.shape[:-1] + (3,), dtype=np.float64)
    p_cam[..., 0] = (px[..., 0] - camera.cx) / camera.fx * z
    p_cam[..., 1] = (px[..., 1] - camera.cy) / camera.fy * z
    p_cam[..., 2] = z
    return (p_cam - camera.translation) @ camera.rotation


def plane_homography(src: Camera, dst: Camera, disparity: float) -> np.ndarray:
    """3x3 homography mapping dst pixels to src pixels, induced by the world
    plane fronto-parallel to dst at depth 1/disparity.

    disparity 0 selects the plane at infinity (pure-rotation mapping).
    Raises DegeneratePlaneError when the plane passes through the src camera
    center, which collapses the mapping.
    """
    if disparity < 0:
        raise InvalidDisparityError(f"disparity must be non-negative, got {disparity}")
    r_rel = src.rotation @ dst.rotation.T
    t_rel = src.translation - r_rel @ dst.translation
    m = r_rel.copy()
    m[:, 2] += disparity * t_rel
    # det(m) = 1 - d * z(src center in dst frame); 0 iff plane hits src center.
    if abs(np.linalg.det(m)) < 1e-12:
        raise DegeneratePlaneError(
            f"plane at disparity {disparity} passes through the source camera center"
        )
    k_dst_inv = np.array(
        [[1.0 / dst.fx, 0.0, -dst.cx / dst.fx],
         [0.0, 1.0 / dst.fy, -dst.cy / dst.fy],
         [0.0, 0.0, 1.0]]
    )
    h = src.intrinsics @ m @ k_dst_inv
    if abs(h[2, 2]) > 1e-15:
        h = h / h[2, 2]
    return h


def apply_homography(h: np.ndarray, pixels: np.ndarray) -> np.ndarray:
    """Apply a 3x3 homography to (..., 2) pixel coordinates."""
    px = np.asarray(pixels, dtype=np.float64)
    ones = np.ones(px.shape[:-1] + (1,))
    homog = np.concatenate([px, ones], axis=-1) @ h.T
    return homog[..., :2] / homog[..., 2:3]


def look_at_camera(position, target, up, fx: float, fy: float,
                   cx: float, cy: float, width: int, height: int) -> Camera:
    """Build a camera at `position` whose optical axis points at `target`."""
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - position
    norm = np.linalg.norm(forward)
    if norm == 0:
        raise ValueError("camera position equals its look-at target")
    forward = forward / norm
    up = np.asarray(up, dtype=np.float64)
    right = np.cross(forward, up)
    norm = np.linalg.norm(right)
    if norm < 1e-12:
        raise ValueError("up vector is parallel to the viewing direction")
    right = right / norm
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward], axis=0)
    translation = -rotation @ position
    return Camera(fx, fy, cx, cy, rotation, translation, width, height)
