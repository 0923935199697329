"""Resample per-view probability volumes into the novel camera's volume.

Every novel-view voxel is back-projected to a world point, reprojected into
each input camera, and takes that view's probability at the nearest voxel
(round-half-up pixels; nearest disparity level with half-step ties to the
farther level). Contributions are summed in float64; ray-level
renormalization afterwards turns the sums back into distributions, and rays
never observed by any input fall back to uniform with an "unobserved" flag.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dpv import DepthProbabilityVolume
from .geometry import Camera, DisparityRange, backproject_many, project_many
from .sampling import round_half_up


@dataclass
class VolumeAccumulator:
    """Running sums plus contribution counts for one novel-view volume."""

    camera: Camera
    disparity_range: DisparityRange
    sums: np.ndarray     # (h, w, n_d) float64
    counts: np.ndarray   # (h, w, n_d) uint32

    @classmethod
    def create(cls, camera: Camera, disparity_range: DisparityRange):
        shape = (camera.height, camera.width, disparity_range.n_d)
        return cls(camera, disparity_range,
                   np.zeros(shape, dtype=np.float64),
                   np.zeros(shape, dtype=np.uint32))


def union_disparity_range(volumes, n_d: int) -> DisparityRange:
    """Smallest disparity range covering every input range, at n_d levels."""
    return DisparityRange(
        d_min=min(v.disparity_range.d_min for v in volumes),
        d_max=max(v.disparity_range.d_max for v in volumes),
        n_d=n_d,
    )


def _nearest_levels(disparity: np.ndarray, rng: DisparityRange) -> np.ndarray:
    """Vectorized nearest level index, half-step ties to the farther level."""
    f = (disparity - rng.d_min) / rng.step
    return np.clip(np.ceil(f - 0.5).astype(np.int64), 0, rng.n_d - 1)


def resample_accumulate(volume: DepthProbabilityVolume,
                        accumulator: VolumeAccumulator,
                        method: str = "nearest") -> VolumeAccumulator:
    """Accumulate one input volume into the novel-view accumulator.

    method "nearest" is the production path; "trilinear" interpolates the
    input volume instead (kept for benchmarking the quality/cost tradeoff).
    Voxels projecting outside the input frustum or disparity range
    contribute nothing.
    """
    if method not in ("nearest", "trilinear"):
        raise ValueError(f"unknown resampling method: {method}")
    novel = accumulator.camera
    nrange = accumulator.disparity_range
    in_cam = volume.camera
    in_range = volume.disparity_range

    xs, ys = np.meshgrid(np.arange(novel.width, dtype=np.float64),
                         np.arange(novel.height, dtype=np.float64))
    pixels = np.stack([xs, ys], axis=-1)

    for d in range(nrange.n_d):
        world = backproject_many(novel, pixels, float(nrange.levels[d]))
        pix, depth = project_many(in_cam, world)
        valid = depth > 0
        u = pix[..., 0]
        v = pix[..., 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            disp_in = np.where(valid, 1.0 / depth, 0.0)

        if method == "nearest":
            px = round_half_up(np.where(valid, u, 0.0))
            py = round_half_up(np.where(valid, v, 0.0))
            valid &= (px >= 0) & (px < in_cam.width) & (py >= 0) & (py < in_cam.height)
            valid &= in_range.contains(disp_in)
            if not valid.any():
                continue
            lvl = _nearest_levels(disp_in[valid], in_range)
            contrib = volume.values[py[valid], px[valid], lvl].astype(np.float64)
        else:
            valid &= (u >= 0) & (u <= in_cam.width - 1.0)
            valid &= (v >= 0) & (v <= in_cam.height - 1.0)
            valid &= in_range.contains(disp_in)
            if not valid.any():
                continue
            contrib = _trilinear(volume, u[valid], v[valid], disp_in[valid])

        plane_sums = accumulator.sums[:, :, d]
        plane_counts = accumulator.counts[:, :, d]
        plane_sums[valid] += contrib
        plane_counts[valid] += 1
    return accumulator


def _trilinear(volume: DepthProbabilityVolume, u, v, disp):
    vals = volume.values.astype(np.float64, copy=False)
    rng = volume.disparity_range
    fl = np.clip((disp - rng.d_min) / rng.step, 0.0, rng.n_d - 1.0)
    x0 = np.floor(u).astype(np.intp)
    y0 = np.floor(v).astype(np.intp)
    l0 = np.floor(fl).astype(np.intp)
    x1 = np.minimum(x0 + 1, volume.width - 1)
    y1 = np.minimum(y0 + 1, volume.height - 1)
    l1 = np.minimum(l0 + 1, volume.n_d - 1)
    fx = u - x0
    fy = v - y0
    fz = fl - l0
    c00 = vals[y0, x0, l0] * (1 - fx) + vals[y0, x1, l0] * fx
    c10 = vals[y1, x0, l0] * (1 - fx) + vals[y1, x1, l0] * fx
    c01 = vals[y0, x0, l1] * (1 - fx) + vals[y0, x1, l1] * fx
    c11 = vals[y1, x0, l1] * (1 - fx) + vals[y1, x1, l1] * fx
    c0 = c00 * (1 - fy) + c10 * fy
    c1 = c01 * (1 - fy) + c11 * fy
    return c0 * (1 - fz) + c1 * fz


def normalize_accumulated(accumulator: VolumeAccumulator):
    """Turn accumulated sums into a proper volume.

    Returns (volume, unobserved) where unobserved marks pixels whose ray
    collected zero probability mass; those rays are set to uniform.
    """
    sums = accumulator.sums
    ray_total = sums.sum(axis=2)
    unobserved = ray_total == 0.0
    n_d = accumulator.disparity_range.n_d
    with np.errstate(divide="ignore", invalid="ignore"):
        values = sums / ray_total[:, :, None]
    values[unobserved, :] = 1.0 / n_d
    volume = DepthProbabilityVolume(values.astype(np.float32),
                                    accumulator.disparity_range,
                                    accumulator.camera)
    return volume, unobserved


def fuse_volumes(volumes, novel_camera: Camera,
                 novel_range: DisparityRange | None = None,
                 n_d: int | None = None, method: str = "nearest"):
    """Full fusion pass over a list of input volumes.

    Returns (volume, unobserved). The novel range defaults to the union of
    the input ranges resampled to n_d levels (n_d defaults to the first
    input's level count).
    """
    if not volumes:
        raise ValueError("need at least one input volume")
    if novel_range is None:
        novel_range = union_disparity_range(volumes, n_d or volumes[0].n_d)
    acc = VolumeAccumulator.create(novel_camera, novel_range)
    for volume in volumes:
        resample_accumulate(volume, acc, method=method)
    return normalize_accumulated(acc)
