"""Depth-mode detection and candidate patch extraction for refinement.

For every center on a stride-32 grid, the synthesized 64x64 patch is
bundled with homography-warped candidates from each input view, one per
detected mode of the center ray's disparity distribution. Bundles are
serialized to the PBND container consumed by the refinement stage.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .dpv import DepthProbabilityVolume
from .errors import ImageTooSmallError
from .geometry import Camera, backproject_many, plane_homography, project_many
from .render import RenderedView
from .sampling import bilinear_sample

PATCH_SIZE = 64
GRID_STRIDE = 32
MAX_MODES = 3
MODE_MIN_PROB = 0.05
MODE_MIN_SEPARATION = 5


@dataclass
class Candidate:
    """One homography-warped patch from one input view at one depth mode."""

    view_index: int
    level: int
    disparity: float
    homography: np.ndarray     # 3x3, novel pixels -> source pixels
    patch: np.ndarray          # (64, 64, 3) float32
    valid: np.ndarray          # (64, 64) bool, False where out of source bounds


@dataclass
class PatchBundle:
    center: tuple              # (cx, cy) in novel-view pixels
    synthesized: np.ndarray    # (64, 64, 3) float32
    candidates: list = field(default_factory=list)
    unconstrained: bool = False


def find_modes(ray, min_prob: float = MODE_MIN_PROB,
               min_separation: int = MODE_MIN_SEPARATION,
               max_modes: int = MAX_MODES):
    """Strict local maxima of a per-ray distribution, greedily selected in
    descending probability with pairwise index separation >= min_separation.
    Returns [(level, probability), ...] sorted by probability descending."""
    ray = np.asarray(ray, dtype=np.float64)
    n = ray.size
    if n == 0:
        return []
    peaks = []
    for i in range(n):
        left_ok = i == 0 or ray[i] > ray[i - 1]
        right_ok = i == n - 1 or ray[i] > ray[i + 1]
        if left_ok and right_ok and ray[i] >= min_prob:
            peaks.append((i, float(ray[i])))
    peaks.sort(key=lambda p: (-p[1], p[0]))
    selected = []
    for idx, prob in peaks:
        if len(selected) >= max_modes:
            break
        if all(abs(idx - k) >= min_separation for k, _ in selected):
            selected.append((idx, prob))
    return selected


def plan_patch_grid(width: int, height: int, stride: int = GRID_STRIDE,
                    patch_size: int = PATCH_SIZE):
    """Centers of patch windows covering the whole image with the given
    stride; the last row/column is clamped so the union reaches the border."""
    if width < patch_size or height < patch_size:
        raise ImageTooSmallError(
            f"image {width}x{height} smaller than one {patch_size}x{patch_size} patch"
        )
    half = patch_size // 2

    def axis_centers(extent):
        centers = list(range(half, extent - half, stride))
        if not centers or centers[-1] != extent - half:
            centers.append(extent - half)
        return centers

    return [(cx, cy) for cy in axis_centers(height) for cx in axis_centers(width)]


def extract_warped_patch(source_image, source_camera: Camera,
                         novel_camera: Camera, center, disparity: float,
                         size: int = PATCH_SIZE):
    """Backward-warp a patch from a source view through the plane at the
    given disparity.

    Patch pixel (row, col) corresponds to novel pixel
    (cx - size/2 + col, cy - size/2 + row); each is sampled bilinearly in
    the source at the homography-mapped location. Returns (patch, valid)
    with valid False wherever the sample leaves the source image.
    """
    half = size // 2
    cx, cy = center
    cols = np.arange(size, dtype=np.float64) + (cx - half)
    rows = np.arange(size, dtype=np.float64) + (cy - half)
    qx, qy = np.meshgrid(cols, rows)
    pixels = np.stack([qx, qy], axis=-1)
    world = backproject_many(novel_camera, pixels, disparity)
    pix, depth = project_many(source_camera, world)
    patch, valid = bilinear_sample(source_image, pix[..., 0], pix[..., 1])
    valid &= depth > 0
    patch = np.where(valid[..., None], patch, 0.0)
    return patch.astype(np.float32), valid


def build_bundles(rendered: RenderedView, volume: DepthProbabilityVolume,
                  inputs, novel_camera: Camera, grid=None,
                  min_prob: float = MODE_MIN_PROB,
                  min_separation: int = MODE_MIN_SEPARATION,
                  max_modes: int = MAX_MODES):
    """One PatchBundle per grid center, candidates ordered by view then mode.

    Candidates whose warp lands entirely outside their source view are
    dropped; a bundle with no surviving candidates is flagged unconstrained.
    """
    if grid is None:
        grid = plan_patch_grid(novel_camera.width, novel_camera.height)
    half = PATCH_SIZE // 2
    bundles = []
    for cx, cy in grid:
        ray = volume.values[cy, cx, :]
        modes = find_modes(ray, min_prob, min_separation, max_modes)
        synthesized = rendered.image[cy - half:cy + half, cx - half:cx + half].copy()
        candidates = []
        for view_index, (source_image, source_camera) in enumerate(inputs):
            for level, _prob in modes:
                disparity = float(volume.disparity_range.levels[level])
                patch, valid = extract_warped_patch(
                    source_image, source_camera, novel_camera, (cx, cy), disparity
                )
                if not valid.any():
                    continue
                homography = plane_homography(source_camera, novel_camera, disparity)
                candidates.append(Candidate(view_index, level, disparity,
                                            homography, patch, valid))
        bundles.append(PatchBundle((cx, cy), synthesized, candidates,
                                   unconstrained=not candidates))
    return bundles


# ---------------------------------------------------------------------------
# PBND bundle container
# ---------------------------------------------------------------------------

def write_bundles(path, bundles) -> None:
    """Little-endian container, magic PBND, u32 bundle count; per bundle:
    u32 cx, cy; u8 flags (bit 0 = unconstrained); u16 candidate count;
    synthesized patch 64*64*3 f32; per candidate: u16 view index, u16 mode
    level, f64 disparity, 9 f64 homography, 64*64*3 f32 patch, 64*64 u8 mask.
    """
    with open(path, "wb") as f:
        f.write(b"PBND")
        f.write(struct.pack("<I", len(bundles)))
        for b in bundles:
            f.write(struct.pack("<IIBH", int(b.center[0]), int(b.center[1]),
                                1 if b.unconstrained else 0, len(b.candidates)))
            f.write(np.ascontiguousarray(b.synthesized, dtype="<f4").tobytes())
            for c in b.candidates:
                f.write(struct.pack("<HHd", c.view_index, c.level, c.disparity))
                f.write(np.ascontiguousarray(c.homography, dtype="<f8").tobytes())
                f.write(np.ascontiguousarray(c.patch, dtype="<f4").tobytes())
                f.write(np.ascontiguousarray(c.valid, dtype=np.uint8).tobytes())


def read_bundles(path):
    patch_bytes = PATCH_SIZE * PATCH_SIZE * 3 * 4
    mask_bytes = PATCH_SIZE * PATCH_SIZE
    with open(path, "rb") as f:
        if f.read(4) != b"PBND":
            raise ValueError(f"not a PBND file: {path}")
        (count,) = struct.unpack("<I", f.read(4))
        bundles = []
        for _ in range(count):
            cx, cy, flags, n_cand = struct.unpack("<IIBH", f.read(11))
            synthesized = np.frombuffer(f.read(patch_bytes), dtype="<f4") \
                .reshape(PATCH_SIZE, PATCH_SIZE, 3).copy()
            candidates = []
            for _ in range(n_cand):
                view_index, level, disparity = struct.unpack("<HHd", f.read(12))
                homography = np.frombuffer(f.read(72), dtype="<f8").reshape(3, 3).copy()
                patch = np.frombuffer(f.read(patch_bytes), dtype="<f4") \
                    .reshape(PATCH_SIZE, PATCH_SIZE, 3).copy()
                valid = np.frombuffer(f.read(mask_bytes), dtype=np.uint8) \
                    .reshape(PATCH_SIZE, PATCH_SIZE).astype(bool)
                candidates.append(Candidate(view_index, level, disparity,
                                            homography, patch, valid))
            bundles.append(PatchBundle((cx, cy), synthesized, candidates,
                                       unconstrained=bool(flags & 1)))
    return bundles
