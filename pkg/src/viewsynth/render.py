"""Back-to-front synthesis of the initial novel view.

Disparity levels are swept from farthest to nearest; at each level, pixels
whose probability exceeds the threshold are backward-warped into every
input view, and the view-weighted average of the bilinear samples
overwrites whatever an earlier (farther) level wrote. Nearer surfaces
therefore occlude farther ones, and pixels that never pass the threshold
(or that no input can see) remain holes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dpv import DepthProbabilityVolume
from .geometry import Camera, backproject_many, project_many
from .sampling import bilinear_sample

DEFAULT_THRESHOLD = 0.05
DEFAULT_GAMMA = 2.0


@dataclass
class RenderedView:
    """image is float32 RGB in [0, 1], black where coverage is False;
    level_index holds the chosen disparity level per pixel, -1 for holes."""

    image: np.ndarray
    coverage: np.ndarray
    level_index: np.ndarray

    @property
    def coverage_fraction(self) -> float:
        return float(self.coverage.mean())


def mean_camera_spacing(cameras) -> float:
    """Mean pairwise distance between camera centers (1.0 for a single one)."""
    centers = [c.center for c in cameras]
    if len(centers) < 2:
        return 1.0
    dists = [
        float(np.linalg.norm(centers[i] - centers[j]))
        for i in range(len(centers)) for j in range(i + 1, len(centers))
    ]
    spacing = float(np.mean(dists))
    return spacing if spacing > 0 else 1.0


def view_weight(input_camera: Camera, novel_camera: Camera,
                sigma_c: float = 1.0, gamma: float = DEFAULT_GAMMA) -> float:
    """Merge weight favoring nearby, similarly oriented input cameras:
    exp(-|c_i - c_nv| / sigma_c) * max(0, cos angle(z_i, z_nv))^gamma."""
    dist = float(np.linalg.norm(input_camera.center - novel_camera.center))
    cos_angle = float(np.dot(input_camera.principal_axis, novel_camera.principal_axis))
    return float(np.exp(-dist / sigma_c) * max(0.0, cos_angle) ** gamma)


def render_novel_view(volume: DepthProbabilityVolume, inputs,
                      threshold: float = DEFAULT_THRESHOLD,
                      sigma_c: float | None = None,
                      gamma: float = DEFAULT_GAMMA) -> RenderedView:
    """Render the novel view from its probability volume and the input images.

    inputs: list of (image, camera). sigma_c defaults to the mean spacing
    between the input cameras.
    """
    if not inputs:
        raise ValueError("need at least one input view")
    novel = volume.camera
    if sigma_c is None:
        sigma_c = mean_camera_spacing([cam for _, cam in inputs])
    weights = [view_weight(cam, novel, sigma_c, gamma) for _, cam in inputs]

    h, w = novel.height, novel.width
    image = np.zeros((h, w, 3), dtype=np.float64)
    coverage = np.zeros((h, w), dtype=bool)
    level_index = np.full((h, w), -1, dtype=np.int32)

    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    pixels = np.stack([xs, ys], axis=-1)

    for d in range(volume.n_d):  # far to near
        mask = volume.values[:, :, d] > threshold
        if not mask.any():
            continue
        world = backproject_many(novel, pixels[mask], float(volume.disparity_range.levels[d]))
        n_sel = world.shape[0]
        color_acc = np.zeros((n_sel, 3), dtype=np.float64)
        weight_acc = np.zeros(n_sel, dtype=np.float64)
        for (input_image, input_camera), wgt in zip(inputs, weights):
            if wgt <= 0.0:
                continue
            pix, depth = project_many(input_camera, world)
            colors, ok = bilinear_sample(input_image, pix[..., 0], pix[..., 1])
            ok &= depth > 0
            if not ok.any():
                continue
            color_acc[ok] += wgt * colors[ok]
            weight_acc[ok] += wgt
        written = weight_acc > 0.0
        if not written.any():
            continue
        rows, cols = np.nonzero(mask)
        rows, cols = rows[written], cols[written]
        image[rows, cols] = color_acc[written] / weight_acc[written, None]
        coverage[rows, cols] = True
        level_index[rows, cols] = d

    return RenderedView(image.astype(np.float32), coverage, level_index)
