"""Novel-view synthesis from depth probability volumes."""

from .dpv import (
    DepthProbabilityVolume,
    build_cost_volume,
    costs_to_probabilities,
    crf_filter,
    disparity_range_from_depth_percentiles,
    read_volume,
    write_volume,
)
from .fusion import (
    VolumeAccumulator,
    fuse_volumes,
    normalize_accumulated,
    resample_accumulate,
    union_disparity_range,
)
from .geometry import (
    Camera,
    DisparityRange,
    backproject,
    backproject_many,
    look_at_camera,
    plane_homography,
    project,
    project_many,
)
from .metrics import psnr, ssim
from .patches import (
    Candidate,
    PatchBundle,
    build_bundles,
    extract_warped_patch,
    find_modes,
    plan_patch_grid,
    read_bundles,
    write_bundles,
)
from .render import RenderedView, render_novel_view, view_weight
from .scene_io import (
    Box,
    CameraPose,
    LoadedScene,
    Rect,
    SceneSpec,
    generate_synthetic_scene,
    load_scene,
    render_scene,
    save_scene,
)

__version__ = "0.1.0"
