"""Command-line pipeline driver.

Commands:
  make-scene   render a synthetic scene spec to images + depth + manifest
  estimate     per-view depth probability volumes from a scene manifest
  synthesize   fuse volumes for a novel camera, render it, emit patch bundles
  evaluate     PSNR/SSIM between a rendered image and ground truth
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import dpv, fusion, patches, render, scene_io
from .errors import ViewSynthError
from .geometry import Camera
from .metrics import psnr, ssim
from .runtime import apply_thread_limit


def _cmd_make_scene(args) -> int:
    spec = scene_io.scene_spec_from_json(Path(args.spec).read_text())
    manifest = scene_io.generate_synthetic_scene(spec, args.seed, args.out)
    print(f"wrote {manifest}")
    return 0


def _scene_disparity_range(scene: scene_io.LoadedScene, n_d: int):
    if scene.disparity_range is not None:
        rng = scene.disparity_range
        if rng.n_d != n_d:
            from .geometry import DisparityRange
            rng = DisparityRange(rng.d_min, rng.d_max, n_d)
        return rng
    samples = [d[np.isfinite(d) & (d > 0)] for d in scene.depths if d is not None]
    if not samples:
        raise ViewSynthError(
            "manifest has neither a disparity_range nor depth maps to derive one from"
        )
    return dpv.disparity_range_from_depth_percentiles(np.concatenate(samples), n_d)


def _cmd_estimate(args) -> int:
    scene = scene_io.load_scene(args.scene)
    disparity_range = _scene_disparity_range(scene, args.nd)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i in range(scene.n_views):
        others = [
            (scene.images[j], scene.cameras[j])
            for j in range(scene.n_views) if j != i
        ]
        costs = dpv.build_cost_volume(
            scene.images[i], scene.cameras[i], others, disparity_range,
            window=args.window,
        )
        volume = dpv.costs_to_probabilities(
            costs, args.temperature, disparity_range, scene.cameras[i]
        )
        if not args.no_filter:
            volume = dpv.crf_filter(
                volume, scene.images[i], theta_alpha=args.theta_alpha,
                theta_beta=args.theta_beta, mu=args.mu, iterations=args.iterations,
            )
        volume.validate()
        path = out_dir / f"volume_{i:03d}.dpv"
        dpv.write_volume(path, volume)
        print(f"wrote {path}")
    return 0


def _novel_camera(args, volumes) -> Camera:
    cameras = [v.camera for v in volumes]
    chosen = [args.novel_camera is not None, args.extrapolate is not None,
              args.dolly is not None]
    if sum(chosen) != 1:
        raise ViewSynthError(
            "specify exactly one of --novel-camera, --extrapolate, --dolly"
        )
    if args.novel_camera is not None:
        spec = json.loads(Path(args.novel_camera).read_text())
        return Camera(
            fx=float(spec["fx"]), fy=float(spec["fy"]),
            cx=float(spec["cx"]), cy=float(spec["cy"]),
            rotation=np.asarray(spec["rotation"], dtype=np.float64),
            translation=np.asarray(spec["translation"], dtype=np.float64),
            width=int(spec["width"]), height=int(spec["height"]),
        )
    if args.extrapolate is not None:
        if len(cameras) != 2:
            raise ViewSynthError("--extrapolate requires a stereo (2-view) scene")
        c0, c1 = cameras[0].center, cameras[1].center
        center = c0 + args.extrapolate * (c0 - c1)
        translation = -cameras[0].rotation @ center
        return cameras[0].with_pose(cameras[0].rotation, translation)
    axis = np.mean([c.principal_axis for c in cameras], axis=0)
    axis /= np.linalg.norm(axis)
    center = cameras[0].center + args.dolly * axis
    translation = -cameras[0].rotation @ center
    return cameras[0].with_pose(cameras[0].rotation, translation)


def _cmd_synthesize(args) -> int:
    scene = scene_io.load_scene(args.scene)
    volume_paths = sorted(Path(args.volumes).glob("*.dpv"))
    if not volume_paths:
        raise ViewSynthError(f"no .dpv volumes found in {args.volumes}")
    volumes = [dpv.read_volume(p) for p in volume_paths]
    if len(volumes) != scene.n_views:
        raise ViewSynthError(
            f"{len(volumes)} volumes but {scene.n_views} views in the scene"
        )
    novel = _novel_camera(args, volumes)

    fused, _unobserved = fusion.fuse_volumes(volumes, novel, n_d=args.nd)
    inputs = list(zip(scene.images, scene.cameras))
    view = render.render_novel_view(
        fused, inputs, threshold=args.threshold, gamma=args.gamma,
        sigma_c=args.sigma_c,
    )
    if not view.coverage.any():
        print("warning: no covered pixels", file=sys.stderr)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    scene_io.write_image(out_dir / "render.png", view.image)
    scene_io.write_image(out_dir / "coverage.png", view.coverage.astype(np.float64))
    levels = np.where(view.level_index < 0, 0, view.level_index)
    scene_io.write_image(out_dir / "levels.png",
                         levels / max(fused.n_d - 1, 1))
    dpv.write_volume(out_dir / "fused.dpv", fused)
    bundles = patches.build_bundles(view, fused, inputs, novel)
    patches.write_bundles(out_dir / "bundles.pbnd", bundles)
    print(f"wrote {out_dir}/render.png coverage={view.coverage_fraction:.3f} "
          f"bundles={len(bundles)}")
    return 0


def _cmd_evaluate(args) -> int:
    rendered = scene_io.read_image(args.render)
    truth = scene_io.read_image(args.truth)
    mask = None
    if args.mask:
        mask = scene_io.read_image(args.mask).mean(axis=2) > 0.5
    value_psnr = psnr(rendered, truth, mask)
    value_ssim = ssim(rendered, truth)
    scene = args.scene or Path(args.render).stem
    view = args.view or Path(args.truth).stem
    print(f"{scene},{view},{value_psnr:.4f},{value_ssim:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="viewsynth",
        description="Novel-view synthesis from depth probability volumes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-scene", help="render a synthetic scene to disk")
    p.add_argument("--spec", required=True, help="scene spec JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_make_scene)

    p = sub.add_parser("estimate", help="estimate per-view probability volumes")
    p.add_argument("--scene", required=True, help="scene manifest JSON")
    p.add_argument("--out", required=True, help="output directory for .dpv files")
    p.add_argument("--nd", type=int, default=dpv.DEFAULT_N_D,
                   help="number of disparity levels")
    p.add_argument("--window", type=int, default=dpv.DEFAULT_WINDOW,
                   help="matching window size (odd)")
    p.add_argument("--temperature", type=float, default=dpv.DEFAULT_TEMPERATURE)
    p.add_argument("--no-filter", action="store_true",
                   help="skip the guided mean-field filter")
    p.add_argument("--theta-alpha", type=float, default=dpv.DEFAULT_THETA_ALPHA,
                   help="filter spatial stddev in pixels")
    p.add_argument("--theta-beta", type=float, default=dpv.DEFAULT_THETA_BETA,
                   help="filter color stddev on the 0-255 scale")
    p.add_argument("--mu", type=float, default=dpv.DEFAULT_MU,
                   help="pairwise message weight")
    p.add_argument("--iterations", type=int, default=dpv.DEFAULT_ITERATIONS)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("synthesize", help="fuse volumes and render a novel view")
    p.add_argument("--scene", required=True)
    p.add_argument("--volumes", required=True, help="directory of .dpv files")
    p.add_argument("--out", required=True)
    p.add_argument("--novel-camera", help="JSON file with an explicit camera")
    p.add_argument("--extrapolate", type=float,
                   help="place the camera at k x baseline beyond view 0 (stereo only)")
    p.add_argument("--dolly", type=float,
                   help="translate view 0 along the mean principal axis")
    p.add_argument("--threshold", type=float, default=render.DEFAULT_THRESHOLD)
    p.add_argument("--nd", type=int, default=dpv.DEFAULT_N_D,
                   help="levels in the fused novel-view volume")
    p.add_argument("--gamma", type=float, default=render.DEFAULT_GAMMA)
    p.add_argument("--sigma-c", type=float, default=None,
                   help="override the view-weight distance falloff")
    p.set_defaults(func=_cmd_synthesize)

    p = sub.add_parser("evaluate", help="PSNR/SSIM against ground truth")
    p.add_argument("--render", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--mask", help="PNG mask; nonzero pixels are evaluated")
    p.add_argument("--scene", help="scene label for the CSV row")
    p.add_argument("--view", help="view label for the CSV row")
    p.set_defaults(func=_cmd_evaluate)
    return parser


def main(argv=None) -> int:
    apply_thread_limit()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ViewSynthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
