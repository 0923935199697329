"""Scene ingestion, synthetic scene generation, and file formats.

File formats owned by this module:

- Scene manifest: a single JSON file listing views, each with an image path,
  camera parameters, and an optional ground-truth depth map path.
- PNG images (8-bit RGB, decoded to float in [0, 1]).
- DPTH depth maps: little-endian binary, 16-byte header
  (magic ``DPTH``, u32 width, u32 height, u32 reserved) followed by
  height*width float32 values in row-major order.

The synthetic generator ray-casts Lambertian textured rectangles and axis
aligned boxes, producing images plus exact per-pixel depth along the optical
axis, so every downstream module can be tested against known geometry.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .errors import InvalidRigError, SceneError
from .geometry import Camera, DisparityRange, look_at_camera

_RAY_EPS = 1e-8


# ---------------------------------------------------------------------------
# Image and depth-map files
# ---------------------------------------------------------------------------

def read_image(path) -> np.ndarray:
    """Load a PNG as float32 RGB in [0, 1]."""
    bgr = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if bgr is None:
        raise SceneError(f"cannot read image: {path}")
    return cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB).astype(np.float32) / 255.0


def write_image(path, image: np.ndarray) -> None:
    """Write a float RGB image in [0, 1] as 8-bit PNG."""
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    u8 = np.rint(arr * 255.0).astype(np.uint8)
    if u8.ndim == 2:
        u8 = np.repeat(u8[:, :, None], 3, axis=2)
    if not cv2.imwrite(str(path), cv2.cvtColor(u8, cv2.COLOR_RGB2BGR)):
        raise SceneError(f"cannot write image: {path}")


def write_depth(path, depth: np.ndarray) -> None:
    h, w = depth.shape
    with open(path, "wb") as f:
        f.write(b"DPTH")
        f.write(struct.pack("<III", w, h, 0))
        f.write(np.ascontiguousarray(depth, dtype="<f4").tobytes())


def read_depth(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.read(16)
        if len(header) != 16 or header[:4] != b"DPTH":
            raise SceneError(f"not a DPTH file: {path}")
        w, h, _ = struct.unpack("<III", header[4:])
        data = np.frombuffer(f.read(), dtype="<f4")
    if data.size != w * h:
        raise SceneError(f"truncated DPTH file: {path}")
    return data.reshape(h, w).astype(np.float32)


# ---------------------------------------------------------------------------
# Scene manifests
# ---------------------------------------------------------------------------

@dataclass
class LoadedScene:
    """A fully loaded scene: images in [0, 1], validated cameras, optional
    ground-truth depth maps (camera-axis depth, +inf where empty)."""

    images: list
    cameras: list
    depths: list
    disparity_range: DisparityRange | None = None

    @property
    def n_views(self) -> int:
        return len(self.images)


def _camera_from_dict(d: dict) -> Camera:
    rotation = np.asarray(d["rotation"], dtype=np.float64).reshape(3, 3)
    err = np.abs(rotation.T @ rotation - np.eye(3)).max()
    if err > 1e-6:
        raise SceneError(f"non-orthonormal rotation (max deviation {err:.3e})")
    if np.linalg.det(rotation) < 0:
        raise SceneError("improper rotation (determinant -1)")
    # Snap small file-precision drift onto the rotation manifold.
    u, _, vt = np.linalg.svd(rotation)
    rotation = u @ vt
    return Camera(
        fx=float(d["fx"]), fy=float(d["fy"]), cx=float(d["cx"]), cy=float(d["cy"]),
        rotation=rotation, translation=np.asarray(d["translation"], dtype=np.float64),
        width=int(d["width"]), height=int(d["height"]),
    )


def _camera_to_dict(cam: Camera) -> dict:
    return {
        "rotation": cam.rotation.tolist(),
        "translation": cam.translation.tolist(),
        "fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
        "width": cam.width, "height": cam.height,
    }


def load_scene(manifest_path) -> LoadedScene:
    """Load and validate a scene manifest plus all files it references."""
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SceneError(f"cannot parse manifest {manifest_path}: {exc}") from exc
    root = manifest_path.parent
    views = manifest.get("views")
    if not views:
        raise SceneError("manifest lists no views")

    images, cameras, depths = [], [], []
    for i, view in enumerate(views):
        try:
            camera = _camera_from_dict(view["camera"])
        except (KeyError, ValueError, SceneError) as exc:
            raise SceneError(f"view {i}: {exc}") from exc
        image_path = root / view["image"]
        if not image_path.exists():
            raise SceneError(f"view {i}: missing image file {image_path}")
        image = read_image(image_path)
        if image.shape[:2] != (camera.height, camera.width):
            raise SceneError(
                f"view {i}: image size {image.shape[1]}x{image.shape[0]} does not "
                f"match camera size {camera.width}x{camera.height}"
            )
        depth = None
        if view.get("depth"):
            depth_path = root / view["depth"]
            if not depth_path.exists():
                raise SceneError(f"view {i}: missing depth file {depth_path}")
            depth = read_depth(depth_path)
            if depth.shape != image.shape[:2]:
                raise SceneError(f"view {i}: depth size mismatch")
        images.append(image)
        cameras.append(camera)
        depths.append(depth)

    disparity_range = None
    if manifest.get("disparity_range"):
        dr = manifest["disparity_range"]
        disparity_range = DisparityRange(float(dr["d_min"]), float(dr["d_max"]), int(dr["n_d"]))
    return LoadedScene(images, cameras, depths, disparity_range)


def save_scene(out_dir, images, cameras, depths=None,
               disparity_range: DisparityRange | None = None) -> Path:
    """Write images, optional depth maps, and a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    views = []
    for i, (image, camera) in enumerate(zip(images, cameras)):
        image_name = f"view_{i:03d}.png"
        write_image(out_dir / image_name, image)
        view = {"image": image_name, "camera": _camera_to_dict(camera)}
        if depths is not None and depths[i] is not None:
            depth_name = f"depth_{i:03d}.dpth"
            write_depth(out_dir / depth_name, depths[i])
            view["depth"] = depth_name
        views.append(view)
    manifest = {"views": views}
    if disparity_range is not None:
        manifest["disparity_range"] = {
            "d_min": disparity_range.d_min,
            "d_max": disparity_range.d_max,
            "n_d": disparity_range.n_d,
        }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2))
    return manifest_path


# ---------------------------------------------------------------------------
# Synthetic scenes
# ---------------------------------------------------------------------------

@dataclass
class Rect:
    """Textured 3D rectangle: points origin + a*edge_u + b*edge_v, a,b in [0,1]."""

    origin: tuple
    edge_u: tuple
    edge_v: tuple
    color_a: tuple = (0.9, 0.9, 0.9)
    color_b: tuple = (0.2, 0.2, 0.2)
    check_size: float = 0.5
    noise_amp: float = 0.4
    noise_scale: float = 0.25
    edge_softness: float = 0.08


@dataclass
class Box:
    """Axis-aligned textured box."""

    min_corner: tuple
    max_corner: tuple
    color_a: tuple = (0.9, 0.9, 0.9)
    color_b: tuple = (0.2, 0.2, 0.2)
    check_size: float = 0.5
    noise_amp: float = 0.4
    noise_scale: float = 0.25
    edge_softness: float = 0.08


@dataclass
class CameraPose:
    position: tuple
    look_at: tuple
    up: tuple = (0.0, 1.0, 0.0)


@dataclass
class SceneSpec:
    """Declarative description of a synthetic scene and its camera rig."""

    width: int
    height: int
    focal: float
    cameras: list
    primitives: list
    background: tuple = (0.0, 0.0, 0.0)

    def build_cameras(self) -> list:
        cx, cy = self.width / 2.0, self.height / 2.0
        return [
            look_at_camera(c.position, c.look_at, c.up, self.focal, self.focal,
                           cx, cy, self.width, self.height)
            for c in self.cameras
        ]


def scene_spec_to_json(spec: SceneSpec) -> str:
    def prim_dict(p):
        d = {k: list(v) if isinstance(v, (tuple, list)) else v for k, v in vars(p).items()}
        d["type"] = "rect" if isinstance(p, Rect) else "box"
        return d

    return json.dumps(
        {
            "width": spec.width, "height": spec.height, "focal": spec.focal,
            "background": list(spec.background),
            "cameras": [
                {"position": list(c.position), "look_at": list(c.look_at), "up": list(c.up)}
                for c in spec.cameras
            ],
            "primitives": [prim_dict(p) for p in spec.primitives],
        },
        indent=2,
    )


def scene_spec_from_json(text: str) -> SceneSpec:
    raw = json.loads(text)
    prims = []
    for p in raw["primitives"]:
        p = dict(p)
        kind = p.pop("type")
        cls = {"rect": Rect, "box": Box}.get(kind)
        if cls is None:
            raise SceneError(f"unknown primitive type: {kind}")
        prims.append(cls(**p))
    cameras = [CameraPose(tuple(c["position"]), tuple(c["look_at"]),
                          tuple(c.get("up", (0.0, 1.0, 0.0)))) for c in raw["cameras"]]
    return SceneSpec(
        width=int(raw["width"]), height=int(raw["height"]), focal=float(raw["focal"]),
        cameras=cameras, primitives=prims,
        background=tuple(raw.get("background", (0.0, 0.0, 0.0))),
    )


class _Texture:
    """Checkerboard modulated by smooth value noise, evaluated on surface
    coordinates in world units so any two views observe identical colors.

    Checker transitions ramp linearly over edge_softness * check_size world
    units; piecewise-linear texture survives bilinear resampling almost
    exactly, which keeps warped renders comparable to pixel-aligned ground
    truth."""

    GRID = 64

    def __init__(self, rng: np.random.Generator, color_a, color_b,
                 check_size: float, noise_amp: float, noise_scale: float,
                 edge_softness: float):
        self.noise_grid = rng.random((self.GRID, self.GRID))
        self.color_a = np.asarray(color_a, dtype=np.float64)
        self.color_b = np.asarray(color_b, dtype=np.float64)
        self.check_size = check_size
        self.noise_amp = noise_amp
        self.noise_scale = noise_scale
        self.edge_softness = edge_softness

    def _soft_square(self, u: np.ndarray) -> np.ndarray:
        """Square wave of period 2*check_size with linear edge ramps; 0 on
        even squares, 1 on odd ones."""
        q = (u / self.check_size) % 2.0
        ramp = max(self.edge_softness, 1e-9)
        # Distance to the nearest edge of the current square, sign by parity.
        dist = np.minimum(q % 1.0, 1.0 - (q % 1.0))
        level = np.clip(dist / ramp, 0.0, 1.0) * 0.5
        return np.where(q < 1.0, 0.5 - level, 0.5 + level)

    def shade(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        su = self._soft_square(u)
        sv = self._soft_square(v)
        check = su + sv - 2.0 * su * sv  # soft XOR
        base = self.color_a[None, :] + check[..., None] * (self.color_b - self.color_a)
        gu = (u / self.noise_scale) % self.GRID
        gv = (v / self.noise_scale) % self.GRID
        u0 = np.floor(gu).astype(np.intp)
        v0 = np.floor(gv).astype(np.intp)
        fu, fv = gu - u0, gv - v0
        # Negative inputs can round the modulo up to exactly GRID.
        u0 %= self.GRID
        v0 %= self.GRID
        u1 = (u0 + 1) % self.GRID
        v1 = (v0 + 1) % self.GRID
        g = self.noise_grid
        noise = (g[v0, u0] * (1 - fu) + g[v0, u1] * fu) * (1 - fv) \
            + (g[v1, u0] * (1 - fu) + g[v1, u1] * fu) * fv
        gain = 1.0 - self.noise_amp + self.noise_amp * noise[..., None]
        return base * gain


def _intersect_rect(prim: Rect, origins, dirs):
    o = np.asarray(prim.origin, dtype=np.float64)
    eu = np.asarray(prim.edge_u, dtype=np.float64)
    ev = np.asarray(prim.edge_v, dtype=np.float64)
    n = np.cross(eu, ev)
    denom = dirs @ n
    with np.errstate(divide="ignore", invalid="ignore"):
        t = ((o - origins) @ n) / denom
    hit_pts = origins + t[..., None] * dirs
    rel = hit_pts - o
    a = (rel @ eu) / (eu @ eu)
    b = (rel @ ev) / (ev @ ev)
    valid = (np.abs(denom) > 1e-15) & (t > _RAY_EPS) \
        & (a >= 0) & (a <= 1) & (b >= 0) & (b <= 1)
    u = a * np.linalg.norm(eu)
    v = b * np.linalg.norm(ev)
    return t, valid, u, v


def _intersect_box(prim: Box, origins, dirs):
    lo = np.asarray(prim.min_corner, dtype=np.float64)
    hi = np.asarray(prim.max_corner, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
    t1 = (lo - origins) * inv
    t2 = (hi - origins) * inv
    t_near_ax = np.minimum(t1, t2)
    t_far_ax = np.maximum(t1, t2)
    axis = np.argmax(t_near_ax, axis=-1)
    t_near = np.max(t_near_ax, axis=-1)
    t_far = np.min(t_far_ax, axis=-1)
    with np.errstate(invalid="ignore"):
        valid = (t_near <= t_far) & (t_near > _RAY_EPS)
    t = np.where(valid, t_near, np.inf)
    with np.errstate(invalid="ignore"):
        hit_pts = origins + np.where(valid, t, 0.0)[..., None] * dirs
    # Face-local texture coordinates from the two tangent axes of the hit face.
    u = np.empty(t.shape)
    v = np.empty(t.shape)
    rel = hit_pts - lo
    for ax, (ua, va) in enumerate([(1, 2), (0, 2), (0, 1)]):
        sel = axis == ax
        u[sel] = rel[sel, ua]
        v[sel] = rel[sel, va]
    return t, valid, u, v


def render_scene(spec: SceneSpec, seed: int):
    """Ray-cast every camera in the rig.

    Returns (images, depths, cameras): float32 RGB images in [0, 1] and exact
    float32 depth along each camera's optical axis (+inf where no surface).
    Deterministic: identical spec and seed give bit-identical outputs.
    """
    if not spec.primitives:
        raise SceneError("scene has no primitives")
    if len(spec.cameras) < 2:
        raise SceneError("scene rig needs at least 2 cameras")
    cameras = spec.build_cameras()
    for cam_idx, cam in enumerate(cameras):
        c = cam.center
        for prim in spec.primitives:
            if isinstance(prim, Box):
                lo = np.asarray(prim.min_corner)
                hi = np.asarray(prim.max_corner)
                if np.all(c > lo) & np.all(c < hi):
                    raise InvalidRigError(f"camera {cam_idx} is inside a box primitive")

    textures = [
        _Texture(np.random.default_rng([seed, i]), p.color_a, p.color_b,
                 p.check_size, p.noise_amp, p.noise_scale, p.edge_softness)
        for i, p in enumerate(spec.primitives)
    ]

    images, depths = [], []
    xs, ys = np.meshgrid(np.arange(spec.width), np.arange(spec.height))
    for cam in cameras:
        dir_cam = np.stack(
            [(xs - cam.cx) / cam.fx, (ys - cam.cy) / cam.fy, np.ones_like(xs, dtype=np.float64)],
            axis=-1,
        )
        dirs = dir_cam.reshape(-1, 3) @ cam.rotation  # R^T applied to rows
        origins = np.broadcast_to(cam.center, dirs.shape)

        best_t = np.full(dirs.shape[0], np.inf)
        color = np.tile(np.asarray(spec.background, dtype=np.float64), (dirs.shape[0], 1))
        for prim, tex in zip(spec.primitives, textures):
            if isinstance(prim, Rect):
                t, valid, u, v = _intersect_rect(prim, origins, dirs)
            else:
                t, valid, u, v = _intersect_box(prim, origins, dirs)
            closer = valid & (t < best_t)
            if not closer.any():
                continue
            best_t[closer] = t[closer]
            color[closer] = tex.shade(u[closer], v[closer])

        images.append(
            np.clip(color, 0.0, 1.0).reshape(spec.height, spec.width, 3).astype(np.float32)
        )
        depths.append(best_t.reshape(spec.height, spec.width).astype(np.float32))
    return images, depths, cameras


def generate_synthetic_scene(spec: SceneSpec, seed: int, out_dir) -> Path:
    """Render a synthetic scene to disk; returns the manifest path."""
    images, depths, cameras = render_scene(spec, seed)
    return save_scene(out_dir, images, cameras, depths)
