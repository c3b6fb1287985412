"""Software renderer: ray-cast primitives, flat shading, background compositing.

Scenes are small sets of analytic primitives (spheres, capsules, axis-aligned
boxes) above a translucent ground plane.  Every pixel traces one ray; the
nearest primitive hit wins the depth test, the ground plane is alpha-blended
at its configured opacity, and background pixels are a convex blend of the
skybox color and the active background video frame with weight ``beta_bg``.
All math is float; pixels are rounded to 8-bit once at the end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .camera import CameraExtrinsics
from .distractions import ColorState

AMBIENT = 0.45
# Unit vector pointing from the scene toward the light.
LIGHT_DIR = np.array([-0.35, 0.45, 0.82]) / np.linalg.norm([-0.35, 0.45, 0.82])
_EPS = 1e-9


@dataclass(frozen=True)
class Sphere:
    center: np.ndarray
    radius: float
    body: str

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))


@dataclass(frozen=True)
class Capsule:
    start: np.ndarray
    end: np.ndarray
    radius: float
    body: str

    def __post_init__(self):
        object.__setattr__(self, "start", np.asarray(self.start, dtype=float))
        object.__setattr__(self, "end", np.asarray(self.end, dtype=float))


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by center and half extents."""

    center: np.ndarray
    half_extents: np.ndarray
    body: str

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "half_extents", np.asarray(self.half_extents, dtype=float))


@dataclass(frozen=True)
class GroundPlane:
    """Infinite checkered plane at a fixed height, alpha-blended at ``opacity``."""

    z: float = 0.0
    opacity: float = 0.3
    color_a: np.ndarray = field(default_factory=lambda: np.array([0.52, 0.54, 0.57]))
    color_b: np.ndarray = field(default_factory=lambda: np.array([0.40, 0.42, 0.46]))
    cell: float = 0.5


@dataclass(frozen=True)
class SceneDescription:
    """Primitives plus per-scene constants; body colors live in ColorState.

    ``bodies`` fixes the order in which :class:`ColorState` rows are
    interpreted; every primitive's ``body`` must appear in it.
    """

    primitives: tuple
    bodies: tuple[str, ...]
    ground: GroundPlane | None
    skybox_color: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "skybox_color", np.asarray(self.skybox_color, dtype=float))
        known = set(self.bodies)
        for prim in self.primitives:
            if prim.body not in known:
                raise ValueError(f"primitive body {prim.body!r} missing from scene bodies {self.bodies}")

    def original_colors(self, palette: dict[str, np.ndarray]) -> ColorState:
        rgb = np.array([palette[name] for name in self.bodies], dtype=float)
        return ColorState(original=rgb, current=rgb.copy())


def _intersect_sphere(origin, dirs, center, radius):
    oc = origin - center
    b = 2.0 * dirs @ oc
    c = float(oc @ oc) - radius * radius
    disc = b * b - 4.0 * c
    hit = disc >= 0.0
    sqrt_disc = np.sqrt(np.where(hit, disc, 0.0))
    t = (-b - sqrt_disc) / 2.0
    t = np.where(hit & (t > _EPS), t, np.inf)
    t_safe = np.where(np.isfinite(t), t, 0.0)
    points = origin + dirs * t_safe[:, None]
    normals = np.where(np.isfinite(t)[:, None], (points - center) / radius, 0.0)
    return t, normals


def _intersect_capsule(origin, dirs, start, end, radius):
    axis = end - start
    length = float(np.linalg.norm(axis))
    if length < _EPS:
        return _intersect_sphere(origin, dirs, start, radius)
    u = axis / length
    oa = origin - start
    d_par = dirs @ u
    o_par = float(oa @ u)
    d_perp = dirs - d_par[:, None] * u
    o_perp = oa - o_par * u

    a = np.einsum("ij,ij->i", d_perp, d_perp)
    b = 2.0 * d_perp @ o_perp
    c = float(o_perp @ o_perp) - radius * radius
    disc = b * b - 4.0 * a * c
    valid = (disc >= 0.0) & (a > _EPS)
    sqrt_disc = np.sqrt(np.where(valid, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t_cyl = np.where(valid, (-b - sqrt_disc) / (2.0 * a), np.inf)
    s = o_par + t_cyl * d_par
    t_cyl = np.where((t_cyl > _EPS) & (s >= 0.0) & (s <= length), t_cyl, np.inf)

    t_cap0, _ = _intersect_sphere(origin, dirs, start, radius)
    t_cap1, _ = _intersect_sphere(origin, dirs, end, radius)
    t = np.minimum(t_cyl, np.minimum(t_cap0, t_cap1))

    t_safe = np.where(np.isfinite(t), t, 0.0)
    points = origin + dirs * t_safe[:, None]
    proj = np.clip((points - start) @ u, 0.0, length)
    closest = start + proj[:, None] * u
    normals = np.where(np.isfinite(t)[:, None], (points - closest) / radius, 0.0)
    return t, normals


def _intersect_box(origin, dirs, center, half_extents):
    lo = center - half_extents
    hi = center + half_extents
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - origin) / dirs
        t2 = (hi - origin) / dirs
    # Rays exactly parallel to a slab produce +-inf pairs, which min/max
    # resolve correctly; NaN only occurs when the origin sits on a face.
    t_lo = np.fmin(t1, t2)
    t_hi = np.fmax(t1, t2)
    t_near = np.max(t_lo, axis=1)
    t_far = np.min(t_hi, axis=1)
    axis = np.argmax(t_lo, axis=1)
    hit = (t_near <= t_far) & (t_near > _EPS)
    t = np.where(hit, t_near, np.inf)
    normals = np.zeros_like(dirs)
    rows = np.arange(dirs.shape[0])
    signs = -np.sign(dirs[rows, axis])
    normals[rows, axis] = np.where(hit, signs, 0.0)
    return t, normals


def _intersect(prim, origin, dirs):
    if isinstance(prim, Sphere):
        return _intersect_sphere(origin, dirs, prim.center, prim.radius)
    if isinstance(prim, Capsule):
        return _intersect_capsule(origin, dirs, prim.start, prim.end, prim.radius)
    if isinstance(prim, Box):
        return _intersect_box(origin, dirs, prim.center, prim.half_extents)
    raise TypeError(f"unsupported primitive {type(prim).__name__}")


def _ray_grid(extrinsics: CameraExtrinsics, width: int, height: int):
    tan_half = math.tan(extrinsics.fov / 2.0)
    xs = (np.arange(width) + 0.5 - width / 2.0) / (height / 2.0) * tan_half
    ys = (height / 2.0 - (np.arange(height) + 0.5)) / (height / 2.0) * tan_half
    xg, yg = np.meshgrid(xs, ys)
    dirs = (xg[..., None] * extrinsics.right
            + yg[..., None] * extrinsics.up
            + extrinsics.forward)
    dirs = dirs.reshape(-1, 3)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return dirs


def render(
    scene: SceneDescription,
    extrinsics: CameraExtrinsics,
    colors: ColorState,
    background_frame: np.ndarray | None = None,
    beta_bg: float = 0.0,
    size=(100, 100),
) -> np.ndarray:
    """Render the scene to an (H, W, 3) uint8 frame.

    ``colors.current`` supplies one RGB row per scene body.  When a
    background frame is given, background pixels are the per-channel convex
    combination (1 - beta_bg) * skybox + beta_bg * frame before rounding.
    """
    width, height = (int(size), int(size)) if np.isscalar(size) else (int(size[0]), int(size[1]))
    if width < 1 or height < 1:
        raise ValueError(f"image size must be positive, got {(width, height)}")
    if not 0.0 <= beta_bg <= 1.0:
        raise ValueError(f"beta_bg must be in [0, 1], got {beta_bg}")
    if colors.current.shape[0] != len(scene.bodies):
        raise ValueError(
            f"ColorState has {colors.current.shape[0]} bodies, scene declares {len(scene.bodies)}")

    origin = extrinsics.position
    dirs = _ray_grid(extrinsics, width, height)
    n_rays = dirs.shape[0]

    # Background layer: quantized skybox blended with the video frame.
    sky = np.rint(scene.skybox_color * 255.0)
    if background_frame is not None and beta_bg > 0.0:
        frame = np.asarray(background_frame)
        if frame.shape[0] != height or frame.shape[1] != width:
            raise ValueError(
                f"background frame is {frame.shape[1]}x{frame.shape[0]}, expected {width}x{height}")
        background = (1.0 - beta_bg) * sky + beta_bg * frame.reshape(n_rays, 3).astype(float)
    else:
        background = np.broadcast_to(sky, (n_rays, 3)).copy()

    # Nearest primitive per ray.
    body_index = {name: i for i, name in enumerate(scene.bodies)}
    best_t = np.full(n_rays, np.inf)
    best_rgb = np.zeros((n_rays, 3))
    for prim in scene.primitives:
        t, normals = _intersect(prim, origin, dirs)
        closer = t < best_t
        if not closer.any():
            continue
        diffuse = np.clip(normals @ LIGHT_DIR, 0.0, 1.0)
        shade = AMBIENT + (1.0 - AMBIENT) * diffuse
        rgb = colors.current[body_index[prim.body]] * shade[:, None] * 255.0
        best_t = np.where(closer, t, best_t)
        best_rgb = np.where(closer[:, None], rgb, best_rgb)

    under = np.where(np.isfinite(best_t)[:, None], best_rgb, background)

    if scene.ground is not None and scene.ground.opacity > 0.0:
        g = scene.ground
        with np.errstate(divide="ignore", invalid="ignore"):
            t_ground = (g.z - origin[2]) / dirs[:, 2]
        t_ground = np.where((dirs[:, 2] != 0.0) & (t_ground > _EPS), t_ground, np.inf)
        ground_vis = t_ground < best_t
        if ground_vis.any():
            t_safe = np.where(np.isfinite(t_ground), t_ground, 0.0)
            points = origin + dirs * t_safe[:, None]
            parity = (np.floor(points[:, 0] / g.cell) + np.floor(points[:, 1] / g.cell)) % 2
            tone = np.where(parity[:, None] == 0, g.color_a, g.color_b)
            shade = AMBIENT + (1.0 - AMBIENT) * max(0.0, float(LIGHT_DIR[2]))
            ground_rgb = tone * shade * 255.0
            blended = g.opacity * ground_rgb + (1.0 - g.opacity) * under
            under = np.where(ground_vis[:, None], blended, under)

    image = np.clip(np.rint(under), 0, 255).astype(np.uint8)
    return image.reshape(height, width, 3)


def crop(frame: np.ndarray, offset: tuple[int, int], crop_size: tuple[int, int] | int) -> np.ndarray:
    """Copy the (row, col)-offset subwindow of ``frame``.

    The window must lie fully inside the frame.
    """
    frame = np.asarray(frame)
    if np.isscalar(crop_size):
        ch, cw = int(crop_size), int(crop_size)
    else:
        ch, cw = int(crop_size[0]), int(crop_size[1])
    row, col = int(offset[0]), int(offset[1])
    height, width = frame.shape[:2]
    if row < 0 or col < 0 or ch < 1 or cw < 1 or row + ch > height or col + cw > width:
        raise ValueError(
            f"crop window {ch}x{cw} at offset ({row}, {col}) exceeds frame {height}x{width}")
    return frame[row:row + ch, col:col + cw].copy()
