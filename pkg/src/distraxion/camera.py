"""World-space camera frames from spherical poses, plus pinhole projection.

The distraction camera orbits a focus point on a sphere (azimuth, polar angle
from the scene up axis, radius) with an extra roll about the viewing axis.
The scene up axis is +z; the fallback up reference for the polar singularity
(camera straight above the focus) is +x.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distractions import CameraState

DEFAULT_FOV = math.radians(45.0)
UP_AXIS = np.array([0.0, 0.0, 1.0])
FALLBACK_UP = np.array([1.0, 0.0, 0.0])


class DegenerateGeometryError(ValueError):
    """Camera position coincides with the focus point."""


@dataclass(frozen=True)
class FocusMode:
    """Focus target policy: track the agent every frame or hold a fixed point."""

    mode: str  # "tracking" or "fixed"
    focus_point: np.ndarray

    def __post_init__(self):
        if self.mode not in ("tracking", "fixed"):
            raise ValueError(f"unknown focus mode {self.mode!r}")
        object.__setattr__(self, "focus_point", np.asarray(self.focus_point, dtype=float))

    def resolve(self, agent_position: np.ndarray) -> np.ndarray:
        if self.mode == "tracking":
            return np.asarray(agent_position, dtype=float)
        return self.focus_point


@dataclass(frozen=True)
class CameraExtrinsics:
    """Camera placement: position, orthonormal basis, and field of view.

    ``rotation`` maps world offsets into camera coordinates with rows
    (right, up, back); points in front of the camera have negative z. The
    basis is right-handed (determinant +1).
    """

    position: np.ndarray
    right: np.ndarray
    up: np.ndarray
    forward: np.ndarray
    fov: float = DEFAULT_FOV

    @property
    def rotation(self) -> np.ndarray:
        return np.stack([self.right, self.up, -self.forward])

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=float) - self.position) @ self.rotation.T


def spherical_to_cartesian(pose: CameraState, focus: np.ndarray, r_original: float) -> np.ndarray:
    """Camera position for a spherical pose around ``focus``.

    The polar angle is measured from the scene up axis, so (phi=0, theta=0)
    places the camera straight above the focus at distance r * r_original.
    """
    if pose.r <= 0:
        raise ValueError(f"radius must be positive, got {pose.r}")
    st, ct = math.sin(pose.theta), math.cos(pose.theta)
    sp, cp = math.sin(pose.phi), math.cos(pose.phi)
    offset = np.array([st * cp, st * sp, ct]) * (pose.r * r_original)
    return np.asarray(focus, dtype=float) + offset


def cartesian_to_spherical(position: np.ndarray, focus: np.ndarray, r_original: float):
    """Inverse of :func:`spherical_to_cartesian`; returns (phi, theta, r)."""
    d = np.asarray(position, dtype=float) - np.asarray(focus, dtype=float)
    dist = float(np.linalg.norm(d))
    if dist == 0.0:
        raise DegenerateGeometryError("position coincides with focus")
    theta = math.acos(max(-1.0, min(1.0, d[2] / dist)))
    phi = math.atan2(d[1], d[0])
    return phi, theta, dist / r_original


def look_at_with_roll(
    position: np.ndarray,
    focus: np.ndarray,
    roll: float = 0.0,
    fov: float = DEFAULT_FOV,
) -> CameraExtrinsics:
    """Orient the camera at ``position`` toward ``focus`` and apply roll.

    The up direction is derived from the scene up axis (Gram-Schmidt against
    the view direction), then both right and up are rotated about the forward
    axis by ``roll``.
    """
    position = np.asarray(position, dtype=float)
    focus = np.asarray(focus, dtype=float)
    offset = focus - position
    dist = float(np.linalg.norm(offset))
    if dist < 1e-9:
        raise DegenerateGeometryError("camera position is within 1e-9 of the focus point")
    forward = offset / dist

    reference = UP_AXIS if abs(float(forward @ UP_AXIS)) < 1.0 - 1e-9 else FALLBACK_UP
    right = np.cross(forward, reference)
    right /= np.linalg.norm(right)
    up = np.cross(right, forward)

    c, s = math.cos(roll), math.sin(roll)
    right, up = c * right + s * up, -s * right + c * up
    return CameraExtrinsics(position=position, right=right, up=up, forward=forward, fov=float(fov))


def project(extrinsics: CameraExtrinsics, point: np.ndarray, image_size) -> np.ndarray | None:
    """Pinhole projection of a world point to pixel coordinates.

    Pixel centers lie at integer + 0.5, so the optical axis maps to
    (width / 2, height / 2).  Returns None for points at or behind the camera
    plane (culled).
    """
    width, height = _as_size(image_size)
    cam = extrinsics.world_to_camera(np.asarray(point, dtype=float))
    depth = -cam[2]
    if depth <= 1e-12:
        return None
    focal = (height / 2.0) / math.tan(extrinsics.fov / 2.0)
    u = width / 2.0 + focal * cam[0] / depth
    v = height / 2.0 - focal * cam[1] / depth
    return np.array([u, v])


def _as_size(image_size) -> tuple[int, int]:
    if np.isscalar(image_size):
        return int(image_size), int(image_size)
    width, height = image_size
    return int(width), int(height)
