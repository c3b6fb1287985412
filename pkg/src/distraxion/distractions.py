"""Seedable stochastic processes that drive the visual distractions.

Three independent processes produce per-step parameters for the camera pose,
the object colors, and the background frame selection.  Each process is scaled
by a difficulty magnitude in [0, 1] that widens both the range and (in the
dynamic setting) the speed of the distraction.  All randomness flows through
an explicitly passed ``numpy.random.Generator`` so trajectories are
reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "DifficultyConfig",
    "CameraRange",
    "CameraSpeedParams",
    "CameraState",
    "ColorState",
    "BackgroundSchedule",
    "camera_range_from_scale",
    "camera_speed_params",
    "sample_camera_start",
    "step_camera",
    "sample_colors",
    "step_colors",
    "sample_background",
    "step_background",
]


class ConfigurationError(ValueError):
    """Raised for out-of-range difficulty or malformed configuration."""


def _check_unit_interval(name: str, value: float) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0 or math.isnan(value):
        raise ConfigurationError(f"{name} must be in [0, 1], got {value!r}")
    return value


@dataclass(frozen=True)
class DifficultyConfig:
    """Difficulty magnitudes for the three distraction types.

    ``beta_cam`` scales the camera pose range and walk speed, ``beta_rgb`` the
    per-channel color range and walk speed, ``beta_bg`` the blend weight of
    the video background over the skybox, and ``num_videos`` is the number of
    background videos drawn from (0 disables the background distraction).
    """

    beta_cam: float = 0.0
    beta_rgb: float = 0.0
    beta_bg: float = 0.0
    num_videos: int = 0
    dynamic: bool = False
    seed: int = 0

    def __post_init__(self):
        _check_unit_interval("beta_cam", self.beta_cam)
        _check_unit_interval("beta_rgb", self.beta_rgb)
        _check_unit_interval("beta_bg", self.beta_bg)
        if int(self.num_videos) != self.num_videos or self.num_videos < 0:
            raise ConfigurationError(f"num_videos must be a non-negative integer, got {self.num_videos!r}")


@dataclass(frozen=True)
class CameraRange:
    """Camera pose bounds, normalized so the original radius is 1.

    ``phi_max``, ``theta_max`` and ``roll_max`` are maximum angular offsets
    from the original pose; ``r_min``/``r_max`` bound the radius.
    """

    phi_max: float
    theta_max: float
    roll_max: float
    r_min: float
    r_max: float

    def intervals(self, phi0: float, theta0: float, roll0: float = 0.0):
        """Absolute sampling intervals around an original pose.

        Azimuth and roll vary symmetrically about the original values; the
        polar angle varies one-sidedly toward the zenith (clamped at 0) so the
        camera stays in the upper hemisphere; the radius interval is absolute
        in normalized units.  Returns ``((phi_lo, phi_hi), (theta_lo,
        theta_hi), (r_lo, r_hi), (roll_lo, roll_hi))``.
        """
        phi = (phi0 - self.phi_max, phi0 + self.phi_max)
        theta = (max(0.0, theta0 - self.theta_max), theta0)
        r = (self.r_min, self.r_max)
        roll = (roll0 - self.roll_max, roll0 + self.roll_max)
        return phi, theta, r, roll


@dataclass(frozen=True)
class CameraSpeedParams:
    """Random-walk parameters for the dynamic camera, per agent step."""

    v_max: float
    sigma: float
    v_roll_max: float
    sigma_roll: float


@dataclass(frozen=True)
class CameraState:
    """Spherical camera pose plus walk velocities.

    ``theta`` is the polar angle measured from the scene up axis, ``phi`` the
    azimuth, ``r`` the radius in normalized units (original radius = 1) and
    ``roll`` the rotation about the viewing axis.  ``velocity`` is a Cartesian
    (dx, dy, dz) vector in normalized units per step.
    """

    phi: float
    theta: float
    r: float
    roll: float
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    roll_velocity: float = 0.0


@dataclass(frozen=True)
class ColorState:
    """Current and original RGB colors of every recolorable body.

    Both arrays have shape (num_bodies, 3) with channels in [0, 1].
    """

    original: np.ndarray
    current: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "original", np.asarray(self.original, dtype=float))
        object.__setattr__(self, "current", np.asarray(self.current, dtype=float))
        if self.original.shape != self.current.shape:
            raise ConfigurationError("original and current color arrays must have the same shape")


@dataclass(frozen=True)
class BackgroundSchedule:
    """Active video, frame, and ping-pong playback direction."""

    video_index: int
    frame_index: int
    direction: int

    def __post_init__(self):
        if self.direction not in (-1, 1):
            raise ConfigurationError(f"direction must be +1 or -1, got {self.direction!r}")


def camera_range_from_scale(beta_cam: float) -> CameraRange:
    """Camera pose bounds for a difficulty magnitude.

    The angular maxima grow linearly to pi/2 and the radius interval widens
    from [1, 1] to [0.5, 2.5] times the original radius.
    """
    beta = _check_unit_interval("beta_cam", beta_cam)
    angle = math.pi * beta / 2.0
    return CameraRange(
        phi_max=angle,
        theta_max=angle,
        roll_max=angle,
        r_min=1.0 - 0.5 * beta,
        r_max=1.0 + 1.5 * beta,
    )


def camera_speed_params(beta_cam: float) -> CameraSpeedParams:
    """Walk speed limits and noise scales, relative to the viewing range."""
    beta = _check_unit_interval("beta_cam", beta_cam)
    return CameraSpeedParams(
        v_max=2.0 * beta / 5.0,
        sigma=beta / 10.0,
        v_roll_max=math.pi * beta / 50.0,
        sigma_roll=math.pi * beta / 300.0,
    )


def _clip_norm(vec: np.ndarray, max_norm: float) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm > max_norm:
        if max_norm == 0.0:
            return np.zeros_like(vec)
        return vec * (max_norm / norm)
    return vec


def sample_camera_start(
    rng: np.random.Generator,
    camera_range: CameraRange,
    phi0: float,
    theta0: float,
    roll0: float = 0.0,
    speed: CameraSpeedParams | None = None,
) -> CameraState:
    """Uniformly sample a camera pose (and initial velocities when dynamic).

    Pose components are drawn independently and uniformly from the intervals
    of ``camera_range`` around the original pose.  When ``speed`` is given
    (dynamic setting) the spatial velocity is drawn per component within
    +-v_max and rescaled into the v_max ball, and the roll velocity uniformly
    within +-v_roll_max; otherwise both start at zero.
    """
    (phi_lo, phi_hi), (th_lo, th_hi), (r_lo, r_hi), (roll_lo, roll_hi) = camera_range.intervals(
        phi0, theta0, roll0
    )
    phi = rng.uniform(phi_lo, phi_hi)
    theta = rng.uniform(th_lo, th_hi)
    r = rng.uniform(r_lo, r_hi)
    roll = rng.uniform(roll_lo, roll_hi)
    if speed is None:
        velocity = np.zeros(3)
        roll_velocity = 0.0
    else:
        velocity = _clip_norm(rng.uniform(-speed.v_max, speed.v_max, size=3), speed.v_max)
        roll_velocity = float(rng.uniform(-speed.v_roll_max, speed.v_roll_max))
    return CameraState(phi=float(phi), theta=float(theta), r=float(r), roll=float(roll),
                       velocity=velocity, roll_velocity=roll_velocity)


def _spherical_to_unit_cartesian(phi: float, theta: float, r: float) -> np.ndarray:
    st, ct = math.sin(theta), math.cos(theta)
    sp, cp = math.sin(phi), math.cos(phi)
    return np.array([r * st * cp, r * st * sp, r * ct])


def _cartesian_to_spherical(p: np.ndarray) -> tuple[float, float, float]:
    r = float(np.linalg.norm(p))
    if r == 0.0:
        return 0.0, 0.0, 0.0
    theta = math.acos(max(-1.0, min(1.0, p[2] / r)))
    phi = math.atan2(p[1], p[0])
    return phi, theta, r


def step_camera(
    rng: np.random.Generator,
    state: CameraState,
    camera_range: CameraRange,
    speed: CameraSpeedParams,
    phi0: float,
    theta0: float,
    roll0: float = 0.0,
) -> CameraState:
    """Advance the camera one step of the bounded random walk.

    The velocity receives isotropic Gaussian noise and is clipped to the
    maximum speed, the position is updated in Cartesian space, re-expressed in
    spherical coordinates, and clipped per component to the pose range.  The
    roll performs the analogous scalar walk.  Velocities are left unchanged
    when the pose clips against a bound.
    """
    velocity = _clip_norm(state.velocity + rng.normal(0.0, speed.sigma, size=3), speed.v_max)
    position = _spherical_to_unit_cartesian(state.phi, state.theta, state.r) + velocity
    phi, theta, r = _cartesian_to_spherical(position)

    (phi_lo, phi_hi), (th_lo, th_hi), (r_lo, r_hi), (roll_lo, roll_hi) = camera_range.intervals(
        phi0, theta0, roll0
    )
    # atan2 wraps the azimuth into (-pi, pi]; recenter near phi0 before clipping
    # so ranges that straddle the wrap point clip correctly.
    phi = phi0 + math.remainder(phi - phi0, 2.0 * math.pi)
    phi = min(max(phi, phi_lo), phi_hi)
    theta = min(max(theta, th_lo), th_hi)
    r = min(max(r, r_lo), r_hi)

    roll_velocity = float(np.clip(state.roll_velocity + rng.normal(0.0, speed.sigma_roll),
                                  -speed.v_roll_max, speed.v_roll_max))
    roll = float(np.clip(state.roll + roll_velocity, roll_lo, roll_hi))

    return CameraState(phi=phi, theta=theta, r=r, roll=roll,
                       velocity=velocity, roll_velocity=roll_velocity)


def sample_colors(rng: np.random.Generator, originals: np.ndarray, beta_rgb: float) -> ColorState:
    """Sample each channel uniformly within +-beta_rgb of its original value.

    Results are clipped to the valid color range [0, 1].
    """
    beta = _check_unit_interval("beta_rgb", beta_rgb)
    originals = np.asarray(originals, dtype=float)
    current = rng.uniform(originals - beta, originals + beta)
    return ColorState(original=originals, current=np.clip(current, 0.0, 1.0))


def step_colors(rng: np.random.Generator, state: ColorState, beta_rgb: float) -> ColorState:
    """Advance the per-channel color walk with sigma = 0.03 * beta_rgb.

    Channels are clipped to within beta_rgb of the original color and to
    [0, 1].
    """
    beta = _check_unit_interval("beta_rgb", beta_rgb)
    if beta == 0.0:
        return state
    current = state.current + rng.normal(0.0, 0.03 * beta, size=state.current.shape)
    current = np.clip(current, state.original - beta, state.original + beta)
    return ColorState(original=state.original, current=np.clip(current, 0.0, 1.0))


def sample_background(rng: np.random.Generator, num_videos: int, video_lengths) -> BackgroundSchedule | None:
    """Pick a uniform video among the first ``num_videos``, frame, and direction.

    Returns None when ``num_videos`` is 0, signaling that the background
    distraction is disabled.
    """
    if num_videos == 0:
        return None
    if num_videos < 0:
        raise ConfigurationError(f"num_videos must be >= 0, got {num_videos}")
    lengths = [int(n) for n in video_lengths]
    if len(lengths) < num_videos:
        raise ConfigurationError(
            f"requested {num_videos} videos but only {len(lengths)} are available")
    if any(n < 1 for n in lengths[:num_videos]):
        raise ConfigurationError("every video must have at least one frame")
    video_index = int(rng.integers(0, num_videos))
    frame_index = int(rng.integers(0, lengths[video_index]))
    direction = 1 if rng.integers(0, 2) == 1 else -1
    return BackgroundSchedule(video_index=video_index, frame_index=frame_index, direction=direction)


def step_background(schedule: BackgroundSchedule, length: int) -> BackgroundSchedule:
    """Advance one frame with ping-pong playback.

    The frame index moves by the current direction; when the move would leave
    [0, length), the direction reverses and the move is taken the other way,
    so the sequence bounces off the endpoints without cuts or repeats.
    """
    length = int(length)
    if length < 1:
        raise ConfigurationError(f"video length must be >= 1, got {length}")
    if length == 1:
        return schedule
    direction = schedule.direction
    nxt = schedule.frame_index + direction
    if nxt < 0 or nxt >= length:
        direction = -direction
        nxt = schedule.frame_index + direction
    return replace(schedule, frame_index=nxt, direction=direction)
