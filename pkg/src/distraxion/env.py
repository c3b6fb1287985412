"""Environment facade: benchmark presets, reset/step, and frame rendering.

An environment composes one physics task with the three distraction processes
and the renderer.  Distraction parameters are sampled at every reset; in the
dynamic setting they additionally advance once per rendered frame (one agent
step), while in the static setting they stay frozen within the episode.

Seeding: the master seed is split into independent per-component streams
(physics, camera, color, background) via ``numpy.random.SeedSequence([seed,
component_index])`` with the fixed component indices below, so trajectories
are reproducible across processes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import distractions as dx
from .backgrounds import BackgroundSet, FrameSequence, default_background_set, resize_nearest
from .camera import CameraExtrinsics, FocusMode, look_at_with_roll, spherical_to_cartesian
from .physics import PhysicsState, Task, get_task
from .rendering import render

# SeedSequence component indices for sub-stream derivation.
_SEED_PHYSICS = 0
_SEED_CAMERA = 1
_SEED_COLOR = 2
_SEED_BACKGROUND = 3

PRESETS = ("none", "easy", "medium", "blind")


class EnvironmentError_(RuntimeError):
    """Misuse of the environment lifecycle (bad names, step after episode end)."""


@dataclass(frozen=True)
class BenchmarkPreset:
    """Named difficulty bundle; ``blind`` additionally turns the camera backwards."""

    name: str
    config: dx.DifficultyConfig
    backwards_camera: bool = False


def preset_config(name: str, dynamic: bool = False, seed: int = 0) -> BenchmarkPreset:
    """The benchmark presets: none, easy (0.1/4), medium (0.2/8), blind."""
    if name == "none":
        cfg = dx.DifficultyConfig(0.0, 0.0, 0.0, num_videos=0, dynamic=dynamic, seed=seed)
        return BenchmarkPreset("none", cfg)
    if name == "easy":
        cfg = dx.DifficultyConfig(0.1, 0.1, 1.0, num_videos=4, dynamic=dynamic, seed=seed)
        return BenchmarkPreset("easy", cfg)
    if name == "medium":
        cfg = dx.DifficultyConfig(0.2, 0.2, 1.0, num_videos=8, dynamic=dynamic, seed=seed)
        return BenchmarkPreset("medium", cfg)
    if name == "blind":
        cfg = dx.DifficultyConfig(0.2, 0.2, 1.0, num_videos=8, dynamic=dynamic, seed=seed)
        return BenchmarkPreset("blind", cfg, backwards_camera=True)
    raise EnvironmentError_(f"unknown preset {name!r}; available: {PRESETS}")


@dataclass(frozen=True)
class TimeStep:
    """One environment transition: observation, summed reward, discount, end flag."""

    observation: np.ndarray
    reward: float
    discount: float
    last: bool


def _sub_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), index]))


class DistractingEnv:
    """A seeded task instance with procedurally generated visual distractions.

    Not thread-safe; each handle is single-owner.  ``observation`` selects
    pixels (H, W, 3 uint8 frames) or the privileged low-dimensional state
    vector used by scripted agents and state-based training.
    """

    def __init__(
        self,
        task: Task | str,
        config: dx.DifficultyConfig,
        backwards_camera: bool = False,
        background_set: BackgroundSet | None = None,
        image_size: int = 100,
        observation: str = "pixels",
    ):
        if observation not in ("pixels", "state"):
            raise EnvironmentError_(f"unknown observation mode {observation!r}")
        self.task = get_task(task) if isinstance(task, str) else task
        self.config = config
        self.backwards_camera = backwards_camera
        self.image_size = int(image_size)
        self.observation_mode = observation

        self._camera_range = dx.camera_range_from_scale(config.beta_cam)
        self._camera_speed = dx.camera_speed_params(config.beta_cam)
        setup = self.task.camera
        self._focus = FocusMode(mode="tracking" if setup.tracking else "fixed",
                                focus_point=setup.focus)

        if config.num_videos > 0:
            if background_set is None:
                background_set = default_background_set((self.image_size, self.image_size))
            if len(background_set) < config.num_videos:
                raise EnvironmentError_(
                    f"config requests {config.num_videos} videos but the background set has "
                    f"{len(background_set)}")
            background_set = _ensure_size(background_set, self.image_size)
        self.background_set = background_set if config.num_videos > 0 else None

        self._rng_physics = _sub_rng(config.seed, _SEED_PHYSICS)
        self._rng_camera = _sub_rng(config.seed, _SEED_CAMERA)
        self._rng_color = _sub_rng(config.seed, _SEED_COLOR)
        self._rng_background = _sub_rng(config.seed, _SEED_BACKGROUND)

        self._physics: PhysicsState | None = None
        self._camera_state: dx.CameraState | None = None
        self._colors: dx.ColorState | None = None
        self._schedule: dx.BackgroundSchedule | None = None
        self._episode_focus: np.ndarray | None = None
        self._step_count = 0
        self._needs_reset = True

    # -- spec ------------------------------------------------------------

    @property
    def action_dim(self) -> int:
        return self.task.spec.action_dim

    @property
    def action_repeat(self) -> int:
        return self.task.spec.action_repeat

    @property
    def episode_steps(self) -> int:
        return self.task.spec.episode_steps

    # -- lifecycle ---------------------------------------------------------

    def reset(self) -> TimeStep:
        self._physics = self.task.reset(self._rng_physics)
        self._episode_focus = self.task.agent_position(self._physics)

        setup = self.task.camera
        speed = self._camera_speed if self.config.dynamic else None
        self._camera_state = dx.sample_camera_start(
            self._rng_camera, self._camera_range, setup.phi, setup.theta, speed=speed)
        self._colors = dx.sample_colors(
            self._rng_color, self.task.original_colors(), self.config.beta_rgb)
        if self.background_set is not None:
            self._schedule = dx.sample_background(
                self._rng_background, self.config.num_videos, self.background_set.lengths)
        else:
            self._schedule = None

        self._step_count = 0
        self._needs_reset = False
        return TimeStep(self._observe(), reward=0.0, discount=1.0, last=False)

    def step(self, action) -> TimeStep:
        if self._needs_reset:
            raise EnvironmentError_("environment must be reset before stepping")
        self._physics, reward = self.task.step(self._physics, action)
        self._step_count += 1

        if self.config.dynamic:
            setup = self.task.camera
            self._camera_state = dx.step_camera(
                self._rng_camera, self._camera_state, self._camera_range,
                self._camera_speed, setup.phi, setup.theta)
            self._colors = dx.step_colors(self._rng_color, self._colors, self.config.beta_rgb)
            if self._schedule is not None:
                length = self.background_set.lengths[self._schedule.video_index]
                self._schedule = dx.step_background(self._schedule, length)

        last = self._step_count >= self.task.spec.episode_steps
        if last:
            self._needs_reset = True
        return TimeStep(self._observe(), reward=float(reward), discount=1.0, last=last)

    # -- observation --------------------------------------------------------

    def state(self) -> np.ndarray:
        """Privileged low-dimensional physics observation."""
        if self._physics is None:
            raise EnvironmentError_("environment must be reset before reading state")
        return self.task.state_observation(self._physics)

    def physics_state(self) -> PhysicsState:
        if self._physics is None:
            raise EnvironmentError_("environment must be reset before reading state")
        return self._physics

    def camera_extrinsics(self) -> CameraExtrinsics:
        if self._focus.mode == "tracking":
            focus = self._focus.resolve(self.task.agent_position(self._physics))
        else:
            focus = self._episode_focus
        pose = self._camera_state
        position = spherical_to_cartesian(pose, focus, self.task.camera.r_original)
        extrinsics = look_at_with_roll(position, focus, pose.roll)
        if self.backwards_camera:
            extrinsics = _turn_backwards(extrinsics)
        return extrinsics

    def render_frame(self, physics: PhysicsState | None = None) -> np.ndarray:
        """Render the current (or a given) physics state with the current
        distraction state."""
        physics = self._physics if physics is None else physics
        scene = self.task.scene(physics)
        background_frame = None
        if self._schedule is not None:
            background_frame = self.background_set.frame(
                self._schedule.video_index, self._schedule.frame_index)
        return render(scene, self.camera_extrinsics(), self._colors,
                      background_frame=background_frame, beta_bg=self.config.beta_bg,
                      size=(self.image_size, self.image_size))

    def _observe(self) -> np.ndarray:
        if self.observation_mode == "state":
            return self.state()
        return self.render_frame()


def _turn_backwards(extrinsics: CameraExtrinsics) -> CameraExtrinsics:
    # Half-turn about the camera's up axis: the view faces exactly away
    # from the focus point.
    return CameraExtrinsics(position=extrinsics.position, right=-extrinsics.right,
                            up=extrinsics.up, forward=-extrinsics.forward,
                            fov=extrinsics.fov)


def _ensure_size(background_set: BackgroundSet, image_size: int) -> BackgroundSet:
    resized = []
    for seq in background_set.sequences:
        if seq.frames.shape[1] == image_size and seq.frames.shape[2] == image_size:
            resized.append(seq)
        else:
            frames = np.stack([resize_nearest(f, (image_size, image_size)) for f in seq.frames])
            resized.append(FrameSequence(id=seq.id, frames=frames))
    return BackgroundSet(sequences=tuple(resized), split=background_set.split)


def make_env(
    task: str,
    preset: str | dx.DifficultyConfig = "none",
    dynamic: bool = False,
    seed: int = 0,
    background_set: BackgroundSet | None = None,
    image_size: int = 100,
    observation: str = "pixels",
) -> DistractingEnv:
    """Build a fully seeded environment from a preset name or explicit config.

    When ``preset`` is a :class:`DifficultyConfig`, its own dynamic/seed
    fields are used as given; a preset name combines with ``dynamic`` and
    ``seed``.
    """
    if isinstance(preset, dx.DifficultyConfig):
        config, backwards = preset, False
    else:
        bundle = preset_config(preset, dynamic=dynamic, seed=seed)
        config, backwards = bundle.config, bundle.backwards_camera
    return DistractingEnv(task, config, backwards_camera=backwards,
                          background_set=background_set, image_size=image_size,
                          observation=observation)
