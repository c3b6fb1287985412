"""Distraxion: pixel-based control benchmark with procedural visual distractions."""

from .distractions import (
    BackgroundSchedule,
    CameraRange,
    CameraSpeedParams,
    CameraState,
    ColorState,
    DifficultyConfig,
    camera_range_from_scale,
    camera_speed_params,
    sample_background,
    sample_camera_start,
    sample_colors,
    step_background,
    step_camera,
    step_colors,
)
from .backgrounds import (
    BackgroundSet,
    FrameSequence,
    load_background_set,
    procedural_background,
)
from .camera import CameraExtrinsics, FocusMode, look_at_with_roll, project, spherical_to_cartesian
from .env import DistractingEnv, TimeStep, make_env, preset_config
from .physics import PhysicsState, TaskSpec, get_task
from .qtopt import AugConfig, CEMConfig, Transition, cem_maximize, drq_loss, drq_target, train
from .rendering import Box, Capsule, GroundPlane, SceneDescription, Sphere, crop, render
from .server import serve, serve_stdio

__version__ = "0.1.0"
