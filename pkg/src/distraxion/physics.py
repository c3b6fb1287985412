"""Fixed-timestep planar dynamics and rewards for the three control tasks.

The tasks mirror the control semantics of desk-scale continuous-control
benchmarks: cartpole swingup (1-D force), reacher easy (2-D joint torques),
and ball-in-cup catch (2-D cup acceleration).  Integration is semi-implicit
Euler at a 10 ms substep; one environment step applies the action for
``action_repeat`` substeps and sums the per-substep rewards (each in [0, 1]),
so a 1000-substep episode has a maximum return of 1000.

The rewards are documented analogs of the usual tolerance-kernel shaping:
cartpole uses an upright-cosine term with a cart-centering margin, reacher is
1 inside the target radius with a linear decay to 0 at twice the radius, and
ball-in-cup is binary containment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rendering import Box, Capsule, GroundPlane, SceneDescription, Sphere

DT = 0.01  # integration substep, seconds
GRAVITY = 9.81
CONTROL_STEPS_PER_EPISODE = 1000
SKYBOX_COLOR = np.array([0.42, 0.55, 0.73])


class PhysicsError(ValueError):
    """Raised for invalid actions or malformed physics state."""


@dataclass(frozen=True)
class TaskSpec:
    name: str
    action_dim: int
    action_repeat: int
    episode_steps: int
    ground_opacity: float


@dataclass(frozen=True)
class PhysicsState:
    """Generalized positions/velocities plus the control-step counter.

    ``target`` is only used by tasks with a per-episode goal (reacher).
    """

    q: np.ndarray
    qdot: np.ndarray
    t: int = 0
    target: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        object.__setattr__(self, "qdot", np.asarray(self.qdot, dtype=float))
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.qdot))):
            raise PhysicsError("physics state contains non-finite values")


@dataclass(frozen=True)
class CameraSetup:
    """Original (undistracted) viewing pose for a task."""

    phi: float
    theta: float  # polar angle from the scene up axis
    r_original: float
    focus: tuple[float, float, float]
    tracking: bool = False


def _clip_action(task: "Task", action) -> np.ndarray:
    action = np.asarray(action, dtype=float).reshape(-1)
    if action.shape[0] != task.spec.action_dim:
        raise PhysicsError(
            f"{task.spec.name} expects {task.spec.action_dim}-dim actions, got {action.shape[0]}")
    if not np.all(np.isfinite(action)):
        raise PhysicsError("action contains non-finite values")
    return np.clip(action, -1.0, 1.0)


class Task:
    """Shared control loop; subclasses define dynamics, reward, and scene."""

    spec: TaskSpec
    camera: CameraSetup
    palette: dict[str, tuple[float, float, float]]

    def reset(self, rng: np.random.Generator) -> PhysicsState:
        raise NotImplementedError

    def substep(self, state: PhysicsState, action: np.ndarray) -> PhysicsState:
        raise NotImplementedError

    def reward(self, state: PhysicsState) -> float:
        raise NotImplementedError

    def state_observation(self, state: PhysicsState) -> np.ndarray:
        raise NotImplementedError

    def agent_position(self, state: PhysicsState) -> np.ndarray:
        return np.asarray(self.camera.focus, dtype=float)

    def scene(self, state: PhysicsState) -> SceneDescription:
        raise NotImplementedError

    def step(self, state: PhysicsState, action) -> tuple[PhysicsState, float]:
        """Apply the action for ``action_repeat`` substeps; returns summed reward."""
        action = _clip_action(self, action)
        total = 0.0
        for _ in range(self.spec.action_repeat):
            state = self.substep(state, action)
            total += self.reward(state)
        return state, total

    def body_names(self) -> tuple[str, ...]:
        return tuple(self.palette.keys())

    def original_colors(self) -> np.ndarray:
        return np.array([self.palette[name] for name in self.body_names()], dtype=float)


class CartpoleSwingup(Task):
    """Cart on a rail with a hinged pole; swing the pole up and keep it centered.

    Pole angle is measured from upright.  Parameters: cart mass 1.0, pole mass
    0.1, pole half-length 0.5, force scale 10 N, rail limit +-2.5 m.
    """

    spec = TaskSpec("cartpole_swingup", action_dim=1, action_repeat=8,
                    episode_steps=CONTROL_STEPS_PER_EPISODE // 8, ground_opacity=0.3)
    camera = CameraSetup(phi=-math.pi / 2, theta=math.radians(75), r_original=4.0,
                         focus=(0.0, 0.0, 0.45))
    palette = {
        "rail": (0.35, 0.35, 0.40),
        "cart": (0.70, 0.50, 0.30),
        "pole": (0.70, 0.40, 0.20),
    }

    MASS_CART = 1.0
    MASS_POLE = 0.1
    HALF_LENGTH = 0.5
    FORCE_SCALE = 10.0
    RAIL_LIMIT = 2.5

    def reset(self, rng):
        x = rng.uniform(-0.05, 0.05)
        theta = math.pi + rng.uniform(-0.1, 0.1)
        return PhysicsState(q=np.array([x, theta]),
                            qdot=np.array([rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02)]))

    def _accelerations(self, q, qdot, force):
        _, theta = q
        xdot, thetadot = qdot
        m, M, l = self.MASS_POLE, self.MASS_CART, self.HALF_LENGTH
        total = M + m
        st, ct = math.sin(theta), math.cos(theta)
        temp = (-force - m * l * thetadot ** 2 * st) / total
        theta_acc = (GRAVITY * st + ct * temp) / (l * (4.0 / 3.0 - m * ct ** 2 / total))
        x_acc = (force + m * l * (thetadot ** 2 * st - theta_acc * ct)) / total
        return np.array([x_acc, theta_acc])

    def substep(self, state, action):
        force = self.FORCE_SCALE * float(action[0])
        qdot = state.qdot + DT * self._accelerations(state.q, state.qdot, force)
        q = state.q + DT * qdot
        if abs(q[0]) > self.RAIL_LIMIT:  # hard stop at the rail ends
            q = np.array([math.copysign(self.RAIL_LIMIT, q[0]), q[1]])
            qdot = np.array([0.0, qdot[1]])
        return PhysicsState(q=q, qdot=qdot, t=state.t + 1, target=state.target)

    def energy(self, state: PhysicsState) -> float:
        """Total mechanical energy; conserved at zero force away from the rail stops."""
        _, theta = state.q
        xdot, thetadot = state.qdot
        m, M, l = self.MASS_POLE, self.MASS_CART, self.HALF_LENGTH
        kinetic = (0.5 * (M + m) * xdot ** 2
                   + m * l * xdot * thetadot * math.cos(theta)
                   + (2.0 / 3.0) * m * l ** 2 * thetadot ** 2)
        potential = m * GRAVITY * l * math.cos(theta)
        return kinetic + potential

    def reward(self, state):
        x, theta = state.q
        upright = (1.0 + math.cos(theta)) / 2.0
        centering = max(0.0, 1.0 - (x / self.RAIL_LIMIT) ** 2)
        return upright * centering

    def state_observation(self, state):
        x, theta = state.q
        return np.array([x, state.qdot[0], math.cos(theta), math.sin(theta), state.qdot[1]])

    def scene(self, state):
        x, theta = state.q
        pivot = np.array([x, 0.0, 0.30])
        tip = pivot + 2 * self.HALF_LENGTH * np.array([math.sin(theta), 0.0, math.cos(theta)])
        prims = (
            Box(center=(0.0, 0.0, 0.25), half_extents=(2.0, 0.015, 0.015), body="rail"),
            Box(center=(x, 0.0, 0.25), half_extents=(0.12, 0.06, 0.05), body="cart"),
            Capsule(start=pivot, end=tip, radius=0.028, body="pole"),
        )
        return SceneDescription(primitives=prims, bodies=self.body_names(),
                                ground=GroundPlane(opacity=self.spec.ground_opacity),
                                skybox_color=SKYBOX_COLOR)


class ReacherEasy(Task):
    """Two-link planar arm; drive the fingertip into a round target region.

    Joints are independently damped torque integrators (a documented analog of
    the articulated dynamics): I * qddot = tau - b * qdot with I = 0.01,
    tau = 0.06 * action, b = 0.015.
    """

    spec = TaskSpec("reacher_easy", action_dim=2, action_repeat=4,
                    episode_steps=CONTROL_STEPS_PER_EPISODE // 4, ground_opacity=0.0)
    camera = CameraSetup(phi=-math.pi / 2, theta=math.radians(20), r_original=0.75,
                         focus=(0.0, 0.0, 0.0))
    palette = {
        "root": (0.30, 0.30, 0.35),
        "arm": (0.70, 0.50, 0.30),
        "wrist": (0.70, 0.40, 0.20),
        "target": (0.90, 0.20, 0.20),
    }

    LINK1 = 0.12
    LINK2 = 0.12
    INERTIA = 0.01
    TORQUE_SCALE = 0.06
    DAMPING = 0.015
    TARGET_RADIUS = 0.05

    def reset(self, rng):
        q = rng.uniform(-math.pi, math.pi, size=2)
        angle = rng.uniform(0.0, 2 * math.pi)
        dist = rng.uniform(0.08, 0.20)
        target = dist * np.array([math.cos(angle), math.sin(angle)])
        return PhysicsState(q=q, qdot=np.zeros(2), target=target)

    def substep(self, state, action):
        torque = self.TORQUE_SCALE * action
        qdot = state.qdot + DT * (torque - self.DAMPING * state.qdot) / self.INERTIA
        q = state.q + DT * qdot
        return PhysicsState(q=q, qdot=qdot, t=state.t + 1, target=state.target)

    def _joints(self, state):
        q1, q2 = state.q
        elbow = self.LINK1 * np.array([math.cos(q1), math.sin(q1)])
        tip = elbow + self.LINK2 * np.array([math.cos(q1 + q2), math.sin(q1 + q2)])
        return elbow, tip

    def reward(self, state):
        _, tip = self._joints(state)
        dist = float(np.linalg.norm(tip - state.target))
        return float(np.clip(2.0 - dist / self.TARGET_RADIUS, 0.0, 1.0))

    def state_observation(self, state):
        q1, q2 = state.q
        _, tip = self._joints(state)
        return np.concatenate([
            [math.cos(q1), math.sin(q1), math.cos(q2), math.sin(q2)],
            state.qdot,
            state.target,
            state.target - tip,
        ])

    def scene(self, state):
        z = 0.02
        elbow, tip = self._joints(state)
        prims = (
            Sphere(center=(0.0, 0.0, z), radius=0.022, body="root"),
            Capsule(start=(0.0, 0.0, z), end=(elbow[0], elbow[1], z), radius=0.016, body="arm"),
            Capsule(start=(elbow[0], elbow[1], z), end=(tip[0], tip[1], z), radius=0.013, body="wrist"),
            Sphere(center=(state.target[0], state.target[1], z), radius=self.TARGET_RADIUS, body="target"),
        )
        return SceneDescription(primitives=prims, bodies=self.body_names(),
                                ground=None, skybox_color=SKYBOX_COLOR)


class BallInCupCatch(Task):
    """Accelerate a cup in the vertical plane to swing a tethered ball into it.

    The cup is a damped double integrator clamped to its workspace; the ball
    is a point mass under gravity on an inextensible string (position
    projection plus removal of outward radial velocity when taut).  Reward is
    binary containment.
    """

    spec = TaskSpec("ball_in_cup_catch", action_dim=2, action_repeat=4,
                    episode_steps=CONTROL_STEPS_PER_EPISODE // 4, ground_opacity=0.3)
    camera = CameraSetup(phi=-math.pi / 2, theta=math.radians(80), r_original=2.4,
                         focus=(0.0, 0.0, 0.45))
    palette = {
        "cup": (0.70, 0.50, 0.30),
        "ball": (0.70, 0.40, 0.20),
        "string": (0.25, 0.25, 0.25),
    }

    STRING_LENGTH = 0.3
    BALL_RADIUS = 0.03
    CUP_HALF_WIDTH = 0.05   # interior
    WALL_HALF_THICKNESS = 0.0075
    CUP_WALL_HEIGHT = 0.10
    ACCEL_SCALE = 8.0
    CUP_DAMPING = 4.0
    X_RANGE = (-0.5, 0.5)
    Z_RANGE = (0.1, 0.7)

    def reset(self, rng):
        cup = np.array([0.0, 0.5])
        angle = rng.uniform(-0.25, 0.25)
        ball = cup + self.STRING_LENGTH * np.array([math.sin(angle), -math.cos(angle)])
        return PhysicsState(q=np.concatenate([cup, ball]), qdot=np.zeros(4))

    def substep(self, state, action):
        cup, ball = state.q[:2].copy(), state.q[2:].copy()
        vcup, vball = state.qdot[:2].copy(), state.qdot[2:].copy()

        vcup += DT * (self.ACCEL_SCALE * action - self.CUP_DAMPING * vcup)
        cup += DT * vcup
        for axis, (lo, hi) in enumerate((self.X_RANGE, self.Z_RANGE)):
            if cup[axis] < lo or cup[axis] > hi:
                cup[axis] = min(max(cup[axis], lo), hi)
                vcup[axis] = 0.0

        vball += DT * np.array([0.0, -GRAVITY])
        ball += DT * vball

        # Inextensible string: project onto the reachable disk around the
        # anchor and cancel outward radial velocity relative to the cup.
        rel = ball - cup
        dist = float(np.linalg.norm(rel))
        if dist > self.STRING_LENGTH:
            radial = rel / dist
            ball = cup + radial * self.STRING_LENGTH
            outward = float((vball - vcup) @ radial)
            if outward > 0.0:
                vball = vball - outward * radial

        cup, ball, vball = self._contacts(cup, vcup, ball, vball)
        return PhysicsState(q=np.concatenate([cup, ball]),
                            qdot=np.concatenate([vcup, vball]), t=state.t + 1)

    def _contacts(self, cup, vcup, ball, vball):
        near_band = abs(ball[0] - cup[0]) < self.CUP_HALF_WIDTH + self.BALL_RADIUS
        in_band = cup[1] - self.BALL_RADIUS < ball[1] < cup[1] + self.CUP_WALL_HEIGHT
        # Interior bottom: inelastic landing, horizontal slip damped.
        if near_band and ball[1] - self.BALL_RADIUS < cup[1] and vball[1] - vcup[1] < 0 \
                and ball[1] > cup[1] - self.BALL_RADIUS:
            ball = np.array([ball[0], cup[1] + self.BALL_RADIUS])
            vball = np.array([vcup[0] + 0.8 * (vball[0] - vcup[0]), vcup[1]])
        # Interior walls.
        if in_band:
            reach = self.CUP_HALF_WIDTH - self.BALL_RADIUS
            offset = ball[0] - cup[0]
            if abs(offset) > reach and abs(offset) < self.CUP_HALF_WIDTH + self.BALL_RADIUS:
                if offset > 0 and vball[0] - vcup[0] > 0:
                    ball = np.array([cup[0] + reach, ball[1]])
                    vball = np.array([vcup[0], vball[1]])
                elif offset < 0 and vball[0] - vcup[0] < 0:
                    ball = np.array([cup[0] - reach, ball[1]])
                    vball = np.array([vcup[0], vball[1]])
        return cup, ball, vball

    def string_residual(self, state: PhysicsState) -> float:
        cup, ball = state.q[:2], state.q[2:]
        return max(0.0, float(np.linalg.norm(ball - cup)) - self.STRING_LENGTH)

    def contains(self, state: PhysicsState) -> bool:
        cup, ball = state.q[:2], state.q[2:]
        return (abs(ball[0] - cup[0]) < self.CUP_HALF_WIDTH
                and cup[1] - 1e-9 < ball[1] < cup[1] + self.CUP_WALL_HEIGHT)

    def reward(self, state):
        return 1.0 if self.contains(state) else 0.0

    def state_observation(self, state):
        return np.concatenate([state.q, state.qdot])

    def scene(self, state):
        cup, ball = state.q[:2], state.q[2:]
        wall_x = self.CUP_HALF_WIDTH + self.WALL_HALF_THICKNESS
        bottom_half_x = self.CUP_HALF_WIDTH + 2 * self.WALL_HALF_THICKNESS
        prims = (
            Box(center=(cup[0], 0.0, cup[1] - 0.01),
                half_extents=(bottom_half_x, 0.03, 0.01), body="cup"),
            Box(center=(cup[0] - wall_x, 0.0, cup[1] + self.CUP_WALL_HEIGHT / 2),
                half_extents=(self.WALL_HALF_THICKNESS, 0.03, self.CUP_WALL_HEIGHT / 2), body="cup"),
            Box(center=(cup[0] + wall_x, 0.0, cup[1] + self.CUP_WALL_HEIGHT / 2),
                half_extents=(self.WALL_HALF_THICKNESS, 0.03, self.CUP_WALL_HEIGHT / 2), body="cup"),
            Capsule(start=(cup[0], 0.0, cup[1]), end=(ball[0], 0.0, ball[1]),
                    radius=0.004, body="string"),
            Sphere(center=(ball[0], 0.0, ball[1]), radius=self.BALL_RADIUS, body="ball"),
        )
        return SceneDescription(primitives=prims, bodies=self.body_names(),
                                ground=GroundPlane(opacity=self.spec.ground_opacity),
                                skybox_color=SKYBOX_COLOR)


TASKS: dict[str, Task] = {
    task.spec.name: task
    for task in (CartpoleSwingup(), ReacherEasy(), BallInCupCatch())
}


def get_task(name: str) -> Task:
    try:
        return TASKS[name]
    except KeyError:
        raise PhysicsError(f"unknown task {name!r}; available: {sorted(TASKS)}") from None


def reset(task: Task | str, rng: np.random.Generator) -> PhysicsState:
    task = get_task(task) if isinstance(task, str) else task
    return task.reset(rng)


def step(task: Task | str, state: PhysicsState, action) -> tuple[PhysicsState, float]:
    task = get_task(task) if isinstance(task, str) else task
    return task.step(state, action)
