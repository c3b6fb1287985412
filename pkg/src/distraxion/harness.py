"""Benchmark harness: reference agents, episode evaluation, and figure strips.

Evaluation runs a fixed number of episodes (the benchmark convention is 100)
and reports the mean return with its standard error, emitted as a per-episode
CSV plus a JSON summary.  The render helpers produce the difficulty and
skybox-blend strips used to eyeball the distraction suite.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .backgrounds import write_ppm
from .distractions import DifficultyConfig
from .env import DistractingEnv, make_env
from .physics import get_task

EVAL_EPISODES = 100  # benchmark evaluation protocol


class RandomAgent:
    def __init__(self, action_dim: int, seed: int = 0):
        self.action_dim = action_dim
        self._rng = np.random.default_rng(np.random.SeedSequence([int(seed), 77]))

    def __call__(self, env: DistractingEnv, timestep) -> np.ndarray:
        return self._rng.uniform(-1.0, 1.0, size=self.action_dim)


class ScriptedAgent:
    """Hand-written controllers on the privileged state; no pixels involved."""

    def __init__(self, task_name: str, seed: int = 0):
        self.task_name = task_name

    def __call__(self, env: DistractingEnv, timestep) -> np.ndarray:
        state = env.state()
        if self.task_name == "cartpole_swingup":
            return self._cartpole(state)
        if self.task_name == "reacher_easy":
            return self._reacher(state)
        if self.task_name == "ball_in_cup_catch":
            return self._ball_in_cup(state, env)
        raise ValueError(f"no scripted controller for task {self.task_name!r}")

    @staticmethod
    def _cartpole(state) -> np.ndarray:
        x, xdot, cos_t, sin_t, tdot = state
        theta = math.atan2(sin_t, cos_t)
        upright = cos_t > 0.95 and abs(tdot) < 2.0
        if upright:
            u = 2.2 * theta + 0.55 * tdot + 0.10 * x + 0.22 * xdot
        else:
            # Pump pendulum energy toward the upright level, nudging the cart
            # against the pole's swing phase.
            energy = 0.5 * tdot ** 2 * (2.0 / 3.0) + 9.81 / 0.5 * (cos_t - 1.0) / 2.0
            u = 0.9 * energy * tdot * cos_t - 0.15 * x - 0.08 * xdot
        return np.array([np.clip(u, -1.0, 1.0)])

    @staticmethod
    def _reacher(state) -> np.ndarray:
        cos1, sin1, cos2, sin2, qd1, qd2, tx, ty = state[:8]
        q1 = math.atan2(sin1, cos1)
        q2 = math.atan2(sin2, cos2)
        l1 = l2 = 0.12
        dist = min(math.hypot(tx, ty), l1 + l2 - 1e-6)
        cos_elbow = (dist ** 2 - l1 ** 2 - l2 ** 2) / (2 * l1 * l2)
        q2_star = math.acos(max(-1.0, min(1.0, cos_elbow)))
        q1_star = math.atan2(ty, tx) - math.atan2(l2 * math.sin(q2_star),
                                                  l1 + l2 * math.cos(q2_star))
        err1 = math.remainder(q1_star - q1, 2 * math.pi)
        err2 = math.remainder(q2_star - q2, 2 * math.pi)
        return np.clip([4.0 * err1 - 1.0 * qd1, 4.0 * err2 - 1.0 * qd2], -1.0, 1.0)

    @staticmethod
    def _ball_in_cup(state, env) -> np.ndarray:
        cx, cz, bx, bz = state[:4]
        vcx, vcz, vbx, vbz = state[4:8]
        if bz > cz:
            # Ball above the rim: track it horizontally and ease downward.
            return np.clip([6.0 * (bx - cx) - 1.5 * vcx, -0.3 - 0.5 * vcz], -1.0, 1.0)
        # Swing phase: drive the cup against the pendulum motion.
        return np.clip([1.2 * math.copysign(1.0, vbx - vcx) if abs(vbx - vcx) > 0.05
                        else 2.0 * (bx - cx), 0.2 - 0.5 * vcz], -1.0, 1.0)


def build_agent(kind: str, task_name: str, seed: int = 0):
    if kind == "random":
        return RandomAgent(get_task(task_name).spec.action_dim, seed=seed)
    if kind == "scripted":
        return ScriptedAgent(task_name, seed=seed)
    raise ValueError(f"unknown agent {kind!r}; choose random or scripted")


def run_episodes(env: DistractingEnv, agent, episodes: int) -> list[float]:
    returns = []
    for _ in range(episodes):
        ts = env.reset()
        total = 0.0
        while not ts.last:
            ts = env.step(agent(env, ts))
            total += ts.reward
        returns.append(total)
    return returns


def summarize(returns) -> dict:
    returns = np.asarray(returns, dtype=float)
    n = returns.size
    stderr = float(returns.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return {"episodes": int(n), "mean_return": float(returns.mean()), "stderr": stderr}


def write_episode_csv(path, returns) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "return"])
        for i, value in enumerate(returns):
            writer.writerow([i, f"{value:.6f}"])


def write_summary_json(path, summary: dict) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def evaluate_agent(task: str, preset: str, dynamic: bool, agent_kind: str,
                   episodes: int, seed: int, out_dir=None,
                   background_set=None, image_size: int = 100) -> dict:
    """Run the evaluation protocol and optionally write CSV/JSON artifacts."""
    env = make_env(task, preset, dynamic=dynamic, seed=seed,
                   background_set=background_set, image_size=image_size)
    agent = build_agent(agent_kind, task, seed=seed)
    returns = run_episodes(env, agent, episodes)
    summary = dict(task=task, preset=preset, dynamic=dynamic, agent=agent_kind,
                   seed=seed, **summarize(returns))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_episode_csv(out / "episodes.csv", returns)
        write_summary_json(out / "summary.json", summary)
    return summary


# -- figure strips ---------------------------------------------------------------

def _save_image(path: Path, image: np.ndarray) -> None:
    write_ppm(path.with_suffix(".ppm"), image)
    try:
        from PIL import Image
    except ImportError:
        return
    Image.fromarray(image).save(path.with_suffix(".png"))


def difficulty_strip(task: str, out_dir, seed: int = 0, dynamic: bool = False,
                     image_size: int = 100, background_set=None) -> Path:
    """One frame per difficulty column: beta 0..1 in 0.1 steps, videos doubling."""
    frames = []
    video_counts = [0, 1, 2, 4, 8, 16, 32, 60, 60, 60, 60]
    for i in range(11):
        beta = i / 10.0
        config = DifficultyConfig(beta_cam=beta, beta_rgb=beta,
                                  beta_bg=1.0 if video_counts[i] else 0.0,
                                  num_videos=video_counts[i], dynamic=dynamic, seed=seed)
        env = make_env(task, config, background_set=background_set, image_size=image_size)
        frames.append(env.reset().observation)
    strip = np.concatenate(frames, axis=1)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"difficulty_strip_{task}"
    _save_image(path, strip)
    return path.with_suffix(".ppm")


def blend_strip(task: str, out_dir, seed: int = 0, image_size: int = 100,
                background_set=None) -> Path:
    """Skybox-to-video blend: beta_bg 0..1 in 0.1 steps with one video."""
    frames = []
    for i in range(11):
        config = DifficultyConfig(beta_bg=i / 10.0, num_videos=1, seed=seed)
        env = make_env(task, config, background_set=background_set, image_size=image_size)
        frames.append(env.reset().observation)
    strip = np.concatenate(frames, axis=1)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"blend_strip_{task}"
    _save_image(path, strip)
    return path.with_suffix(".ppm")
