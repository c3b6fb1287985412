"""Desk-scale QT-Opt: CEM action maximization with crop-averaged targets/losses.

The Bellman target averages the target-network value over K random crops of
the next observation, and the loss averages the online Q estimate over M
random crops of the current observation before squaring:

    y = r + discount * gamma * (1/K) sum_k V(f(s', u_k))
    J = mean_batch (y - (1/M) sum_m Q(f(s, u_m), a))^2

with V(s') = Q_target(s', argmax via CEM of Q_target(s', .)) and f a random
crop.  K = M = 0 is plain uncropped QT-Opt, 1 single-crop augmentation, and 2
the crop-averaged variant.  Vector observations pass through f unchanged, so
the same pipeline trains from privileged state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .nn import Adam, CriticNet, polyak_update, tree_copy

_STD_FLOOR = 1e-6


@dataclass(frozen=True)
class AugConfig:
    """Crop-augmentation counts: K target crops, M loss crops."""

    K: int = 1
    M: int = 1
    crop_size: int = 84

    def __post_init__(self):
        if self.K < 0 or self.M < 0:
            raise ValueError("K and M must be >= 0")

    @classmethod
    def named(cls, name: str, crop_size: int = 84) -> "AugConfig":
        table = {"none": 0, "rad": 1, "drq": 2}
        if name not in table:
            raise ValueError(f"unknown augmentation {name!r}; choose from {sorted(table)}")
        k = table[name]
        return cls(K=k, M=k, crop_size=crop_size)


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    discount: float


@dataclass(frozen=True)
class CEMConfig:
    """Cross-entropy-method constants; defaults follow the usual QT-Opt choice."""

    population: int = 64
    iterations: int = 2
    elites: int = 6
    init_std: float = 1.0

    def __post_init__(self):
        if self.elites > self.population:
            raise ValueError("elite count must not exceed the population")
        if self.iterations < 1:
            raise ValueError("at least one CEM iteration is required")


def _truncated_normal(rng, mean, std, size):
    """Sample a Gaussian truncated to [-1, 1] via inverse-CDF transform."""
    std = np.maximum(std, 1e-8)
    lo = ndtr((-1.0 - mean) / std)
    hi = ndtr((1.0 - mean) / std)
    u = rng.uniform(size=size)
    x = mean + std * ndtri(lo + u * (hi - lo))
    return np.clip(x, -1.0, 1.0)


def cem_maximize_batch(rng, q_batch_fn, batch_size: int, action_dim: int,
                       config: CEMConfig) -> np.ndarray:
    """Per-row CEM argmax: ``q_batch_fn`` maps (B, N, A) actions to (B, N) scores.

    The running best sample is carried into every iteration's elite pool, so
    the best elite score never decreases; the final best sample is returned.
    """
    pop, elites = config.population, config.elites
    mean = np.zeros((batch_size, 1, action_dim))
    std = np.full((batch_size, 1, action_dim), config.init_std)
    best_a = np.zeros((batch_size, action_dim))
    best_q = np.full(batch_size, -np.inf)
    rows = np.arange(batch_size)
    for it in range(config.iterations):
        samples = _truncated_normal(rng, mean, std, size=(batch_size, pop, action_dim))
        if it > 0:
            samples[:, 0] = best_a  # keep the incumbent in the pool
        scores = q_batch_fn(samples)
        top = np.argmax(scores, axis=1)
        improved = scores[rows, top] > best_q
        best_q = np.where(improved, scores[rows, top], best_q)
        best_a = np.where(improved[:, None], samples[rows, top], best_a)
        elite_idx = np.argpartition(-scores, elites - 1, axis=1)[:, :elites]
        elite = np.take_along_axis(samples, elite_idx[:, :, None], axis=1)
        mean = elite.mean(axis=1, keepdims=True)
        std = np.maximum(elite.std(axis=1, keepdims=True), _STD_FLOOR)
    return best_a


def cem_maximize(rng, q_fn, action_dim: int, config: CEMConfig) -> np.ndarray:
    """CEM argmax of a scalar objective; ``q_fn`` maps (N, A) actions to (N,)."""

    def batched(actions):
        return q_fn(actions[0])[None, :]

    return cem_maximize_batch(rng, batched, 1, action_dim, config)[0]


# -- crop augmentation --------------------------------------------------------

def sample_crop_offsets(rng, frame_shape, crop_size: int, count: int) -> np.ndarray:
    """Uniform (row, col) offsets of valid crop windows; shape (count, 2)."""
    height, width = frame_shape[:2]
    if crop_size > height or crop_size > width:
        raise ValueError(f"crop {crop_size} exceeds frame {height}x{width}")
    rows = rng.integers(0, height - crop_size + 1, size=count)
    cols = rng.integers(0, width - crop_size + 1, size=count)
    return np.stack([rows, cols], axis=1)


def crop_batch(observations: np.ndarray, offsets: np.ndarray, crop_size: int) -> np.ndarray:
    """Apply per-sample crop offsets to a batch of frames.

    Vector observations (B, D) are returned unchanged: cropping is an image
    augmentation and degenerates to the identity elsewhere.
    """
    observations = np.asarray(observations)
    if observations.ndim == 2:
        return observations
    out = np.empty((observations.shape[0], crop_size, crop_size, observations.shape[3]),
                   dtype=observations.dtype)
    for i, (row, col) in enumerate(offsets):
        out[i] = observations[i, row:row + crop_size, col:col + crop_size]
    return out


def center_crop_batch(observations: np.ndarray, crop_size: int) -> np.ndarray:
    observations = np.asarray(observations)
    if observations.ndim == 2:
        return observations
    height, width = observations.shape[1:3]
    row, col = (height - crop_size) // 2, (width - crop_size) // 2
    return observations[:, row:row + crop_size, col:col + crop_size]


def _augmented(rng, observations, crop_size, offsets):
    if np.asarray(observations).ndim == 2:
        return observations
    if offsets is None:
        offsets = sample_crop_offsets(rng, observations.shape[1:3], crop_size,
                                      observations.shape[0])
    return crop_batch(observations, offsets, crop_size)


# -- DrQ-averaged target and loss ----------------------------------------------

def drq_target(rng, batch: dict, K: int, value_fn, gamma: float,
               crop_size: int = 84, offsets=None) -> np.ndarray:
    """Bellman targets with the value averaged over K crops of s'.

    ``value_fn`` maps a batch of (possibly cropped) next observations to state
    values under the target critic.  K = 0 evaluates the plain uncropped
    target.  ``offsets`` optionally freezes the crop parameters: a sequence of
    K arrays of (row, col) offsets.
    """
    reward = np.asarray(batch["r"], dtype=np.float64)
    discount = np.asarray(batch["discount"], dtype=np.float64)
    s_next = batch["s_next"]
    if K == 0:
        values = np.asarray(value_fn(center_crop_batch(s_next, crop_size)
                                     if np.asarray(s_next).ndim > 2 else s_next))
        return reward + gamma * discount * values
    values = np.zeros_like(reward)
    for k in range(K):
        cropped = _augmented(rng, s_next, crop_size, None if offsets is None else offsets[k])
        values += np.asarray(value_fn(cropped))
    return reward + gamma * discount * (values / K)


def drq_loss(rng, batch: dict, M: int, q_fn, targets: np.ndarray,
             crop_size: int = 84, offsets=None) -> float:
    """Mean squared Bellman error with the Q estimate averaged over M crops."""
    q_mean = _q_average(rng, batch, M, q_fn, crop_size, offsets)
    targets = np.asarray(targets, dtype=np.float64)
    if q_mean.shape != targets.shape:
        raise ValueError(f"targets shape {targets.shape} does not match Q {q_mean.shape}")
    return float(np.mean((targets - q_mean) ** 2))


def _q_average(rng, batch, M, q_fn, crop_size, offsets):
    s, a = batch["s"], np.asarray(batch["a"], dtype=np.float64)
    if M == 0:
        cropped = center_crop_batch(s, crop_size) if np.asarray(s).ndim > 2 else s
        return np.asarray(q_fn(cropped, a), dtype=np.float64)
    total = None
    for m in range(M):
        cropped = _augmented(rng, s, crop_size, None if offsets is None else offsets[m])
        q = np.asarray(q_fn(cropped, a), dtype=np.float64)
        total = q if total is None else total + q
    return total / M


# -- replay buffer --------------------------------------------------------------

class ReplayBuffer:
    """Fixed-capacity ring buffer over (s, a, r, s', discount)."""

    def __init__(self, capacity: int, obs_shape, action_dim: int, obs_dtype=np.uint8):
        self.capacity = int(capacity)
        self.s = np.empty((capacity, *obs_shape), dtype=obs_dtype)
        self.s_next = np.empty((capacity, *obs_shape), dtype=obs_dtype)
        self.a = np.empty((capacity, action_dim), dtype=np.float64)
        self.r = np.empty(capacity, dtype=np.float64)
        self.discount = np.empty(capacity, dtype=np.float64)
        self.index = 0
        self.size = 0

    def add(self, s, a, r, s_next, discount):
        i = self.index
        self.s[i] = s
        self.a[i] = a
        self.r[i] = r
        self.s_next[i] = s_next
        self.discount[i] = discount
        self.index = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng, batch_size: int) -> dict:
        idx = rng.integers(0, self.size, size=batch_size)
        return {"s": self.s[idx], "a": self.a[idx], "r": self.r[idx],
                "s_next": self.s_next[idx], "discount": self.discount[idx]}


# -- agent and training loop -----------------------------------------------------

@dataclass
class TrainConfig:
    steps: int = 50_000
    batch_size: int = 512
    gamma: float = 0.99
    lr: float = 1e-4
    tau: float = 0.01
    replay_capacity: int = 100_000
    warmup: int = 1_000
    eps_start: float = 1.0
    eps_end: float = 0.1
    eps_anneal_steps: int | None = None
    hidden_dim: int = 256
    filters: int = 32
    embed_dim: int = 50
    loss_kind: str = "mse"  # "cross_entropy" selects the sigmoid divergence variant
    log_every: int = 500


class QTOptAgent:
    """Critic, its target copy, the optimizer, and CEM action selection."""

    def __init__(self, obs_shape, action_dim: int, aug: AugConfig, cem: CEMConfig,
                 config: TrainConfig, rng):
        if len(obs_shape) == 3:
            net_shape = (aug.crop_size, aug.crop_size, obs_shape[2])
        else:
            net_shape = obs_shape
        self.critic = CriticNet(net_shape, action_dim, filters=config.filters,
                                embed_dim=config.embed_dim, hidden_dim=config.hidden_dim)
        self.params = self.critic.init(rng)
        self.target_params = tree_copy(self.params)
        self.optimizer = Adam(lr=config.lr)
        self.aug = aug
        self.cem = cem
        self.config = config
        self.action_dim = action_dim
        self.from_pixels = len(obs_shape) == 3

    # action selection ------------------------------------------------------

    def act(self, rng, obs) -> np.ndarray:
        obs_batch = np.asarray(obs)[None]
        if self.from_pixels:
            obs_batch = center_crop_batch(obs_batch, self.aug.crop_size)
        features = self.critic.embed(self.params, obs_batch)

        def q_batch(actions):
            flat = actions.reshape(-1, self.action_dim)
            feats = np.repeat(features, actions.shape[1], axis=0)
            return self.critic.q_from_features(self.params, feats, flat).reshape(1, -1)

        return cem_maximize_batch(rng, q_batch, 1, self.action_dim, self.cem)[0]

    # learning ----------------------------------------------------------------

    def _value_fn(self, rng):
        def value(obs_batch):
            features = self.critic.embed(self.target_params, obs_batch)
            n = features.shape[0]

            def q_batch(actions):
                pop = actions.shape[1]
                feats = np.repeat(features, pop, axis=0)
                flat = actions.reshape(-1, self.action_dim)
                q = self.critic.q_from_features(self.target_params, feats, flat)
                return q.reshape(n, pop)

            best = cem_maximize_batch(rng, q_batch, n, self.action_dim, self.cem)
            return self.critic.q_from_features(self.target_params, features, best)

        return value

    def compute_targets(self, rng, batch: dict) -> np.ndarray:
        return drq_target(rng, batch, self.aug.K, self._value_fn(rng),
                          self.config.gamma, self.aug.crop_size)

    def update(self, rng, batch: dict) -> float:
        targets = self.compute_targets(rng, batch)
        s, actions = batch["s"], np.asarray(batch["a"], dtype=np.float64)
        if not self.from_pixels:
            views = [s]
        elif self.aug.M == 0:
            views = [center_crop_batch(s, self.aug.crop_size)]
        else:
            views = []
            for _ in range(self.aug.M):
                offsets = sample_crop_offsets(rng, s.shape[1:3], self.aug.crop_size, s.shape[0])
                views.append(crop_batch(s, offsets, self.aug.crop_size))
        qs, caches = [], []
        for view in views:
            q, cache = self.critic.q_value_with_cache(self.params, view, actions)
            qs.append(q)
            caches.append(cache)
        q_mean = np.mean(qs, axis=0)

        batch_size = q_mean.shape[0]
        if self.config.loss_kind == "cross_entropy":
            # Sigmoid divergence variant: soft targets through the logistic
            # squashing; gradient d/dq = sigmoid(q) - sigmoid(y).
            soft = 1.0 / (1.0 + np.exp(-targets))
            loss = float(np.mean(np.logaddexp(0.0, q_mean) - soft * q_mean))
            dq_mean = (1.0 / (1.0 + np.exp(-q_mean)) - soft) / batch_size
        else:
            diff = q_mean - targets
            loss = float(np.mean(diff ** 2))
            dq_mean = 2.0 * diff / batch_size

        grads = None
        for cache in caches:
            g = self.critic.backward(self.params, cache, dq_mean / len(caches))
            grads = g if grads is None else _tree_add(grads, g)
        self.params = self.optimizer.update(self.params, grads)
        self.target_params = polyak_update(self.target_params, self.params, self.config.tau)
        return loss


def _tree_add(a, b):
    if isinstance(a, dict):
        return {k: _tree_add(a[k], b[k]) for k in a}
    return a + b


def train(env, aug: AugConfig, cem: CEMConfig, config: TrainConfig, seed: int = 0):
    """Alternate one transition of collection with one gradient step.

    Returns ``(agent, log)`` where ``log`` is a list of dict records: one per
    finished episode (step, episode, episode_return) and one per
    ``log_every`` learner steps (step, loss).  Raises ``RuntimeError`` if the
    loss diverges to a non-finite value.
    """
    root = np.random.SeedSequence([int(seed), 1000])
    rng_init, rng_action, rng_update, rng_eps = (
        np.random.default_rng(s) for s in root.spawn(4))

    ts = env.reset()
    obs = ts.observation
    obs_shape = np.asarray(obs).shape
    agent = QTOptAgent(obs_shape, env.action_dim, aug, cem, config, rng_init)
    obs_dtype = np.uint8 if len(obs_shape) == 3 else np.float64
    replay = ReplayBuffer(config.replay_capacity, obs_shape, env.action_dim, obs_dtype)

    log: list[dict] = []
    episode, episode_return = 0, 0.0
    anneal = config.eps_anneal_steps if config.eps_anneal_steps is not None else config.steps // 2
    loss = math.nan
    for step in range(config.steps):
        frac = min(step / anneal, 1.0) if anneal > 0 else 1.0
        eps = config.eps_start + (config.eps_end - config.eps_start) * frac
        if rng_eps.uniform() < eps:
            action = rng_action.uniform(-1.0, 1.0, size=env.action_dim)
        else:
            action = agent.act(rng_action, obs)
        ts = env.step(action)
        replay.add(obs, action, ts.reward, ts.observation, ts.discount)
        episode_return += ts.reward
        if ts.last:
            log.append({"step": step + 1, "episode": episode, "episode_return": episode_return})
            episode += 1
            episode_return = 0.0
            obs = env.reset().observation
        else:
            obs = ts.observation

        if replay.size >= max(config.warmup, config.batch_size):
            batch = replay.sample(rng_update, config.batch_size)
            loss = agent.update(rng_update, batch)
            if not math.isfinite(loss):
                raise RuntimeError(
                    f"training diverged at step {step}: loss={loss!r}; try a lower "
                    f"learning rate or smaller gamma")
            if (step + 1) % config.log_every == 0:
                log.append({"step": step + 1, "loss": loss})
    return agent, log


def evaluate(env, agent: QTOptAgent, episodes: int, seed: int = 0) -> list[float]:
    """Greedy-CEM episode returns; deterministic given the seed."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 2000]))
    returns = []
    for _ in range(episodes):
        ts = env.reset()
        total = 0.0
        while not ts.last:
            action = agent.act(rng, ts.observation)
            ts = env.step(action)
            total += ts.reward
        returns.append(total)
    return returns
