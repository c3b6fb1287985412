"""Minimal numpy neural-net layers with explicit analytic backprop.

Parameters live in plain nested dicts of float64 arrays, so they are easy to
copy for target networks, flatten for finite-difference checks, and update
with the Adam rule below.  Layers implement ``init``/``forward``/``backward``
with caches threaded explicitly; no autograd.
"""

from __future__ import annotations

import math

import numpy as np

_LN_EPS = 1e-6


class Dense:
    def __init__(self, in_dim: int, out_dim: int):
        self.in_dim, self.out_dim = in_dim, out_dim

    def init(self, rng):
        scale = math.sqrt(2.0 / self.in_dim)
        return {"w": rng.normal(0.0, scale, size=(self.in_dim, self.out_dim)),
                "b": np.zeros(self.out_dim)}

    def forward(self, params, x):
        return x @ params["w"] + params["b"], x

    def backward(self, params, cache, dy):
        x = cache
        return dy @ params["w"].T, {"w": x.T @ dy, "b": dy.sum(axis=0)}


class ReLU:
    def init(self, rng):
        return {}

    def forward(self, params, x):
        return np.maximum(x, 0.0), x > 0.0

    def backward(self, params, cache, dy):
        return dy * cache, {}


class Tanh:
    def init(self, rng):
        return {}

    def forward(self, params, x):
        y = np.tanh(x)
        return y, y

    def backward(self, params, cache, dy):
        return dy * (1.0 - cache ** 2), {}


class LayerNorm:
    def __init__(self, dim: int):
        self.dim = dim

    def init(self, rng):
        return {"gamma": np.ones(self.dim), "beta": np.zeros(self.dim)}

    def forward(self, params, x):
        mu = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + _LN_EPS)
        xhat = (x - mu) * inv
        return xhat * params["gamma"] + params["beta"], (xhat, inv)

    def backward(self, params, cache, dy):
        xhat, inv = cache
        n = xhat.shape[-1]
        dxhat = dy * params["gamma"]
        dx = inv * (dxhat
                    - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return dx, {"gamma": (dy * xhat).sum(axis=0), "beta": dy.sum(axis=0)}


class Flatten:
    def init(self, rng):
        return {}

    def forward(self, params, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, params, cache, dy):
        return dy.reshape(cache), {}


class Conv2d:
    """Valid (unpadded) 2-D convolution on NHWC input; kernel (kh, kw, cin, cout)."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int = 3, stride: int = 1):
        self.cin, self.cout = in_channels, out_channels
        self.kernel, self.stride = kernel, stride

    def init(self, rng):
        fan_in = self.kernel * self.kernel * self.cin
        scale = math.sqrt(2.0 / fan_in)
        return {"w": rng.normal(0.0, scale, size=(self.kernel, self.kernel, self.cin, self.cout)),
                "b": np.zeros(self.cout)}

    def _patches(self, x):
        # (B, H', W', C, kh, kw) view of all kernel-sized windows.
        windows = np.lib.stride_tricks.sliding_window_view(x, (self.kernel, self.kernel),
                                                           axis=(1, 2))
        return windows[:, ::self.stride, ::self.stride]

    def forward(self, params, x):
        patches = self._patches(x)
        y = np.einsum("bhwcij,ijcf->bhwf", patches, params["w"]) + params["b"]
        return y, x

    def backward(self, params, cache, dy):
        x = cache
        patches = self._patches(x)
        dw = np.einsum("bhwcij,bhwf->ijcf", patches, dy)
        db = dy.sum(axis=(0, 1, 2))
        dpatch = np.einsum("bhwf,ijcf->bhwcij", dy, params["w"])
        dx = np.zeros_like(x)
        h_out, w_out = dy.shape[1], dy.shape[2]
        s, k = self.stride, self.kernel
        for i in range(k):
            for j in range(k):
                dx[:, i:i + (h_out - 1) * s + 1:s, j:j + (w_out - 1) * s + 1:s, :] += \
                    dpatch[:, :, :, :, i, j]
        return dx, {"w": dw, "b": db}


class Sequential:
    def __init__(self, layers):
        self.layers = list(layers)

    def init(self, rng):
        return {str(i): layer.init(rng) for i, layer in enumerate(self.layers)}

    def forward(self, params, x):
        caches = []
        for i, layer in enumerate(self.layers):
            x, cache = layer.forward(params[str(i)], x)
            caches.append(cache)
        return x, caches

    def backward(self, params, caches, dy):
        grads = {}
        for i in reversed(range(len(self.layers))):
            dy, layer_grads = self.layers[i].backward(params[str(i)], caches[i], dy)
            grads[str(i)] = layer_grads
        return dy, grads


def conv_output_size(size: int, kernel: int, stride: int) -> int:
    return (size - kernel) // stride + 1


class CriticNet:
    """Q-network: image (or vector) encoder plus an action-conditioned MLP head.

    Image observations pass through four valid 3x3 convolutions (stride 2,
    then 1) with ReLU, then a dense layer to a LayerNorm-tanh embedding.
    Vector observations feed the head directly.  The head concatenates the
    embedding with the action and applies a 3-layer MLP to a scalar Q value.
    """

    def __init__(self, obs_shape, action_dim: int, filters: int = 32,
                 embed_dim: int = 50, hidden_dim: int = 1024):
        self.obs_shape = tuple(obs_shape)
        self.action_dim = action_dim
        self.from_pixels = len(self.obs_shape) == 3
        if self.from_pixels:
            height, width, channels = self.obs_shape
            size_h, size_w = height, width
            strides = (2, 1, 1, 1)
            layers = []
            cin = channels
            for stride in strides:
                layers += [Conv2d(cin, filters, 3, stride), ReLU()]
                size_h = conv_output_size(size_h, 3, stride)
                size_w = conv_output_size(size_w, 3, stride)
                cin = filters
            if size_h < 1 or size_w < 1:
                raise ValueError(f"observation {self.obs_shape} is too small for the encoder")
            layers += [Flatten(), Dense(size_h * size_w * filters, embed_dim),
                       LayerNorm(embed_dim), Tanh()]
            self.encoder = Sequential(layers)
            feature_dim = embed_dim
        else:
            self.encoder = None
            feature_dim = self.obs_shape[0]
        self.feature_dim = feature_dim
        self.head = Sequential([
            Dense(feature_dim + action_dim, hidden_dim), ReLU(),
            Dense(hidden_dim, hidden_dim), ReLU(),
            Dense(hidden_dim, 1),
        ])

    def init(self, rng) -> dict:
        params = {"head": self.head.init(rng)}
        if self.encoder is not None:
            params["encoder"] = self.encoder.init(rng)
        return params

    def _prep(self, obs):
        obs = np.asarray(obs, dtype=np.float64)
        if self.from_pixels and obs.dtype != np.float64:
            obs = obs.astype(np.float64)
        if self.from_pixels:
            obs = obs / 255.0
        return obs

    def embed(self, params, obs):
        obs = self._prep(obs)
        if self.encoder is None:
            return obs
        z, _ = self.encoder.forward(params["encoder"], obs)
        return z

    def q_from_features(self, params, features, actions):
        x = np.concatenate([features, actions], axis=-1)
        q, _ = self.head.forward(params["head"], x)
        return q[:, 0]

    def q_value(self, params, obs, actions) -> np.ndarray:
        return self.q_from_features(params, self.embed(params, obs), np.asarray(actions, dtype=np.float64))

    def q_value_with_cache(self, params, obs, actions):
        obs = self._prep(obs)
        actions = np.asarray(actions, dtype=np.float64)
        if self.encoder is not None:
            z, enc_cache = self.encoder.forward(params["encoder"], obs)
        else:
            z, enc_cache = obs, None
        x = np.concatenate([z, actions], axis=-1)
        q, head_cache = self.head.forward(params["head"], x)
        return q[:, 0], (enc_cache, head_cache)

    def backward(self, params, cache, dq) -> dict:
        """Gradients of sum(dq * Q) w.r.t. params."""
        enc_cache, head_cache = cache
        dy = np.asarray(dq, dtype=np.float64)[:, None]
        dx, head_grads = self.head.backward(params["head"], head_cache, dy)
        grads = {"head": head_grads}
        if self.encoder is not None:
            dz = dx[:, :self.feature_dim]
            _, enc_grads = self.encoder.backward(params["encoder"], enc_cache, dz)
            grads["encoder"] = enc_grads
        return grads


# -- parameter-tree utilities -------------------------------------------------

def tree_map(fn, *trees):
    first = trees[0]
    if isinstance(first, dict):
        return {k: tree_map(fn, *(t[k] for t in trees)) for k in first}
    return fn(*trees)


def tree_copy(tree):
    return tree_map(np.copy, tree)


def tree_zeros_like(tree):
    return tree_map(np.zeros_like, tree)


def tree_flatten(tree) -> np.ndarray:
    leaves = []

    def visit(node):
        if isinstance(node, dict):
            for key in sorted(node):
                visit(node[key])
        else:
            leaves.append(np.asarray(node).ravel())

    visit(tree)
    return np.concatenate(leaves) if leaves else np.zeros(0)


def tree_unflatten(tree, flat: np.ndarray):
    flat = np.asarray(flat)
    offset = 0

    def rebuild(node):
        nonlocal offset
        if isinstance(node, dict):
            return {key: rebuild(node[key]) for key in sorted(node)}
        size = int(np.prod(np.shape(node))) if np.shape(node) else 1
        chunk = flat[offset:offset + size].reshape(np.shape(node))
        offset += size
        return chunk.copy()

    rebuilt = rebuild(tree)
    if offset != flat.size:
        raise ValueError(f"flat vector has {flat.size} entries, tree needs {offset}")
    return rebuilt


def polyak_update(target_tree, online_tree, tau: float):
    return tree_map(lambda t, o: (1.0 - tau) * t + tau * o, target_tree, online_tree)


class Adam:
    """Adam over a parameter tree; state is kept per-leaf."""

    def __init__(self, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = None
        self.v = None

    def update(self, params, grads):
        if self.m is None:
            self.m = tree_zeros_like(params)
            self.v = tree_zeros_like(params)
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        self.m = tree_map(lambda m, g: b1 * m + (1 - b1) * g, self.m, grads)
        self.v = tree_map(lambda v, g: b2 * v + (1 - b2) * g * g, self.v, grads)
        correction = math.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t)
        lr_t = self.lr * correction
        return tree_map(lambda p, m, v: p - lr_t * m / (np.sqrt(v) + self.eps),
                        params, self.m, self.v)
