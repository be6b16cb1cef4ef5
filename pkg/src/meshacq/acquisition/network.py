"""Small numpy MLP with manual backprop and an AdamW optimizer.

Parameters live in one flat vector; ``params`` holds named views into it so
optimizer updates are single vectorized passes.
"""

from __future__ import annotations

import numpy as np
from numba import njit

PARAM_NAMES = ("w1", "b1", "w2", "b2", "w3", "b3")


def _views(flat: np.ndarray, shapes: dict[str, tuple]) -> dict[str, np.ndarray]:
    out, pos = {}, 0
    for k in PARAM_NAMES:
        size = int(np.prod(shapes[k]))
        out[k] = flat[pos:pos + size].reshape(shapes[k])
        pos += size
    return out


class QNetwork:
    """in -> hidden -> hidden -> n_actions with ReLU hidden layers and tanh output."""

    def __init__(self, n_in: int, n_out: int, hidden: int = 256, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.shapes = {}
        for i, (a, b) in enumerate([(n_in, hidden), (hidden, hidden), (hidden, n_out)], start=1):
            self.shapes[f"w{i}"] = (a, b)
            self.shapes[f"b{i}"] = (b,)
        self.flat = np.empty(sum(int(np.prod(s)) for s in self.shapes.values()))
        self.params = _views(self.flat, self.shapes)
        for i in (1, 2, 3):
            bound = 1.0 / np.sqrt(self.shapes[f"w{i}"][0])
            self.params[f"w{i}"][...] = rng.uniform(-bound, bound, self.shapes[f"w{i}"])
            self.params[f"b{i}"][...] = rng.uniform(-bound, bound, self.shapes[f"b{i}"])

    @property
    def n_in(self) -> int:
        return self.shapes["w1"][0]

    @property
    def n_out(self) -> int:
        return self.shapes["w3"][1]

    def forward(self, x: np.ndarray, keep: bool = False):
        p = self.params
        z1 = x @ p["w1"] + p["b1"]
        h1 = np.maximum(z1, 0.0)
        z2 = h1 @ p["w2"] + p["b2"]
        h2 = np.maximum(z2, 0.0)
        q = np.tanh(h2 @ p["w3"] + p["b3"])
        if keep:
            return q, (x, z1, h1, z2, h2, q)
        return q

    def __call__(self, x):
        return self.forward(np.atleast_2d(x))

    def backward(self, cache, grad_q: np.ndarray) -> np.ndarray:
        """Flat gradient (same layout as ``flat``) given dLoss/dQ."""
        x, z1, h1, z2, h2, q = cache
        p = self.params
        flat = np.empty_like(self.flat)
        g = _views(flat, self.shapes)
        g3 = grad_q * (1.0 - q * q)
        g2 = (g3 @ p["w3"].T) * (z2 > 0)
        g1 = (g2 @ p["w2"].T) * (z1 > 0)
        np.matmul(h2.T, g3, out=g["w3"])
        g["b3"][...] = g3.sum(0)
        np.matmul(h1.T, g2, out=g["w2"])
        g["b2"][...] = g2.sum(0)
        np.matmul(x.T, g1, out=g["w1"])
        g["b1"][...] = g1.sum(0)
        return flat

    def unflatten(self, flat: np.ndarray) -> dict[str, np.ndarray]:
        return _views(flat, self.shapes)

    def copy_from(self, other: QNetwork) -> None:
        self.flat[...] = other.flat


def clip_by_global_norm(grad: np.ndarray, max_norm: float) -> float:
    """Rescale ``grad`` in place so its norm is at most ``max_norm``; returns the original norm."""
    norm = float(np.sqrt(grad @ grad))
    if norm > max_norm:
        grad *= max_norm / norm
    return norm


class AdamW:
    """Adam with decoupled weight decay (applied to weights and biases alike)."""

    def __init__(self, size: int, lr: float, weight_decay: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.weight_decay = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = np.zeros(size)
        self.v = np.zeros(size)

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        _adamw_update(params, grad, self.m, self.v, self.lr, self.weight_decay, self.b1, self.b2, self.eps, self.t)


@njit(cache=True, fastmath=True)
def _adamw_update(p, g, m, v, lr, wd, b1, b2, eps, t):
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    decay = 1.0 - lr * wd
    for i in range(p.size):
        m[i] = b1 * m[i] + (1.0 - b1) * g[i]
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i]
        p[i] = p[i] * decay - lr * (m[i] / c1) / (np.sqrt(v[i] / c2) + eps)
