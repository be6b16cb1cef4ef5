"""Oracle demonstration policy and heuristic baselines.

All selectors work at action resolution: a length-n field for 1D problems or
a (p, p) patch field for the lattice. They return action indices in the
order chosen. Ties always go to the lowest index.
"""

from __future__ import annotations

import numpy as np

from .env import ActionSpace

# spread term weight: tiny, so it only decides between cells whose scores vanish
_SPREAD = 1e-3


def _tie_safe(score: np.ndarray) -> np.ndarray:
    """Round away floating-point noise so equal scores tie exactly."""
    top = float(np.max(np.abs(score))) if score.size else 0.0
    if top == 0.0:
        return np.zeros_like(score)
    return np.round(score / top, 12)


def top_b(score, budget: int) -> np.ndarray:
    s = _tie_safe(np.asarray(score, dtype=np.float64).ravel())
    return np.argsort(-s, kind="stable")[:budget]


def _check_budget(budget: int, n: int) -> None:
    if not 1 <= budget <= n:
        raise ValueError(f"budget {budget} must lie in [1, {n}]")


def _first_diff(f: np.ndarray, periodic: bool) -> np.ndarray:
    if f.ndim == 2:
        gx, gy = np.gradient(f)
        return np.abs(gx) + np.abs(gy)
    if periodic:
        return np.abs(np.roll(f, -1) - np.roll(f, 1)) / 2.0
    return np.abs(np.gradient(f)) if f.size > 1 else np.zeros_like(f)


def _second_diff(f: np.ndarray, periodic: bool) -> np.ndarray:
    if f.ndim == 2:
        p = np.pad(f, 1, mode="edge")
        lap = p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:] - 4 * f
        return np.abs(lap)
    if periodic:
        return np.abs(np.roll(f, -1) - 2 * f + np.roll(f, 1))
    out = np.zeros_like(f)
    out[1:-1] = np.abs(f[2:] - 2 * f[1:-1] + f[:-2])
    return out


def select_uniform(space: ActionSpace, budget: int) -> np.ndarray:
    _check_budget(budget, space.n_actions)
    if space.patches:
        p = space.patches
        rows = max(1, min(p, int(round(np.sqrt(budget)))))
        counts = [budget // rows + (1 if r < budget % rows else 0) for r in range(rows)]
        if max(counts) > p:
            rows = -(-budget // p)
            counts = [budget // rows + (1 if r < budget % rows else 0) for r in range(rows)]
        ri = np.floor(np.linspace(0, p - 1, rows) + 0.5).astype(int) if rows > 1 else [p // 2]
        out = []
        for r, c in zip(ri, counts):
            ci = np.floor(np.linspace(0, p - 1, c) + 0.5).astype(int) if c > 1 else [p // 2]
            out.extend(int(r) * p + int(j) for j in ci)
        return np.array(out, dtype=np.int64)
    n = space.n_actions
    if space.periodic:
        return np.floor(np.arange(budget) * n / budget).astype(np.int64)
    if budget == 1:
        return np.array([(n - 1) // 2])
    return np.floor(np.linspace(0, n - 1, budget) + 0.5).astype(np.int64)


def select_random(space: ActionSpace, budget: int, rng: np.random.Generator) -> np.ndarray:
    _check_budget(budget, space.n_actions)
    return rng.choice(space.n_actions, budget, replace=False).astype(np.int64)


def select_gradient(space: ActionSpace, budget: int, field) -> np.ndarray:
    _check_budget(budget, space.n_actions)
    f = np.asarray(field, dtype=np.float64).reshape(space.shape)
    return top_b(_first_diff(f, space.periodic), budget)


def select_intensity(space: ActionSpace, budget: int, field) -> np.ndarray:
    _check_budget(budget, space.n_actions)
    return top_b(np.abs(np.asarray(field, dtype=np.float64)), budget)


def select_variance(space: ActionSpace, budget: int, posterior_var: float, location_var) -> np.ndarray:
    """Top-B of the proxy's predictive variance v(x) * sigma_i^2 per location.

    The kernel posterior variance is a scalar per instance, so the per-location
    spread of the training targets supplies the spatial profile.
    """
    _check_budget(budget, space.n_actions)
    return top_b(float(posterior_var) * np.asarray(location_var, dtype=np.float64), budget)


def _distance_map(space: ActionSpace) -> np.ndarray:
    """(n_actions, n_actions) distances between action cells."""
    if space.patches:
        p = space.patches
        r, c = np.divmod(np.arange(p * p), p)
        return np.hypot(r[:, None] - r[None, :], c[:, None] - c[None, :])
    i = np.arange(space.n_actions)
    d = np.abs(i[:, None] - i[None, :]).astype(np.float64)
    if space.periodic:
        d = np.minimum(d, space.n_actions - d)
    return d


def oracle_scores(space: ActionSpace, field, magnitude: float = 0.0) -> np.ndarray:
    f = np.asarray(field, dtype=np.float64).reshape(space.shape)
    s = _first_diff(f, space.periodic) + _second_diff(f, space.periodic)
    if magnitude:
        s = s + magnitude * np.abs(f)
    return s.ravel()


def oracle_policy(space: ActionSpace, budget: int, field, magnitude: float = 0.0,
                  coverage: float | None = None) -> np.ndarray:
    """Greedy gradient/curvature selection with a proximity penalty.

    Each pick maximizes score(i) * min(1, dist(i, chosen) / coverage); the
    coverage radius defaults to the mean spacing of B evenly spread cells.
    A field without any variation reduces to the uniform baseline.
    """
    _check_budget(budget, space.n_actions)
    score = oracle_scores(space, field, magnitude)
    top = score.max()
    if top <= 0:
        return select_uniform(space, budget)
    score = score / top
    ndim = len(space.shape)
    radius = coverage if coverage is not None else (space.n_actions / budget) ** (1.0 / ndim)
    dist_all = _distance_map(space)
    reach = float(dist_all.max())
    dist = np.full(space.n_actions, np.inf)
    chosen = np.zeros(space.n_actions, dtype=bool)
    out = []
    for _ in range(budget):
        near = np.minimum(1.0, dist / radius)
        spread = np.where(np.isinf(dist), 1.0, dist / reach)
        eff = _tie_safe(score * near + _SPREAD * spread)
        eff[chosen] = -np.inf
        j = int(np.argmax(eff))
        out.append(j)
        chosen[j] = True
        dist = np.minimum(dist, dist_all[j])
    return np.array(out, dtype=np.int64)
