"""Terminal proxy reward, its piecewise scaling, and Spearman rank correlation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .core import Dataset, SpatialGrid
from .surrogate import RidgeConfig, evaluate, fit_dataset


@dataclass(frozen=True)
class RewardConfig:
    kappa: float = 1e4
    proxy: RidgeConfig = field(default_factory=lambda: RidgeConfig(mode="interpolate"))

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")


def raw_reward(eps_old: float, eps_new: float, kappa: float = 1e4) -> float:
    if eps_old < 0 or eps_new < 0:
        raise ValueError("errors must be nonnegative")
    return -kappa * (eps_new - eps_old)


def scale_reward(raw: float) -> float:
    """Odd piecewise map of a raw reward into [-1, 1]."""
    x = float(raw)
    if not math.isfinite(x):
        raise ValueError("raw reward must be finite")
    if x == 0.0:
        return 0.0
    s = math.copysign(1.0, x)
    a = abs(x)
    if a < 0.01:
        return 0.8 * s
    if a < 0.1:
        return (0.8 + 0.2 * a / 0.1) * s
    if a < 1.0:
        return x
    if a < 10.0:
        return (1.0 - 0.01 * (a - 1.0) / 9.0) * s
    return s * min(1.0, 0.99 + 0.01 * math.log(a / 10.0))


def spearman(xs, ys) -> float:
    """Pearson correlation of average ranks."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("spearman needs two sequences of equal length")
    if x.size < 2:
        raise ValueError("spearman needs at least 2 points")
    rx, ry = rankdata(x), rankdata(y)
    if np.all(rx == rx[0]) or np.all(ry == ry[0]):
        raise ValueError("rank correlation is undefined for a constant sequence")
    rx -= rx.mean()
    ry -= ry.mean()
    return float(rx @ ry / np.sqrt((rx @ rx) * (ry @ ry)))


@dataclass(frozen=True)
class RewardRecord:
    iteration: int
    episode: int
    eps_old: float
    eps_new: float
    raw: float
    scaled: float


def distinct_samples(dataset: Dataset) -> Dataset:
    """Drop exact repeats: a deterministic solver queried twice on the same nodes adds nothing."""
    seen, keep = set(), []
    for s in dataset:
        key = (s.input.tobytes(), s.mask.indices, s.observed.tobytes())
        if key not in seen:
            seen.add(key)
            keep.append(s)
    if len(keep) == len(dataset):
        return dataset
    return Dataset(dataset.kind, dataset.grid_size, keep)


def proxy_error(dataset: Dataset, holdout: Dataset, grid: SpatialGrid, cfg: RewardConfig) -> float:
    return evaluate(fit_dataset(distinct_samples(dataset), grid, cfg.proxy), holdout)


def episode_reward(before: Dataset, after: Dataset, holdout: Dataset, grid: SpatialGrid,
                   cfg: RewardConfig = RewardConfig(), eps_old: float | None = None,
                   iteration: int = 0, episode: int = 0) -> RewardRecord:
    """Scaled terminal reward for growing ``before`` into ``after``.

    Pass ``eps_old`` to reuse a proxy error already computed for ``before``.
    """
    if len(after) <= len(before):
        raise ValueError("the post-episode dataset must be strictly larger")
    if eps_old is None:
        eps_old = proxy_error(before, holdout, grid, cfg)
    eps_new = proxy_error(after, holdout, grid, cfg)
    raw = raw_reward(eps_old, eps_new, cfg.kappa)
    return RewardRecord(iteration, episode, eps_old, eps_new, raw, scale_reward(raw))


REWARD_FIELDS = ("iteration", "episode", "eps_old", "eps_new", "raw", "scaled")


def write_reward_log(path: Path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REWARD_FIELDS)
        for r in records:
            w.writerow([r.iteration, r.episode, repr(r.eps_old), repr(r.eps_new), repr(r.raw), repr(r.scaled)])


def read_reward_log(path: Path) -> list[RewardRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [RewardRecord(int(r["iteration"]), int(r["episode"]), float(r["eps_old"]), float(r["eps_new"]),
                         float(r["raw"]), float(r["scaled"])) for r in rows]
