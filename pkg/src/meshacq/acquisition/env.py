"""Selection MDP: one episode picks B distinct action cells for one instance.

For 1D problems an action is a grid index. For the Darcy lattice an action is
a cell of a coarse patch grid and stands for the patch's center node.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import ProblemKind, ProblemSpec, SelectionMask


@dataclass(frozen=True)
class ActionSpace:
    n_actions: int
    grid_n: int
    patches: int = 0  # 0 for 1D problems
    periodic: bool = False

    @classmethod
    def for_spec(cls, spec: ProblemSpec) -> ActionSpace:
        if spec.kind is ProblemKind.DARCY:
            p = spec.darcy.patches
            return cls(p * p, spec.darcy.n, p)
        n = spec.grid_size
        return cls(n, n, 0, spec.kind is ProblemKind.LORENZ96)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.patches, self.patches) if self.patches else (self.n_actions,)

    def _bounds(self, i: int) -> tuple[int, int]:
        return i * self.grid_n // self.patches, (i + 1) * self.grid_n // self.patches

    def grid_index(self, action: int) -> int:
        if not self.patches:
            return int(action)
        r, c = divmod(int(action), self.patches)
        lo_r, hi_r = self._bounds(r)
        lo_c, hi_c = self._bounds(c)
        return ((lo_r + hi_r) // 2) * self.grid_n + (lo_c + hi_c) // 2

    def to_grid_mask(self, actions, budget: int) -> SelectionMask:
        return SelectionMask(tuple(self.grid_index(a) for a in actions), budget)

    def coarsen(self, values) -> np.ndarray:
        """A dense field viewed at action resolution (patch means on the lattice)."""
        v = np.asarray(values, dtype=np.float64).ravel()
        if not self.patches:
            return v
        n, p = self.grid_n, self.patches
        grid = v.reshape(n, n)
        out = np.empty((p, p))
        for r in range(p):
            lr, hr = self._bounds(r)
            for c in range(p):
                lc, hc = self._bounds(c)
                out[r, c] = grid[lr:hr, lc:hc].mean()
        return out.ravel()


def normalize_input(values) -> np.ndarray:
    """Min-max to [0, 1]; a constant field maps to zeros."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if hi - lo <= 0:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


@dataclass(frozen=True)
class EnvState:
    mask: np.ndarray  # bool, length n_actions
    encoded: np.ndarray  # normalized input, length n_actions
    k: int
    budget: int

    def __post_init__(self):
        if int(self.mask.sum()) != self.k:
            raise ValueError("mask bit count must equal the step index")
        if self.k > self.budget:
            raise ValueError("step index exceeds the budget")

    @property
    def done(self) -> bool:
        return self.k == self.budget

    def vector(self) -> np.ndarray:
        return state_vector(self.mask, self.encoded, self.k, self.budget)


def state_vector(mask, encoded, k, budget) -> np.ndarray:
    """Network input: mask bits, encoded input, progress k/B."""
    return np.concatenate([np.asarray(mask, dtype=np.float64), encoded, [k / budget]])


def env_reset(input_values, space: ActionSpace, budget: int) -> EnvState:
    if not 1 <= budget <= space.n_actions:
        raise ValueError(f"budget {budget} must lie in [1, {space.n_actions}]")
    enc = normalize_input(space.coarsen(input_values))
    enc.setflags(write=False)
    return EnvState(np.zeros(space.n_actions, dtype=bool), enc, 0, budget)


def env_step(state: EnvState, action: int) -> tuple[EnvState, bool]:
    a = int(action)
    if state.done:
        raise ValueError("episode already finished")
    if not 0 <= a < state.mask.size:
        raise IndexError(f"action {a} out of range")
    if state.mask[a]:
        raise ValueError(f"cell {a} already selected")
    mask = state.mask.copy()
    mask[a] = True
    nxt = EnvState(mask, state.encoded, state.k + 1, state.budget)
    return nxt, nxt.done
