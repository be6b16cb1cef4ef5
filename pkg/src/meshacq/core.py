"""Shared domain types: problem settings, grids, masks, labelled samples.

Fields are plain float64 numpy arrays aligned with a grid. Darcy fields are
stored flattened in row-major order so that mask indices are always flat
lattice indices.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when two arrays that must agree in shape do not."""

    def __init__(self, what: str, left, right):
        self.left = tuple(left)
        self.right = tuple(right)
        super().__init__(f"{what}: shape {self.left} does not match {self.right}")


class ProblemKind(str, enum.Enum):
    BURGERS = "burgers"
    DARCY = "darcy"
    LORENZ96 = "lorenz96"

    @property
    def code(self) -> int:
        return _KIND_CODES[self]

    @classmethod
    def from_code(cls, code: int) -> ProblemKind:
        for kind, c in _KIND_CODES.items():
            if c == code:
                return kind
        raise ValueError(f"unknown problem code {code}")


_KIND_CODES = {ProblemKind.BURGERS: 1, ProblemKind.DARCY: 2, ProblemKind.LORENZ96: 3}


class BoundaryMode(str, enum.Enum):
    DIRICHLET_WALLS = "dirichlet_walls"
    PERIODIC = "periodic"


@dataclass(frozen=True)
class BurgersParams:
    viscosity: float = 0.002
    horizon: float = 1.0
    n: int = 129
    boundary: BoundaryMode = BoundaryMode.DIRICHLET_WALLS

    def __post_init__(self):
        if not self.viscosity >= 0:
            raise ValueError("viscosity must be nonnegative")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.n < 3:
            raise ValueError("n must be at least 3")
        object.__setattr__(self, "boundary", BoundaryMode(self.boundary))


@dataclass(frozen=True)
class DarcyParams:
    n: int = 128
    forcing: float = 1.0
    levels: tuple[float, float] = (4.0, 12.0)
    patches: int = 16

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("n must be at least 3")
        if min(self.levels) <= 0:
            raise ValueError("coefficient levels must be strictly positive")
        if self.patches < 1 or self.patches > self.n:
            raise ValueError("patches must lie in [1, n]")
        object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))


@dataclass(frozen=True)
class Lorenz96Params:
    n: int = 60
    forcing: float = 4.0
    dt: float = 0.01
    horizon: float = 1.0

    def __post_init__(self):
        if self.n < 4:
            raise ValueError("Lorenz-96 needs at least 4 sites")
        if self.dt <= 0 or self.horizon <= 0:
            raise ValueError("dt and horizon must be positive")


@dataclass(frozen=True)
class ProblemSpec:
    kind: ProblemKind = ProblemKind.BURGERS
    burgers: BurgersParams = field(default_factory=BurgersParams)
    darcy: DarcyParams = field(default_factory=DarcyParams)
    lorenz96: Lorenz96Params = field(default_factory=Lorenz96Params)

    def __post_init__(self):
        object.__setattr__(self, "kind", ProblemKind(self.kind))

    @property
    def grid_size(self) -> int:
        """Points per axis of the dense grid."""
        if self.kind is ProblemKind.BURGERS:
            return self.burgers.n
        if self.kind is ProblemKind.DARCY:
            return self.darcy.n
        return self.lorenz96.n

    @property
    def field_size(self) -> int:
        n = self.grid_size
        return n * n if self.kind is ProblemKind.DARCY else n

    def grid(self) -> SpatialGrid:
        if self.kind is ProblemKind.BURGERS:
            return SpatialGrid.uniform(self.burgers.n)
        if self.kind is ProblemKind.DARCY:
            return SpatialGrid.lattice2d(self.darcy.n)
        return SpatialGrid.periodic_lattice(self.lorenz96.n)


@dataclass(frozen=True)
class SpatialGrid:
    """Node positions. ``coords`` is 1D for line grids, (n*n, 2) for the lattice."""

    coords: np.ndarray
    kind: str = "line"

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=np.float64)
        if self.kind == "line" and (c.ndim != 1 or np.any(np.diff(c) <= 0)):
            raise ValueError("grid coordinates must be strictly increasing")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    @classmethod
    def uniform(cls, n: int) -> SpatialGrid:
        if n < 2:
            raise ValueError("need at least 2 nodes")
        return cls(np.linspace(0.0, 1.0, n))

    @classmethod
    def periodic_lattice(cls, n: int) -> SpatialGrid:
        # positions used only for interpolation; the wrap-around is implied
        return cls(np.linspace(0.0, 1.0, n), kind="periodic")

    @classmethod
    def lattice2d(cls, n: int) -> SpatialGrid:
        x = np.linspace(0.0, 1.0, n)
        xx, yy = np.meshgrid(x, x, indexing="ij")
        return cls(np.stack([xx.ravel(), yy.ravel()], axis=1), kind="lattice2d")

    def __len__(self) -> int:
        return self.coords.shape[0]

    @property
    def spacing(self) -> float:
        n = int(round(np.sqrt(len(self)))) if self.kind == "lattice2d" else len(self)
        return 1.0 / (n - 1)


@dataclass(frozen=True)
class SelectionMask:
    indices: tuple[int, ...]
    budget: int

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if self.budget < 1:
            raise ValueError("budget must be positive")
        if len(idx) > self.budget:
            raise ValueError(f"{len(idx)} indices exceed budget {self.budget}")
        if len(set(idx)) != len(idx):
            raise ValueError("mask indices must be distinct")
        if any(i < 0 for i in idx):
            raise ValueError("mask indices must be nonnegative")
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return len(self.indices)

    def check_bounds(self, size: int) -> None:
        bad = [i for i in self.indices if i >= size]
        if bad:
            raise IndexError(f"mask index {bad[0]} out of range for field of size {size}")

    @classmethod
    def full(cls, size: int) -> SelectionMask:
        return cls(tuple(range(size)), size)


@dataclass(frozen=True)
class LabeledSample:
    """One acquired instance: its input field and the solver values on the mask."""

    input: np.ndarray
    mask: SelectionMask
    observed: np.ndarray
    instance_id: int = -1
    seed: int = 0
    iteration: int = 0

    def __post_init__(self):
        x = np.array(self.input, dtype=np.float64)
        y = np.array(self.observed, dtype=np.float64)
        if y.shape != (len(self.mask),):
            raise ShapeError("observed values vs mask", y.shape, (len(self.mask),))
        self.mask.check_bounds(x.size)
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "input", x)
        object.__setattr__(self, "observed", y)

    @property
    def is_dense(self) -> bool:
        return len(self.mask) == self.input.size and self.mask.indices == tuple(range(self.input.size))

    def dense_output(self) -> np.ndarray:
        """Observed values scattered back to a full field; only for dense samples."""
        if len(self.mask) != self.input.size:
            raise ValueError("sample is not fully observed")
        out = np.empty(self.input.size)
        out[list(self.mask.indices)] = self.observed
        return out


class Dataset:
    """Append-only collection of labelled samples for one problem."""

    def __init__(self, kind: ProblemKind, grid_size: int, samples: Iterable[LabeledSample] = ()):
        self.kind = ProblemKind(kind)
        self.grid_size = int(grid_size)
        self._samples: list[LabeledSample] = []
        for s in samples:
            self.append(s)

    def append(self, sample: LabeledSample) -> None:
        self._samples.append(sample)

    def extend(self, samples: Iterable[LabeledSample]) -> None:
        for s in samples:
            self.append(s)

    def __len__(self) -> int:
        return len(self._samples)

    def __iter__(self):
        return iter(self._samples)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return Dataset(self.kind, self.grid_size, self._samples[i])
        return self._samples[i]

    def subset(self, indices: Sequence[int]) -> Dataset:
        return Dataset(self.kind, self.grid_size, [self._samples[i] for i in indices])

    def copy(self) -> Dataset:
        return Dataset(self.kind, self.grid_size, self._samples)

    def inputs(self) -> np.ndarray:
        return np.stack([s.input for s in self._samples])

    def dense_outputs(self) -> np.ndarray:
        return np.stack([s.dense_output() for s in self._samples])


def rmse(predictions, truths) -> float:
    """Root mean squared error over every entry of every field."""
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(truths, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError("rmse", p.shape, t.shape)
    if p.size == 0:
        raise ValueError("rmse needs at least one field")
    return float(np.sqrt(np.mean((p - t) ** 2)))


def set_to_grid(query_points, grid: SpatialGrid) -> list[int]:
    """Map scattered 1D positions to nearest grid nodes (ties to the lower index).

    Duplicates are dropped, keeping the first occurrence.
    """
    q = np.atleast_1d(np.asarray(query_points, dtype=np.float64))
    if np.any((q < 0.0) | (q > 1.0)) or not np.all(np.isfinite(q)):
        raise ValueError("query points must lie in [0, 1]")
    c = grid.coords
    right = np.clip(np.searchsorted(c, q, side="left"), 1, len(c) - 1)
    left = right - 1
    # exact hits on the right node are routed there; otherwise the lower node wins ties
    pick = np.where(q - c[left] <= c[right] - q, left, right)
    pick = np.where(c[right] == q, right, pick)
    out: list[int] = []
    seen = set()
    for i in pick.tolist():
        if i not in seen:
            seen.add(i)
            out.append(i)
    return out


def restrict(field_values, mask: SelectionMask) -> np.ndarray:
    """Values of a field at the mask indices, in selection order."""
    v = np.asarray(field_values, dtype=np.float64).ravel()
    mask.check_bounds(v.size)
    return v[list(mask.indices)] if len(mask) else np.empty(0)
