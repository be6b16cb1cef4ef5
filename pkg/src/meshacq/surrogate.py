"""Closed-form solution-operator models: RBF kernel ridge and Fourier-feature ridge.

Inputs are flattened input fields. Before the kernel is applied they are
divided by ``input_scale * sqrt(d)`` so that the squared distance is a
root-mean-square distance in units of ``input_scale``; this keeps gamma=1
meaningful across problems whose fields differ in size and amplitude.

Two ways to train on sparse samples:

* ``interpolate``: each sparse sample is resampled onto the dense grid
  (:func:`interpolate_to_uniform`) and a standard dense fit follows.
* ``masked``: every output coordinate is regressed only on the samples that
  observed it. Coordinates sharing an observation pattern share one
  factorization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.ndimage import distance_transform_edt

from .core import Dataset, LabeledSample, ProblemKind, ShapeError, SpatialGrid, rmse

# RMS input distance scale per problem, chosen by a hold-out sweep at gamma=1
DEFAULT_INPUT_SCALE = {
    ProblemKind.BURGERS: 0.1,
    ProblemKind.DARCY: 6.0,
    ProblemKind.LORENZ96: 1.0,
}

_JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)
_RESIDUAL_TOL = 1e-8


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class RidgeConfig:
    lam: float = 0.1
    gamma: float = 1.0
    input_scale: float = 1.0
    mode: str = "masked"  # or "interpolate"

    def __post_init__(self):
        if self.lam <= 0 or self.gamma <= 0 or self.input_scale <= 0:
            raise ValueError("lam, gamma and input_scale must be positive")
        if self.mode not in ("masked", "interpolate"):
            raise ValueError(f"unknown training mode {self.mode!r}")


def rbf_kernel(x, y, gamma: float = 1.0) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ShapeError("rbf_kernel", x.shape, y.shape)
    return float(np.exp(-gamma * np.sum((x - y) ** 2)))


def rbf_gram(a: np.ndarray, b: np.ndarray, gamma: float = 1.0) -> np.ndarray:
    sq = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def _scale_features(x: np.ndarray, input_scale: float) -> np.ndarray:
    return x / (input_scale * np.sqrt(x.shape[1]))


def _as_matrix(inputs, width: int | None = None) -> np.ndarray:
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("inputs must be a vector or a matrix of stacked fields")
    if width is not None and x.shape[1] != width:
        raise ShapeError("input length", (x.shape[1],), (width,))
    return x


def _spd_solve(a: np.ndarray, rhs: np.ndarray):
    """Cholesky solve with escalating diagonal jitter; returns (solution, factor)."""
    scale = float(np.mean(np.diag(a)))
    for jit in _JITTERS:
        m = a + jit * scale * np.eye(a.shape[0]) if jit else a
        try:
            fac = linalg.cho_factor(m, lower=True, check_finite=False)
        except linalg.LinAlgError:
            continue
        sol = linalg.cho_solve(fac, rhs, check_finite=False)
        res = np.linalg.norm(m @ sol - rhs) / max(np.linalg.norm(rhs), 1e-300)
        if res <= _RESIDUAL_TOL:
            return sol, fac
    raise FitError(f"kernel system could not be factorized to residual {_RESIDUAL_TOL:g}")


@dataclass
class KernelRidgeModel:
    """Dual-form ridge model; unobserved (sample, coordinate) pairs carry zero weight."""

    train_inputs: np.ndarray
    weights: np.ndarray  # (N, m)
    offset: np.ndarray  # (m,)
    lam: float
    gamma: float
    input_scale: float
    _factor: tuple | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.train_inputs.shape[0]

    def _features(self, inputs) -> np.ndarray:
        return _scale_features(_as_matrix(inputs, self.train_inputs.shape[1]), self.input_scale)

    def kernel_to_train(self, inputs) -> np.ndarray:
        return rbf_gram(self._features(inputs), _scale_features(self.train_inputs, self.input_scale), self.gamma)

    def predict(self, inputs) -> np.ndarray:
        single = np.asarray(inputs).ndim == 1
        out = self.kernel_to_train(inputs) @ self.weights + self.offset
        return out[0] if single else out

    def posterior_variance(self, inputs) -> np.ndarray:
        """k(x,x) - k_x^T (K + lam I)^{-1} k_x over all training inputs."""
        if self._factor is None:
            f = _scale_features(self.train_inputs, self.input_scale)
            gram = rbf_gram(f, f, self.gamma) + self.lam * np.eye(self.size)
            self._factor = linalg.cho_factor(gram, lower=True, check_finite=False)
        kx = self.kernel_to_train(inputs)
        v = 1.0 - np.einsum("ij,ji->i", kx, linalg.cho_solve(self._factor, kx.T, check_finite=False))
        return np.maximum(v, 0.0)


def fit_kernel_ridge(inputs, targets, lam: float = 0.1, gamma: float = 1.0, input_scale: float = 1.0,
                     mask=None, center: bool = True) -> KernelRidgeModel:
    """Solve (K + lam I) alpha = U - mean(U) per output coordinate.

    ``mask`` (N, m) of booleans restricts each coordinate's regression to the
    rows that observed it; entries of ``targets`` outside the mask are ignored.
    With ``center=False`` the offset is zero and alpha solves against U itself.
    """
    if lam <= 0 or gamma <= 0:
        raise ValueError("lam and gamma must be positive")
    x = _as_matrix(inputs)
    y = np.asarray(targets, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[0] != x.shape[0]:
        raise ShapeError("targets vs inputs", y.shape[:1], x.shape[:1])
    if x.shape[0] < 1:
        raise FitError("kernel ridge needs at least one training sample")
    f = _scale_features(x, input_scale)
    gram = rbf_gram(f, f, gamma)
    n_samples, n_out = y.shape
    weights = np.zeros((n_samples, n_out))
    offset = np.zeros(n_out)
    factor = None
    if mask is None:
        offset = y.mean(0) if center else offset
        weights, factor = _spd_solve(gram + lam * np.eye(n_samples), y - offset)
    else:
        m = np.asarray(mask, dtype=bool)
        if m.shape != y.shape:
            raise ShapeError("mask vs targets", m.shape, y.shape)
        patterns, inverse = np.unique(m.T, axis=0, return_inverse=True)
        for g, rows in enumerate(patterns):
            cols = np.flatnonzero(inverse.ravel() == g)
            sel = np.flatnonzero(rows)
            if sel.size == 0:
                continue  # never observed: predict zero
            t = y[np.ix_(sel, cols)]
            mu = t.mean(0) if center else np.zeros(cols.size)
            sub = gram[np.ix_(sel, sel)] + lam * np.eye(sel.size)
            alpha, fac = _spd_solve(sub, t - mu)
            weights[np.ix_(sel, cols)] = alpha
            offset[cols] = mu
            if sel.size == n_samples:
                factor = fac
    return KernelRidgeModel(x.copy(), weights, offset, float(lam), float(gamma), float(input_scale), factor)


def interpolate_to_uniform(sample: LabeledSample, grid: SpatialGrid) -> np.ndarray:
    """Dense field from a sparse sample.

    1D grids: piecewise-linear through the observed nodes, constant beyond the
    outermost ones. 2D lattices: nearest-observed-value fill.
    """
    idx = np.asarray(sample.mask.indices, dtype=np.int64)
    if sample.is_dense:
        return sample.dense_output()
    if grid.kind == "lattice2d":
        if idx.size < 1:
            raise ValueError("need at least one observed point")
        n = int(round(np.sqrt(len(grid))))
        missing = np.ones(n * n, dtype=bool)
        missing[idx] = False
        vals = np.zeros(n * n)
        vals[idx] = sample.observed
        _, (ii, jj) = distance_transform_edt(missing.reshape(n, n), return_indices=True)
        return vals.reshape(n, n)[ii, jj].ravel()
    if idx.size < 2:
        raise ValueError("linear interpolation needs at least 2 observed points")
    order = np.argsort(idx)
    x = grid.coords
    return np.interp(x, x[idx[order]], sample.observed[order])


def _mask_matrix(dataset: Dataset, size: int) -> np.ndarray:
    m = np.zeros((len(dataset), size), dtype=bool)
    for r, s in enumerate(dataset):
        m[r, list(s.mask.indices)] = True
    return m


def training_arrays(dataset: Dataset, grid: SpatialGrid, mode: str):
    """(inputs, targets, mask) ready for :func:`fit_kernel_ridge`."""
    if len(dataset) == 0:
        raise FitError("cannot fit on an empty dataset")
    x = dataset.inputs()
    size = len(grid)
    if mode == "interpolate":
        y = np.stack([interpolate_to_uniform(s, grid) for s in dataset])
        return x, y, None
    m = _mask_matrix(dataset, size)
    y = np.zeros((len(dataset), size))
    for r, s in enumerate(dataset):
        y[r, list(s.mask.indices)] = s.observed
    return x, y, (None if m.all() else m)


def fit_dataset(dataset: Dataset, grid: SpatialGrid, cfg: RidgeConfig = RidgeConfig()) -> KernelRidgeModel:
    x, y, m = training_arrays(dataset, grid, cfg.mode)
    return fit_kernel_ridge(x, y, cfg.lam, cfg.gamma, cfg.input_scale, mask=m)


def evaluate(model, test: Dataset) -> float:
    if len(test) == 0:
        raise ValueError("test set is empty")
    return rmse(model.predict(test.inputs()), test.dense_outputs())


@dataclass
class FourierFeatureRidge:
    """Primal ridge on random cosine features z(x) = sqrt(2/D) cos(W^T x + b)."""

    frequencies: np.ndarray  # (d, D)
    phases: np.ndarray  # (D,)
    coef: np.ndarray  # (D, m)
    offset: np.ndarray
    input_scale: float

    def features(self, inputs) -> np.ndarray:
        f = _scale_features(_as_matrix(inputs, self.frequencies.shape[0]), self.input_scale)
        d = self.phases.size
        return np.sqrt(2.0 / d) * np.cos(f @ self.frequencies + self.phases)

    def predict(self, inputs) -> np.ndarray:
        single = np.asarray(inputs).ndim == 1
        out = self.features(inputs) @ self.coef + self.offset
        return out[0] if single else out


def fit_fourier_ridge(inputs, targets, sigma: float = 4.0, n_features: int = 512, lam: float = 1e-3,
                      seed: int = 0, input_scale: float = 1.0) -> FourierFeatureRidge:
    """Gaussian frequencies with std ``sigma`` approximate exp(-sigma^2 |dx|^2 / 2)."""
    if n_features < 1:
        raise ValueError("need at least one feature")
    x = _as_matrix(inputs)
    y = np.asarray(targets, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    rng = np.random.default_rng(seed)
    w = sigma * rng.standard_normal((x.shape[1], n_features))
    b = rng.uniform(0.0, 2 * np.pi, n_features)
    model = FourierFeatureRidge(w, b, np.zeros((n_features, y.shape[1])), y.mean(0), float(input_scale))
    z = model.features(x)
    model.coef, _ = _spd_solve(z.T @ z + lam * np.eye(n_features), z.T @ (y - model.offset))
    return model


def grid_search(inputs, targets, lams, gammas, folds: int = 5, input_scale: float = 1.0, seed: int = 0):
    """K-fold cross-validated RMSE for every (lam, gamma); returns (best pair, table)."""
    x = _as_matrix(inputs)
    y = np.asarray(targets, dtype=np.float64)
    n = x.shape[0]
    if folds < 2 or folds > n:
        raise ValueError("folds must lie in [2, number of samples]")
    parts = np.array_split(np.random.default_rng(seed).permutation(n), folds)
    table = {}
    for lam in lams:
        for gamma in gammas:
            errs = []
            for p in parts:
                train = np.setdiff1d(np.arange(n), p)
                m = fit_kernel_ridge(x[train], y[train], lam, gamma, input_scale)
                errs.append(np.mean((m.predict(x[p]) - y[p].reshape(len(p), -1)) ** 2))
            table[(float(lam), float(gamma))] = float(np.sqrt(np.mean(errs)))
    best = min(table, key=lambda k: (table[k], k))
    return best, table


def save_model(path, model) -> None:
    from .container import PayloadKind, write_arrays

    if isinstance(model, KernelRidgeModel):
        write_arrays(path, PayloadKind.KERNEL_RIDGE,
                     {"inputs": model.train_inputs, "weights": model.weights, "offset": model.offset},
                     {"lam": model.lam, "gamma": model.gamma, "input_scale": model.input_scale})
    elif isinstance(model, FourierFeatureRidge):
        write_arrays(path, PayloadKind.FOURIER_RIDGE,
                     {"frequencies": model.frequencies, "phases": model.phases,
                      "coef": model.coef, "offset": model.offset},
                     {"input_scale": model.input_scale})
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")


def load_model(path):
    from .container import PayloadKind, read_arrays

    kind, a, meta = read_arrays(path)
    if kind is PayloadKind.KERNEL_RIDGE:
        return KernelRidgeModel(a["inputs"], a["weights"], a["offset"], meta["lam"], meta["gamma"], meta["input_scale"])
    if kind is PayloadKind.FOURIER_RIDGE:
        return FourierFeatureRidge(a["frequencies"], a["phases"], a["coef"], a["offset"], meta["input_scale"])
    raise ValueError(f"{path} holds {kind.name}, not a ridge model")
