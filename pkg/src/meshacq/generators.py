"""Instance priors and train/test corpus construction with dense oracle solutions."""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    Dataset,
    LabeledSample,
    ProblemKind,
    ProblemSpec,
    SelectionMask,
    SpatialGrid,
)
from .solvers import burgers_solve_uniform, darcy_solve, lorenz96_solve

GENERATOR_VERSION = "1"

BURGERS_PARAM_RANGE = (1.0, 6.0)
GRF_TAU = 3.0
GRF_ALPHA = 2.0
LORENZ_IC_STD = 0.5

# instance streams: SeedSequence([master, stream, index])
_TRAIN_STREAM = 0
_TEST_STREAM = 1


class CorpusError(RuntimeError):
    def __init__(self, message: str, instance_id: int):
        self.instance_id = instance_id
        super().__init__(f"instance {instance_id}: {message}")


def instance_rng(master_seed: int, stream: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(stream), int(index)]))


def burgers_ic(a: float, b: float, grid: SpatialGrid | np.ndarray) -> np.ndarray:
    lo, hi = BURGERS_PARAM_RANGE
    if not (lo <= a <= hi and lo <= b <= hi):
        raise ValueError(f"Burgers parameters ({a}, {b}) outside [{lo}, {hi}]")
    x = grid.coords if isinstance(grid, SpatialGrid) else np.asarray(grid, dtype=np.float64)
    return a * np.exp(-a * x) * np.sin(2 * np.pi * x) * np.cos(b * np.pi * x)


def sample_burgers_params(rng: np.random.Generator) -> tuple[float, float]:
    lo, hi = BURGERS_PARAM_RANGE
    a, b = rng.uniform(lo, hi, size=2)
    return float(a), float(b)


def gaussian_random_field(rng: np.random.Generator, n: int, tau: float = GRF_TAU, alpha: float = GRF_ALPHA) -> np.ndarray:
    """Zero-mean periodic GRF with power spectrum (4 pi^2 |k|^2 + tau^2)^(-alpha)."""
    k = np.fft.fftfreq(n, d=1.0 / n)
    kx, ky = np.meshgrid(k, k, indexing="ij")
    amp = (4 * np.pi**2 * (kx**2 + ky**2) + tau**2) ** (-alpha / 2.0)
    amp[0, 0] = 0.0
    noise = rng.standard_normal((n, n))
    return np.real(np.fft.ifft2(np.fft.fft2(noise) * amp))


def darcy_coefficient(seed: int, n: int, levels=(4.0, 12.0)) -> np.ndarray:
    """Two-phase coefficient: GRF thresholded at its own median (below -> high level)."""
    if n < 8:
        raise ValueError("Darcy lattice needs n >= 8")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 2]))
    g = gaussian_random_field(rng, n).ravel()
    low, high = sorted(levels)
    out = np.full(g.size, low)
    out[g < np.median(g)] = high
    return out


def lorenz96_ic(seed: int, spec: ProblemSpec) -> np.ndarray:
    p = spec.lorenz96
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 3]))
    return p.forcing + LORENZ_IC_STD * rng.standard_normal(p.n)


def sample_input(spec: ProblemSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.kind is ProblemKind.BURGERS:
        a, b = sample_burgers_params(rng)
        return burgers_ic(a, b, spec.grid())
    sub_seed = int(rng.integers(2**63 - 1))
    if spec.kind is ProblemKind.DARCY:
        return darcy_coefficient(sub_seed, spec.darcy.n, spec.darcy.levels)
    return lorenz96_ic(sub_seed, spec)


def dense_solve(spec: ProblemSpec, x: np.ndarray) -> np.ndarray:
    """Oracle solution on the full uniform grid."""
    if spec.kind is ProblemKind.BURGERS:
        return burgers_solve_uniform(x, spec.burgers)
    if spec.kind is ProblemKind.DARCY:
        return darcy_solve(x, spec.darcy)
    return lorenz96_solve(x, spec.lorenz96)


@dataclass
class Corpus:
    spec: ProblemSpec
    train: Dataset
    test: Dataset
    master_seed: int
    solve_seconds: float = 0.0


def _build_split(spec: ProblemSpec, count: int, master_seed: int, stream: int, id_offset: int) -> tuple[Dataset, float]:
    ds = Dataset(spec.kind, spec.grid_size)
    spent = 0.0
    full = SelectionMask.full(spec.field_size)
    for i in range(count):
        iid = id_offset + i
        x = sample_input(spec, instance_rng(master_seed, stream, i))
        t0 = time.perf_counter()
        try:
            u = dense_solve(spec, x)
        except Exception as exc:  # solver failures carry the instance id upward
            raise CorpusError(str(exc), iid) from exc
        spent += time.perf_counter() - t0
        ds.append(LabeledSample(x, full, u, instance_id=iid, seed=master_seed, iteration=0))
    return ds, spent


def build_corpus(spec: ProblemSpec, train: int = 1000, test: int = 200, seed: int = 0) -> Corpus:
    """Sample train/test instances from the prior and solve them densely.

    Train instance ids are ``0..train-1`` and test ids follow, so the splits
    never share an instance stream.
    """
    if train < 1 or test < 1:
        raise ValueError("train and test counts must be at least 1")
    tr, t1 = _build_split(spec, train, seed, _TRAIN_STREAM, 0)
    te, t2 = _build_split(spec, test, seed, _TEST_STREAM, train)
    return Corpus(spec, tr, te, seed, t1 + t2)


def corpus_manifest(corpus: Corpus, files: dict[str, Path]) -> dict:
    from .config import spec_to_dict

    return {
        "problem": corpus.spec.kind.value,
        "spec": spec_to_dict(corpus.spec),
        "train": len(corpus.train),
        "test": len(corpus.test),
        "master_seed": corpus.master_seed,
        "generator_version": GENERATOR_VERSION,
        "files": {k: {"path": p.name, "sha256": file_hash(p)} for k, p in files.items()},
    }


def file_hash(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_corpus(corpus: Corpus, out_dir: Path) -> dict:
    from .container import write_dataset

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {"train": out_dir / "train.bin", "test": out_dir / "test.bin"}
    write_dataset(files["train"], corpus.train)
    write_dataset(files["test"], corpus.test)
    manifest = corpus_manifest(corpus, files)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def read_corpus(out_dir: Path) -> Corpus:
    from .config import spec_from_dict
    from .container import read_dataset

    out_dir = Path(out_dir)
    manifest = json.loads((out_dir / "manifest.json").read_text())
    spec = spec_from_dict(manifest["spec"])
    return Corpus(
        spec,
        read_dataset(out_dir / "train.bin"),
        read_dataset(out_dir / "test.bin"),
        int(manifest["master_seed"]),
    )
