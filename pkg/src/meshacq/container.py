"""Binary container shared by datasets, model checkpoints and agent checkpoints.

Layout (all integers and floats little-endian)::

    header   magic b"MACQ" | u16 version | u8 payload kind | u8 problem code
             | u32 grid size | u32 record count
    dataset  per sample: u32 instance id | i64 seed | i32 iteration | u32 budget
             | u32 input length | f64[input length] | u32 mask length
             | u32[mask length] indices | f64[mask length] observed values
    arrays   per array: u16 name length | utf-8 name | u8 dtype (0=f64, 1=i64, 2=u8)
             | u8 ndim | u32[ndim] shape | data

Array payloads carry a JSON metadata blob stored as a u8 array named ``__meta__``.
"""

from __future__ import annotations

import enum
import json
import struct
from pathlib import Path

import numpy as np

from .core import Dataset, LabeledSample, ProblemKind, SelectionMask

MAGIC = b"MACQ"
VERSION = 1
_HEADER = struct.Struct("<4sHBBII")
_SAMPLE_HEAD = struct.Struct("<IqiII")
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<i8"), 2: np.dtype("u1")}
_DTYPE_CODES = {v: k for k, v in _DTYPES.items()}


class PayloadKind(enum.IntEnum):
    DATASET = 0
    KERNEL_RIDGE = 1
    FOURIER_RIDGE = 2
    AGENT = 3
    REPLAY = 4


class ContainerError(ValueError):
    pass


def _write_header(fh, kind: PayloadKind, problem: ProblemKind | None, grid_size: int, count: int):
    fh.write(_HEADER.pack(MAGIC, VERSION, int(kind), problem.code if problem else 0, grid_size, count))


def _read_header(fh):
    raw = fh.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise ContainerError("truncated header")
    magic, version, kind, problem, grid, count = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise ContainerError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    return PayloadKind(kind), (ProblemKind.from_code(problem) if problem else None), grid, count


def write_dataset(path, dataset: Dataset) -> None:
    with open(path, "wb") as fh:
        _write_header(fh, PayloadKind.DATASET, dataset.kind, dataset.grid_size, len(dataset))
        for s in dataset:
            idx = np.asarray(s.mask.indices, dtype="<u4")
            iid = s.instance_id if s.instance_id >= 0 else 0xFFFFFFFF
            fh.write(_SAMPLE_HEAD.pack(iid, s.seed, s.iteration, s.mask.budget, s.input.size))
            fh.write(s.input.astype("<f8").tobytes())
            fh.write(struct.pack("<I", idx.size))
            fh.write(idx.tobytes())
            fh.write(s.observed.astype("<f8").tobytes())


def _take(fh, nbytes: int) -> bytes:
    raw = fh.read(nbytes)
    if len(raw) != nbytes:
        raise ContainerError("truncated record")
    return raw


def read_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        kind, problem, grid, count = _read_header(fh)
        if kind is not PayloadKind.DATASET:
            raise ContainerError(f"expected a dataset, found {kind.name}")
        ds = Dataset(problem, grid)
        for _ in range(count):
            iid, seed, it, budget, n_in = _SAMPLE_HEAD.unpack(_take(fh, _SAMPLE_HEAD.size))
            x = np.frombuffer(_take(fh, 8 * n_in), dtype="<f8")
            (n_mask,) = struct.unpack("<I", _take(fh, 4))
            idx = np.frombuffer(_take(fh, 4 * n_mask), dtype="<u4")
            y = np.frombuffer(_take(fh, 8 * n_mask), dtype="<f8")
            ds.append(
                LabeledSample(
                    x, SelectionMask(tuple(idx.tolist()), budget), y,
                    instance_id=-1 if iid == 0xFFFFFFFF else iid, seed=seed, iteration=it,
                )
            )
        if fh.read(1):
            raise ContainerError("trailing bytes after last record")
    return ds


def write_arrays(path, kind: PayloadKind, arrays: dict[str, np.ndarray], meta: dict | None = None,
                 problem: ProblemKind | None = None, grid_size: int = 0) -> None:
    items = dict(arrays)
    if meta is not None:
        items["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype="u1")
    with open(path, "wb") as fh:
        _write_header(fh, kind, problem, grid_size, len(items))
        for name, arr in items.items():
            a = np.asarray(arr)
            if a.dtype.kind == "f":
                a = a.astype("<f8")
            elif a.dtype.kind == "b":
                a = a.astype("u1")
            elif a.dtype.kind in "iu" and a.dtype != np.dtype("u1"):
                a = a.astype("<i8")
            code = _DTYPE_CODES[a.dtype]
            nb = name.encode()
            fh.write(struct.pack("<H", len(nb)) + nb)
            fh.write(struct.pack("<BB", code, a.ndim))
            fh.write(struct.pack(f"<{a.ndim}I", *a.shape))
            fh.write(np.ascontiguousarray(a).tobytes())


def read_arrays(path, expect: PayloadKind | None = None):
    """Returns ``(kind, arrays, meta)``."""
    with open(path, "rb") as fh:
        kind, _problem, _grid, count = _read_header(fh)
        if expect is not None and kind is not expect:
            raise ContainerError(f"expected {expect.name}, found {kind.name}")
        arrays = {}
        for _ in range(count):
            (ln,) = struct.unpack("<H", _take(fh, 2))
            name = _take(fh, ln).decode()
            code, ndim = struct.unpack("<BB", _take(fh, 2))
            shape = struct.unpack(f"<{ndim}I", _take(fh, 4 * ndim))
            dt = _DTYPES[code]
            n = int(np.prod(shape)) if ndim else 1
            arrays[name] = np.frombuffer(_take(fh, dt.itemsize * n), dtype=dt).reshape(shape).copy()
    meta_raw = arrays.pop("__meta__", None)
    meta = json.loads(meta_raw.tobytes().decode()) if meta_raw is not None else {}
    return kind, arrays, meta


def atomic_write(path: Path, writer) -> None:
    """Write via a temporary sibling then rename, so readers never see partial files."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    writer(tmp)
    tmp.replace(path)
