"""Snapshot matrices: centering, binary persistence and dataset catalogs.

On-disk matrix format (little-endian throughout)::

    b"PMDR1" | n : uint64 | k : uint64 | n*k float64 values, column-major

Model containers prepend JSON metadata to a sequence of such blocks::

    b"PMDC1" | len : uint64 | JSON (utf-8) | block_1 | block_2 | ...

where the JSON lists the block names in order under ``"arrays"``.

CSV export is for plotting only; the binary file is the exact record.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError, TruncatedFileError

__all__ = [
    "SnapshotMatrix",
    "CenteringVector",
    "DatasetCatalog",
    "center",
    "uncenter",
    "save_matrix",
    "load_matrix",
    "export_csv",
    "save_catalog",
    "load_catalog",
    "atomic_write_bytes",
    "write_container",
    "read_container",
]

MAGIC = b"PMDR1"
CONTAINER_MAGIC = b"PMDC1"
_HEADER = struct.Struct("<QQ")
# Refuse headers that would ask for more than this many entries.
_MAX_ENTRIES = 2**40


def _frozen(arr):
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SnapshotMatrix:
    """An ``n x k`` matrix whose columns are state snapshots.

    Parameters
    ----------
    data : (n, k) array_like
        Snapshot values. Copied and made read-only.
    param_id : float or str, optional
        Provenance label, e.g. the parameter value that generated the data.
    """

    data: np.ndarray
    param_id: float | str | None = None

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InputError(f"snapshot data must be a nonempty 2D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InputError("snapshot data contains non-finite entries")
        object.__setattr__(self, "data", _frozen(arr))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def k(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)


@dataclass(frozen=True)
class CenteringVector:
    """Per-row mean subtracted from every snapshot."""

    mean: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(arr)):
            raise InputError("centering vector contains non-finite entries")
        object.__setattr__(self, "mean", _frozen(arr))

    @property
    def n(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class DatasetCatalog:
    """Training and test snapshot sets keyed by parameter value.

    ``train`` and ``test`` are lists of ``(mu, SnapshotMatrix)`` pairs.
    ``seed`` is the RNG seed used to draw the test parameters.
    """

    train: list
    test: list
    seed: int | None = None
    mu_range: tuple[float, float] | None = None
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        mus = [mu for mu, _ in self.train]
        if len(set(mus)) != len(mus):
            raise InputError("training parameter values must be distinct")
        if self.mu_range is not None:
            lo, hi = self.mu_range
            bad = [mu for mu, _ in self.test if not lo <= mu <= hi]
            if bad:
                raise InputError(f"test parameters {bad} fall outside {self.mu_range}")

    def training_matrix(self) -> SnapshotMatrix:
        """All training snapshots side by side, in catalog order."""
        return SnapshotMatrix(np.hstack([S.data for _, S in self.train]))


def _as_array(S):
    if isinstance(S, SnapshotMatrix):
        return S.data
    return SnapshotMatrix(S).data


def center(S):
    """Subtract the mean snapshot from every column.

    Returns
    -------
    centered : SnapshotMatrix
    c : CenteringVector
        The mean over the ``k`` columns, one entry per row.
    """
    X = _as_array(S)
    mean = X.mean(axis=1)
    centered = X - mean[:, None]
    param = S.param_id if isinstance(S, SnapshotMatrix) else None
    return SnapshotMatrix(centered, param), CenteringVector(mean)


def uncenter(S_c, c: CenteringVector) -> SnapshotMatrix:
    """Add the centering vector back onto every column."""
    X = _as_array(S_c)
    mean = c.mean if isinstance(c, CenteringVector) else np.asarray(c, dtype=float).reshape(-1)
    if mean.shape[0] != X.shape[0]:
        raise InputError(f"centering vector has length {mean.shape[0]}, matrix has {X.shape[0]} rows")
    param = S_c.param_id if isinstance(S_c, SnapshotMatrix) else None
    return SnapshotMatrix(X + mean[:, None], param)


# Persistence -----------------------------------------------------------------
def atomic_write_bytes(path, payload: bytes):
    """Write via a temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def matrix_to_bytes(X) -> bytes:
    X = np.asarray(X, dtype="<f8")
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    return MAGIC + _HEADER.pack(n, k) + X.tobytes(order="F")


def matrix_from_bytes(buf: bytes, source="<bytes>") -> np.ndarray:
    if buf[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{source}: bad magic {buf[:len(MAGIC)]!r}, expected {MAGIC!r}")
    head_end = len(MAGIC) + _HEADER.size
    if len(buf) < head_end:
        raise TruncatedFileError(f"{source}: header truncated")
    n, k = _HEADER.unpack_from(buf, len(MAGIC))
    if n * k > _MAX_ENTRIES:
        raise FormatError(f"{source}: declared dimensions {n}x{k} overflow the format limit")
    expected = head_end + 8 * n * k
    if len(buf) < expected:
        raise TruncatedFileError(
            f"{source}: header declares {8 * n * k} payload bytes, only {len(buf) - head_end} present"
        )
    if len(buf) > expected:
        raise FormatError(f"{source}: {len(buf) - expected} trailing bytes after payload")
    flat = np.frombuffer(buf, dtype="<f8", count=n * k, offset=head_end)
    return flat.reshape((n, k), order="F").astype(np.float64)


def _split_blocks(buf, offset, count, source):
    blocks = []
    head = len(MAGIC) + _HEADER.size
    for _ in range(count):
        if len(buf) < offset + head:
            raise TruncatedFileError(f"{source}: container ends inside a block header")
        n, k = _HEADER.unpack_from(buf, offset + len(MAGIC))
        if n * k > _MAX_ENTRIES:
            raise FormatError(f"{source}: declared dimensions {n}x{k} overflow the format limit")
        end = offset + head + 8 * n * k
        blocks.append(matrix_from_bytes(buf[offset:end], source))
        offset = end
    if offset != len(buf):
        raise FormatError(f"{source}: {len(buf) - offset} trailing bytes after last block")
    return blocks


def write_container(path, meta: dict, arrays: dict):
    """Write JSON metadata plus named matrices to one file."""
    meta = dict(meta, arrays=list(arrays))
    head = json.dumps(meta, sort_keys=True).encode()
    parts = [CONTAINER_MAGIC, struct.pack("<Q", len(head)), head]
    parts += [matrix_to_bytes(a) for a in arrays.values()]
    atomic_write_bytes(path, b"".join(parts))


def read_container(path):
    """Inverse of :func:`write_container`; returns ``(meta, arrays)``."""
    path = Path(path)
    buf = path.read_bytes()
    if buf[: len(CONTAINER_MAGIC)] != CONTAINER_MAGIC:
        raise FormatError(f"{path}: bad magic, not a model container")
    off = len(CONTAINER_MAGIC)
    if len(buf) < off + 8:
        raise TruncatedFileError(f"{path}: container header truncated")
    (hlen,) = struct.unpack_from("<Q", buf, off)
    off += 8
    if len(buf) < off + hlen:
        raise TruncatedFileError(f"{path}: metadata truncated")
    try:
        meta = json.loads(buf[off : off + hlen])
    except ValueError as exc:
        raise FormatError(f"{path}: unreadable metadata") from exc
    names = meta.get("arrays", [])
    blocks = _split_blocks(buf, off + hlen, len(names), str(path))
    return meta, dict(zip(names, blocks))


def save_matrix(S, path):
    """Write ``S`` in the binary matrix format."""
    atomic_write_bytes(path, matrix_to_bytes(_as_array(S)))


def load_matrix(path, param_id=None) -> SnapshotMatrix:
    """Read a matrix written by :func:`save_matrix`."""
    path = Path(path)
    return SnapshotMatrix(matrix_from_bytes(path.read_bytes(), str(path)), param_id)


def export_csv(S, path):
    """One CSV column per snapshot, ``%.17g`` formatted."""
    X = _as_array(S)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, X, fmt="%.17g", delimiter=",")


def save_catalog(catalog: DatasetCatalog, directory) -> Path:
    """Write every matrix plus ``catalog.json`` under ``directory``."""
    directory = Path(directory)
    entries = {}
    for split in ("train", "test"):
        entries[split] = []
        for i, (mu, S) in enumerate(getattr(catalog, split)):
            rel = f"{split}/{split}_{i:03d}.pmdr"
            save_matrix(S, directory / rel)
            entries[split].append({"mu": float(mu), "path": rel, "n": S.n, "k": S.k})
    doc = {
        "format": "polymanifold-catalog/1",
        "seed": catalog.seed,
        "mu_range": list(catalog.mu_range) if catalog.mu_range is not None else None,
        "config": catalog.config,
        **entries,
    }
    path = directory / "catalog.json"
    atomic_write_bytes(path, (json.dumps(doc, indent=2) + "\n").encode())
    return path


def load_catalog(path) -> DatasetCatalog:
    """Load a catalog written by :func:`save_catalog`.

    ``path`` may be the JSON file or the directory holding ``catalog.json``.
    """
    path = Path(path)
    if path.is_dir():
        path = path / "catalog.json"
    doc = json.loads(path.read_text())
    if doc.get("format") != "polymanifold-catalog/1":
        raise FormatError(f"{path}: not a polymanifold catalog")
    base = path.parent
    splits = {
        split: [(e["mu"], load_matrix(base / e["path"], e["mu"])) for e in doc[split]]
        for split in ("train", "test")
    }
    mu_range = tuple(doc["mu_range"]) if doc.get("mu_range") is not None else None
    return DatasetCatalog(splits["train"], splits["test"], doc.get("seed"), mu_range, doc.get("config") or {})
