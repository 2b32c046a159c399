"""Loading, validation, normalization and persistence of representation spaces.

A space on disk is a JSON manifest next to a raw binary file of row-major,
little-endian, 4-byte IEEE-754 floats with no header. Ground-truth labels,
when present, live in a separate newline-delimited integer file so that
training inputs stay provably label-free.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError, InputError

log = logging.getLogger(__name__)

MIN_ROW_NORM = 1e-12

_MANIFEST_KEYS = {"name", "n_samples", "dim", "dtype", "data_path", "pre_normalized"}


@dataclass(frozen=True)
class EmbeddingManifest:
    """Description of one stored space. ``data_path`` is relative to the manifest."""

    name: str
    n_samples: int
    dim: int
    dtype: str = "f32"
    data_path: str = ""
    pre_normalized: bool = False
    labels_path: str | None = None

    def __post_init__(self):
        if self.n_samples < 1 or self.dim < 1:
            raise FormatError(
                f"manifest {self.name!r}: n_samples and dim must be positive, "
                f"got {self.n_samples} x {self.dim}"
            )
        if self.dtype != "f32":
            raise FormatError(f"manifest {self.name!r}: unsupported dtype {self.dtype!r}")

    @property
    def n_bytes(self) -> int:
        return self.n_samples * self.dim * 4

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "n_samples": self.n_samples,
            "dim": self.dim,
            "dtype": self.dtype,
            "data_path": self.data_path,
            "pre_normalized": self.pre_normalized,
        }
        if self.labels_path is not None:
            d["labels_path"] = self.labels_path
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EmbeddingManifest":
        missing = _MANIFEST_KEYS - set(d)
        if missing:
            raise FormatError(f"manifest missing keys: {sorted(missing)}")
        return cls(
            name=d["name"],
            n_samples=int(d["n_samples"]),
            dim=int(d["dim"]),
            dtype=d["dtype"],
            data_path=d["data_path"],
            pre_normalized=bool(d["pre_normalized"]),
            labels_path=d.get("labels_path"),
        )


@dataclass
class EmbeddingSpace:
    """A frozen N x d matrix of per-sample features plus its manifest.

    The matrix is held as float64 in memory; persistence quantizes to f32.
    Instances are treated as immutable and are safe to share across runs.
    """

    manifest: EmbeddingManifest
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.ascontiguousarray(self.matrix, dtype=np.float64)
        if self.matrix.shape != (self.manifest.n_samples, self.manifest.dim):
            raise FormatError(
                f"space {self.manifest.name!r}: matrix shape {self.matrix.shape} does not "
                f"match manifest {self.manifest.n_samples} x {self.manifest.dim}"
            )
        if not np.all(np.isfinite(self.matrix)):
            bad = int(np.argwhere(~np.isfinite(self.matrix))[0][0])
            raise DataError(f"space {self.manifest.name!r}: non-finite entry in row {bad}")

    @property
    def n_samples(self) -> int:
        return self.manifest.n_samples

    @property
    def dim(self) -> int:
        return self.manifest.dim


@dataclass(frozen=True)
class GroundTruthLabels:
    """Reference labels in {0..K-1}; consumed by evaluation only, never by training."""

    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        arr = np.ascontiguousarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", arr)
        if arr.ndim != 1:
            raise InputError("labels must be a flat vector")
        if self.n_classes < 1:
            raise InputError("n_classes must be positive")
        if arr.size and (arr.min() < 0 or arr.max() >= self.n_classes):
            raise InputError(
                f"labels out of range: values in [{arr.min()}, {arr.max()}] "
                f"for n_classes={self.n_classes}"
            )

    def __len__(self) -> int:
        return self.labels.size


def load_space(manifest_path: str | Path) -> EmbeddingSpace:
    """Read a manifest and materialize its matrix, verifying size and finiteness."""
    manifest_path = Path(manifest_path)
    try:
        raw = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot parse manifest {manifest_path}: {exc}") from exc
    manifest = EmbeddingManifest.from_dict(raw)

    data_path = manifest_path.parent / manifest.data_path
    if not data_path.is_file():
        raise FormatError(f"data file {data_path} referenced by {manifest_path} is missing")
    blob = data_path.read_bytes()
    if len(blob) != manifest.n_bytes:
        raise FormatError(
            f"{data_path}: expected {manifest.n_bytes} bytes "
            f"({manifest.n_samples} x {manifest.dim} f32), found {len(blob)}"
        )
    log.info(
        "loaded space %s: %d x %d, sha256=%s",
        manifest.name,
        manifest.n_samples,
        manifest.dim,
        hashlib.sha256(blob).hexdigest(),
    )
    matrix = np.frombuffer(blob, dtype="<f4").reshape(manifest.n_samples, manifest.dim)
    space = EmbeddingSpace(manifest=manifest, matrix=matrix.astype(np.float64))
    if manifest.pre_normalized:
        norms = np.linalg.norm(space.matrix, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-4):
            bad = int(np.argmax(np.abs(norms - 1.0)))
            raise DataError(
                f"space {manifest.name!r} is flagged pre_normalized but row {bad} "
                f"has norm {norms[bad]:.6g}"
            )
    return space


def save_space(space: EmbeddingSpace, directory: str | Path) -> Path:
    """Write manifest plus f32 binary into ``directory``; returns the manifest path.

    ``load_space`` inverts this bit-exactly whenever the in-memory matrix is
    exactly representable in f32 (always true for spaces that came from disk).
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = space.manifest
    if not manifest.data_path:
        manifest = replace(manifest, data_path=f"{manifest.name}.f32")
    data_path = directory / manifest.data_path
    data_path.write_bytes(np.ascontiguousarray(space.matrix, dtype="<f4").tobytes())
    manifest_path = directory / f"{manifest.name}.json"
    manifest_path.write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")
    log.info("saved space %s to %s", manifest.name, manifest_path)
    return manifest_path


def normalize_rows(space: EmbeddingSpace) -> EmbeddingSpace:
    """Scale every row to unit L2 norm; idempotent.

    Rows with norm below ``MIN_ROW_NORM`` are a hard error: a zero embedding is
    meaningless under cosine-prototype scoring.
    """
    norms = np.linalg.norm(space.matrix, axis=1)
    tiny = norms < MIN_ROW_NORM
    if tiny.any():
        bad = int(np.argmax(tiny))
        raise DataError(
            f"space {space.manifest.name!r}: row {bad} has norm {norms[bad]:.3e} "
            f"< {MIN_ROW_NORM}; cannot normalize"
        )
    return EmbeddingSpace(
        manifest=replace(space.manifest, pre_normalized=True),
        matrix=space.matrix / norms[:, None],
    )


def load_labels(path: str | Path, n_classes: int | None = None) -> GroundTruthLabels:
    """Read newline-delimited integer labels; K defaults to max(label)+1."""
    path = Path(path)
    try:
        lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
        values = np.array([int(ln) for ln in lines], dtype=np.int64)
    except (OSError, ValueError) as exc:
        raise FormatError(f"cannot parse labels file {path}: {exc}") from exc
    if values.size == 0:
        raise FormatError(f"labels file {path} is empty")
    k = n_classes if n_classes is not None else int(values.max()) + 1
    return GroundTruthLabels(labels=values, n_classes=k)


def save_labels(labels: GroundTruthLabels, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(str(int(v)) for v in labels.labels) + "\n")
    return path
