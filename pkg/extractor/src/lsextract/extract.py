"""Run a frozen encoder over an image source and persist the features.

Output is the two-file embedding format the downstream tooling reads: a
JSON manifest next to a raw little-endian float32 row-major binary, plus a
newline-delimited integer label file when the source carries labels. The
format is deliberately trivial so this package needs no import from the
consumer — the files are the interface.

Inference is batched; rows are written once, in index order, after the
whole pass succeeds, so a failed extraction leaves no artifacts behind.
"""

import json
import logging
from pathlib import Path

import numpy as np
import torch

from .datasets import open_source
from .errors import DatasetError
from .registry import build_model, build_transform, get_spec

log = logging.getLogger(__name__)


def _write_space(
    out_dir: Path, name: str, features: np.ndarray, labels: list[int] | None
) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "name": name,
        "n_samples": int(features.shape[0]),
        "dim": int(features.shape[1]),
        "dtype": "f32",
        "data_path": f"{name}.f32",
        "pre_normalized": False,
    }
    if labels is not None:
        manifest["labels_path"] = f"{name}_labels.txt"
        (out_dir / manifest["labels_path"]).write_text(
            "\n".join(str(v) for v in labels) + "\n"
        )
    (out_dir / manifest["data_path"]).write_bytes(
        np.ascontiguousarray(features, dtype="<f4").tobytes()
    )
    manifest_path = out_dir / f"{name}.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path


def extract(
    dataset: str,
    model_id: str,
    out_dir: str | Path,
    split: str | None = None,
    batch_size: int = 32,
    device: str = "cpu",
    checkpoint: str | None = None,
    data_root: str | None = None,
    name: str | None = None,
) -> Path:
    """Extract pooled features for every sample; returns the manifest path."""
    if batch_size < 1:
        raise DatasetError(f"batch_size must be >= 1, got {batch_size}")
    spec = get_spec(model_id)
    source = open_source(dataset, split=split, data_root=data_root)
    dev = torch.device(device)
    model = build_model(spec, checkpoint=checkpoint).to(dev)
    transform = build_transform(spec)

    log.info(
        "extracting %d samples through %s (dim %d) on %s",
        source.n_samples, model_id, spec.dim, dev,
    )
    rows: list[np.ndarray] = []
    batch: list[torch.Tensor] = []

    def flush():
        if not batch:
            return
        with torch.inference_mode():
            feats = model(torch.stack(batch).to(dev))
        rows.append(feats.cpu().numpy().astype(np.float32))
        batch.clear()

    for img in source:
        batch.append(transform(img))
        if len(batch) == batch_size:
            flush()
    flush()

    features = np.concatenate(rows, axis=0)
    if features.shape != (source.n_samples, spec.dim):
        raise DatasetError(
            f"extracted {features.shape} but expected "
            f"({source.n_samples}, {spec.dim})"
        )
    if not np.all(np.isfinite(features)):
        raise DatasetError("encoder produced non-finite features")

    if name is None:
        name = f"{model_id}_{split}" if split else model_id
    manifest_path = _write_space(Path(out_dir), name, features, source.labels)
    log.info("wrote %s", manifest_path)
    return manifest_path
