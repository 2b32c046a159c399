"""Command-line pipeline: synth -> train/sweep -> aggregate -> evaluate.

Every subcommand writes a machine-readable artifact to --out (JSON, or CSV
for `correlate`) and prints a short human summary to stdout. Outputs embed
the parameters they were produced under plus a sha256 hash of them, so any
artifact can be traced back to its exact configuration. Exit codes: 0 on
success, 1 for usage problems, 2 for data/validation problems, 3 for
numerical failures. Set LABELSEARCH_LOG=DEBUG (or INFO, ...) for logs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import aggregation, embeddings, evaluation, meta_opt, synthetic
from .errors import (
    DegenerateParameterError,
    DivergenceError,
    LabelSearchError,
    UsageError,
)

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; the contract here is exit code 1."""

    def error(self, message):
        raise UsageError(f"{message}\n\n{self.format_usage()}")


def _params_hash(params: dict) -> str:
    canon = json.dumps(params, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _write_json(path: str | Path, obj: dict) -> None:
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj) + "\n")


def _load_runs(directory: str | Path) -> list[meta_opt.RunResult]:
    """All run artifacts in a directory, ordered by seed."""
    directory = Path(directory)
    if not directory.is_dir():
        raise UsageError(f"--runs expects a directory, got {directory}")
    runs = []
    for path in sorted(directory.glob("*.json")):
        try:
            obj = json.loads(path.read_text())
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict) and {"labels", "cv_accuracy", "config"} <= set(obj):
            runs.append(meta_opt.RunResult.from_dict(obj))
    if not runs:
        raise UsageError(f"no run files found under {directory}")
    runs.sort(key=lambda r: r.seed)
    return runs


def _runs_config_hash(runs) -> str | None:
    hashes = {meta_opt.config_hash(r.config) for r in runs}
    if len(hashes) > 1:
        logger.warning("runs were produced under %d different configs", len(hashes))
        return None
    return hashes.pop()


# ---------------------------------------------------------------------------
# Train-style config assembly
# ---------------------------------------------------------------------------

_CONFIG_FLAGS = {
    "k": "n_classes",
    "eta": "eta",
    "gamma": "gamma",
    "alpha": "alpha",
    "iters": "iters",
    "inner_steps": "inner_steps",
    "inner_lr": "inner_lr",
    "subset_size": "subset_size",
    "train_frac": "train_frac",
    "n_subsets": "n_subsets",
    "clip_norm": "clip_norm",
    "anneal_factor": "anneal_factor",
    "cv_folds": "cv_folds",
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, help="number of classes to search for")
    p.add_argument("--preset", choices=sorted(meta_opt.PRESETS),
                   help="named hyperparameter bundle (overrides --config values)")
    p.add_argument("--config", help="JSON file with config fields (flags win)")
    p.add_argument("--eta", type=float, help="entropy bonus weight")
    p.add_argument("--gamma", type=float, help="labeling temperature")
    p.add_argument("--alpha", type=float, help="outer Adam step size")
    p.add_argument("--iters", type=int, help="outer iterations")
    p.add_argument("--inner-steps", type=int, help="probe GD steps per fit")
    p.add_argument("--inner-lr", type=float, help="probe GD step size")
    p.add_argument("--subset-size", type=int, help="samples drawn per split pair")
    p.add_argument("--train-frac", type=float, help="fraction of each subset used to fit")
    p.add_argument("--n-subsets", type=int, help="split pairs averaged per outer step")
    p.add_argument("--clip-norm", type=float, help="outer gradient norm cap")
    p.add_argument("--anneal-at", help="comma-separated iteration indices, '' for none")
    p.add_argument("--anneal-factor", type=float, help="step/temperature shrink factor")
    p.add_argument("--cv-folds", type=int, help="folds behind cv_accuracy")


def _build_config(args) -> meta_opt.TrainConfig:
    values: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        values.update(json.loads(path.read_text()))
    if args.preset:
        values.update(meta_opt.PRESETS[args.preset])
    for flag, field in _CONFIG_FLAGS.items():
        v = getattr(args, flag)
        if v is not None:
            values[field] = v
    if args.anneal_at is not None:
        text = args.anneal_at.strip()
        values["anneal_at"] = [int(t) for t in text.split(",") if t] if text else []
    if "n_classes" not in values:
        raise UsageError("number of classes is required (--k or config file)")
    return meta_opt.TrainConfig.from_dict(values)


def _load_pair(args) -> tuple[np.ndarray, np.ndarray]:
    phi1 = embeddings.load_space(args.phi1)
    phi2 = embeddings.load_space(args.phi2)
    return phi1.matrix, phi2.matrix


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_synth(args) -> int:
    spec = synthetic.SynthSpec(
        n_samples=args.n,
        n_classes=args.k,
        latent_dim=args.latent_dim,
        d1=args.d1,
        d2=args.d2,
        cluster_separation=args.separation,
        noise_sigma=args.noise_sigma,
        spurious=args.spurious,
        seed=args.seed,
        min_probe_acc=args.min_probe_acc,
    )
    data = synthetic.generate(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    phi1 = replace(data.phi1.manifest, labels_path="labels.txt")
    embeddings.save_space(embeddings.EmbeddingSpace(phi1, data.phi1.matrix), out)
    embeddings.save_space(data.phi2, out)
    embeddings.save_labels(data.truth, out / "labels.txt")
    files = {
        "phi1": "phi1.json",
        "phi2": "phi2.json",
        "labels": "labels.txt",
    }
    if data.spurious_labels is not None:
        spur = embeddings.GroundTruthLabels(data.spurious_labels, spec.n_classes)
        embeddings.save_labels(spur, out / "spurious_labels.txt")
        files["spurious_labels"] = "spurious_labels.txt"
    params = {
        "n_samples": spec.n_samples, "n_classes": spec.n_classes,
        "latent_dim": spec.latent_dim, "d1": spec.d1, "d2": spec.d2,
        "cluster_separation": spec.cluster_separation,
        "noise_sigma": spec.noise_sigma, "spurious": spec.spurious,
        "seed": spec.seed, "min_probe_acc": spec.min_probe_acc,
    }
    _write_json(out / "dataset.json", {
        "config": params, "config_hash": _params_hash(params), "files": files,
    })
    print(f"wrote {spec.n_samples} samples x ({spec.d1}+{spec.d2}) dims, "
          f"{spec.n_classes} classes -> {out}")
    return 0


def _cmd_train(args) -> int:
    config = _build_config(args)
    x1, x2 = _load_pair(args)
    result = meta_opt.train_run(x1, x2, config, seed=args.seed)
    meta_opt.save_run(result, args.out)
    print(f"seed {result.seed}: loss={result.objective_trace[-1]:.4f} "
          f"cv_accuracy={result.cv_accuracy:.4f} -> {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    config = _build_config(args)
    x1, x2 = _load_pair(args)
    seeds = list(range(args.seeds))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = meta_opt.run_sweep(x1, x2, config, seeds, jobs=args.jobs, on_error="report")
    failed = 0
    for res in results:
        if isinstance(res, meta_opt.FailedRun):
            failed += 1
            print(f"seed {res.seed}: FAILED ({res.error})", file=sys.stderr)
            continue
        meta_opt.save_run(res, out / f"run-{res.seed:04d}.json")
        print(f"seed {res.seed}: loss={res.objective_trace[-1]:.4f} "
              f"cv_accuracy={res.cv_accuracy:.4f}")
    print(f"{len(seeds) - failed}/{len(seeds)} runs finished -> {out}")
    if failed:
        raise DivergenceError(f"{failed} of {len(seeds)} seeds diverged")
    return 0


def _cmd_aggregate(args) -> int:
    runs = _load_runs(args.runs)
    agg = aggregation.aggregate_runs(runs, top_n=args.top_n)
    params = {"top_n": args.top_n, "n_runs": len(runs)}
    _write_json(args.out, {
        "config": params,
        "config_hash": _params_hash(params),
        "runs_config_hash": _runs_config_hash(runs),
        "reference_seed": int(agg.reference_seed),
        "consensus": [int(v) for v in agg.consensus],
        "votes": [[int(v) for v in row] for row in agg.per_sample_votes],
    })
    print(f"aggregated {len(runs)} runs (reference seed {agg.reference_seed}) -> {args.out}")
    return 0


def _load_predictions(path: str | Path) -> tuple[np.ndarray, str | None]:
    """Hard labels from a run file, an aggregate file, or a plain label file."""
    path = Path(path)
    if path.suffix == ".json":
        obj = json.loads(path.read_text())
        if "consensus" in obj:
            return np.array(obj["consensus"], dtype=np.int64), obj.get("runs_config_hash")
        if "labels" in obj:
            return np.array(obj["labels"], dtype=np.int64), obj.get("config_hash")
        raise UsageError(f"{path} has neither 'labels' nor 'consensus'")
    return embeddings.load_labels(path).labels, None


def _cmd_evaluate(args) -> int:
    pred, source_hash = _load_predictions(args.pred)
    truth = embeddings.load_labels(args.labels)
    acc = evaluation.clustering_accuracy(pred, truth.labels, n_classes=truth.n_classes)
    ari = evaluation.adjusted_rand_index(pred, truth.labels)
    k = max(truth.n_classes, int(pred.max()) + 1)
    counts = np.bincount(pred, minlength=k)
    params = {"pred": str(args.pred), "labels": str(args.labels)}
    _write_json(args.out, {
        "config": params,
        "config_hash": _params_hash(params),
        "source_config_hash": source_hash,
        "acc": acc,
        "ari": ari,
        "per_class_counts": [int(v) for v in counts],
    })
    print(f"acc={acc:.4f} ari={ari:.4f} -> {args.out}")
    return 0


def _cmd_correlate(args) -> int:
    runs = _load_runs(args.runs)
    truth = embeddings.load_labels(args.labels)
    rows = []
    for r in runs:
        acc = evaluation.clustering_accuracy(r.labels, truth.labels, truth.n_classes)
        rows.append((r.seed, r.cv_accuracy, acc))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = ["seed,cv_accuracy,acc"]
    lines += [f"{seed},{cv!r},{acc!r}" for seed, cv, acc in rows]
    lines.append("")
    out.write_text("\n".join(lines))
    cvs = np.array([r[1] for r in rows])
    accs = np.array([r[2] for r in rows])
    if len(rows) > 1 and cvs.std() > 0 and accs.std() > 0:
        corr = float(np.corrcoef(cvs, accs)[0, 1])
        print(f"{len(rows)} runs, pearson(cv_accuracy, acc)={corr:.3f} -> {out}")
    else:
        print(f"{len(rows)} runs -> {out}")
    return 0


def _cmd_reliable(args) -> int:
    runs = _load_runs(args.runs)
    phi1 = embeddings.load_space(args.phi1)
    rel = aggregation.select_reliable(
        runs, phi1, n_per_class=args.nk, n_neighbors=args.n_neigh
    )
    params = {"nk": args.nk, "n_neigh": args.n_neigh, "n_runs": len(runs)}
    _write_json(args.out, {
        "config": params,
        "config_hash": _params_hash(params),
        "runs_config_hash": _runs_config_hash(runs),
        "classes": rel.to_json_obj(),
    })
    total = rel.indices.shape[0]
    print(f"selected {total} samples across {len(rel.classes)} classes -> {args.out}")
    return 0


def _cmd_kmeans(args) -> int:
    space = embeddings.load_space(args.phi1)
    truth = embeddings.load_labels(args.labels).labels if args.labels else None
    result = evaluation.kmeans_baseline(
        space.matrix, args.k, n_runs=args.n_runs, rng=args.seed, truth=truth
    )
    params = {"k": args.k, "n_runs": args.n_runs, "seed": args.seed}
    payload = {
        "config": params,
        "config_hash": _params_hash(params),
        "n_runs": result["n_runs"],
        "inertia": result["inertia"],
        "labels": [int(v) for v in result["labels"]],
    }
    if truth is not None:
        payload.update(
            acc=result["acc"], ari=result["ari"],
            mean_acc=result["mean_acc"], mean_ari=result["mean_ari"],
        )
        print(f"k-means x{args.n_runs}: mean acc={result['mean_acc']:.4f} "
              f"mean ari={result['mean_ari']:.4f} -> {args.out}")
    else:
        print(f"k-means x{args.n_runs}: inertia={result['inertia']:.4f} -> {args.out}")
    _write_json(args.out, payload)
    return 0


# ---------------------------------------------------------------------------
# Parser assembly
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="labelsearch", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth",
                       help="generate a verified synthetic dataset pair")
    p.add_argument("--n", type=int, required=True, help="number of samples")
    p.add_argument("--k", type=int, required=True, help="number of planted classes")
    p.add_argument("--latent-dim", type=int, required=True)
    p.add_argument("--d1", type=int, required=True, help="dimension of the first space")
    p.add_argument("--d2", type=int, required=True, help="dimension of the second space")
    p.add_argument("--separation", type=float, required=True,
                   help="distance between latent class means")
    p.add_argument("--noise-sigma", type=float, required=True,
                   help="within-class latent standard deviation")
    p.add_argument("--spurious", action="store_true",
                   help="plant a second labeling in the first space only")
    p.add_argument("--min-probe-acc", type=float, default=0.99,
                   help="required train accuracy of the verification probes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="run one seeded search")
    p.add_argument("--phi1", required=True, help="manifest of the first space")
    p.add_argument("--phi2", required=True, help="manifest of the second space")
    _add_config_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="run JSON path")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("sweep",
                       help="run many seeds, one run JSON each")
    p.add_argument("--phi1", required=True)
    p.add_argument("--phi2", required=True)
    _add_config_flags(p)
    p.add_argument("--seeds", type=int, required=True, help="run seeds 0..N-1")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("aggregate",
                       help="majority-vote consensus over a sweep directory")
    p.add_argument("--runs", required=True, help="directory of run JSONs")
    p.add_argument("--top-n", type=int, default=None,
                   help="only the best n runs by cv_accuracy vote")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_aggregate)

    p = sub.add_parser("evaluate",
                       help="accuracy and ARI of a labeling against ground truth")
    p.add_argument("--pred", required=True,
                   help="run JSON, aggregate JSON, or newline-delimited labels")
    p.add_argument("--labels", required=True, help="ground-truth label file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("correlate",
                       help="CSV of (seed, cv_accuracy, acc) across a sweep")
    p.add_argument("--runs", required=True, help="directory of run JSONs")
    p.add_argument("--labels", required=True, help="ground-truth label file")
    p.add_argument("--out", required=True, help="CSV path")
    p.set_defaults(func=_cmd_correlate)

    p = sub.add_parser("reliable",
                       help="per-class highest-confidence samples from a sweep")
    p.add_argument("--runs", required=True)
    p.add_argument("--phi1", required=True, help="manifest of the first space")
    p.add_argument("--nk", type=int, required=True, help="samples kept per class")
    p.add_argument("--n-neigh", type=int, default=aggregation.DEFAULT_N_NEIGHBORS,
                   help="neighborhood size for the agreement count")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_reliable)

    p = sub.add_parser("kmeans",
                       help="k-means baseline on one embedding space")
    p.add_argument("--phi1", required=True, help="manifest of the space to cluster")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n-runs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--labels", default=None, help="optional ground truth for metrics")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_kmeans)

    return parser


def main(argv=None) -> int:
    level = os.environ.get("LABELSEARCH_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (DivergenceError, DegenerateParameterError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3
    except (LabelSearchError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
