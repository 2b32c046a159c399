"""Metrics for found labelings.

Clustering accuracy (best-permutation agreement via the Hungarian method),
adjusted Rand index, the cross-validation accuracy used to rank runs without
ground truth, and a from-scratch k-means baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ConfigurationError, InputError
from .inner_solver import fit_probe
from .task_encoder import encode


def _int_labels(x, name: str) -> np.ndarray:
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise InputError(f"{name} must be a 1-D label vector, got shape {arr.shape}")
    return arr.astype(np.int64)


def confusion_matrix(pred, truth, n_classes: int | None = None) -> np.ndarray:
    """Counts[i, j] = number of samples labeled i by ``pred`` and j by ``truth``."""
    p = _int_labels(pred, "pred")
    t = _int_labels(truth, "truth")
    if p.shape != t.shape:
        raise InputError(f"length mismatch: pred has {p.size}, truth has {t.size}")
    if p.size and (p.min() < 0 or t.min() < 0):
        raise InputError("labels must be non-negative")
    k = int(max(p.max(initial=-1), t.max(initial=-1)) + 1)
    if n_classes is not None:
        if k > n_classes:
            raise InputError(f"labels exceed the declared {n_classes} classes")
        k = n_classes
    counts = np.bincount(p * k + t, minlength=k * k).reshape(k, k)
    return counts


def hungarian_match(cost: np.ndarray) -> np.ndarray:
    """Permutation ``perm`` minimizing sum(cost[i, perm[i]])."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise InputError(f"cost matrix must be square, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise InputError("cost matrix must be finite")
    _, cols = linear_sum_assignment(cost)
    return cols


def clustering_accuracy(pred, truth, n_classes: int | None = None) -> float:
    """Best agreement with truth over all relabelings of ``pred``."""
    counts = confusion_matrix(pred, truth, n_classes)
    perm = hungarian_match(-counts.astype(np.float64))
    matched = counts[np.arange(counts.shape[0]), perm].sum()
    return float(matched) / float(counts.sum())


def adjusted_rand_index(a, b) -> float:
    """Pair-counting partition agreement, corrected for chance.

    Computed from the contingency table in exact integer arithmetic; 1.0 for
    identical partitions, around 0 for independent ones.
    """
    x = _int_labels(a, "first labeling")
    y = _int_labels(b, "second labeling")
    if x.shape != y.shape:
        raise InputError(f"length mismatch: {x.size} vs {y.size}")
    n = x.size
    if n < 2:
        raise InputError("ARI needs at least two samples")
    _, xi = np.unique(x, return_inverse=True)
    _, yi = np.unique(y, return_inverse=True)
    kx, ky = int(xi.max()) + 1, int(yi.max()) + 1
    table = np.bincount(xi * ky + yi, minlength=kx * ky).reshape(kx, ky)

    def comb2(v) -> int:
        return int(v) * (int(v) - 1) // 2

    sum_cells = sum(comb2(c) for c in table.ravel())
    sum_rows = sum(comb2(c) for c in table.sum(axis=1))
    sum_cols = sum(comb2(c) for c in table.sum(axis=0))
    total = comb2(n)
    expected = sum_rows * sum_cols / total
    max_index = (sum_rows + sum_cols) / 2.0
    if max_index == expected:
        return 1.0
    return (sum_cells - expected) / (max_index - expected)


def cross_validation_accuracy(
    encoder,
    phi1_hat: np.ndarray,
    phi2: np.ndarray,
    config,
    n_folds: int = 20,
    rng: int | np.random.Generator | None = None,
) -> float:
    """How well the encoder's own labels generalize across the second space.

    Draws ``n_folds`` fresh train/test splits, fits a probe to the encoder's
    train labels each time, and averages the hard-label agreement between the
    probe and the encoder on the held-out part. Needs only the fit-related
    fields of the config (inner_steps, inner_lr, subset_size, train_frac).
    """
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    x1 = np.asarray(phi1_hat, dtype=np.float64)
    x2 = np.asarray(phi2, dtype=np.float64)
    labeling = encode(encoder, x1)
    hard = labeling.hard
    n = x1.shape[0]
    size = min(int(config.subset_size), n) if config.subset_size else n
    if size < 2:
        raise ConfigurationError("cross-validation needs at least 2 samples per fold")
    n_tr = int(round(size * config.train_frac))
    n_tr = min(max(n_tr, 1), size - 1)
    agree = []
    for _ in range(n_folds):
        idx = gen.choice(n, size=size, replace=False)
        tr, te = idx[:n_tr], idx[n_tr:]
        traj = fit_probe(x2[tr], labeling.probs[tr], config.inner_steps, config.inner_lr)
        pred = traj.final.predict(x2[te])
        agree.append(float(np.mean(pred == hard[te])))
    return float(np.mean(agree))


# ---------------------------------------------------------------------------
# k-means baseline
# ---------------------------------------------------------------------------


@dataclass
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    inertia: float
    n_iter: int


def _sq_dists(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d = (x**2).sum(axis=1)[:, None] + (centers**2).sum(axis=1)[None, :] - 2.0 * x @ centers.T
    return np.maximum(d, 0.0)


def kmeans(
    x: np.ndarray,
    n_clusters: int,
    rng: int | np.random.Generator | None = None,
    max_iter: int = 300,
) -> KMeansResult:
    """Lloyd's algorithm with distance-weighted (k-means++) seeding.

    Stops when the assignment stops changing or after ``max_iter`` sweeps.
    A cluster that loses all members is re-seeded at the point currently
    farthest from its own center.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n_clusters < 1 or n_clusters > n:
        raise InputError(f"need 1 <= n_clusters <= {n}, got {n_clusters}")
    if max_iter < 1:
        raise InputError(f"max_iter must be >= 1, got {max_iter}")
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)

    centers = np.empty((n_clusters, x.shape[1]))
    centers[0] = x[gen.integers(n)]
    closest = _sq_dists(x, centers[:1])[:, 0]
    for j in range(1, n_clusters):
        total = closest.sum()
        if total > 0.0:
            pick = gen.choice(n, p=closest / total)
        else:
            pick = gen.integers(n)
        centers[j] = x[pick]
        closest = np.minimum(closest, _sq_dists(x, centers[j : j + 1])[:, 0])

    labels = np.full(n, -1, dtype=np.int64)
    for sweep in range(1, max_iter + 1):
        dists = _sq_dists(x, centers)
        new_labels = dists.argmin(axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        assigned = dists[np.arange(n), labels]
        taken: set[int] = set()
        for j in range(n_clusters):
            members = labels == j
            if members.any():
                centers[j] = x[members].mean(axis=0)
            else:
                order = np.argsort(-assigned, kind="stable")
                far = next(int(i) for i in order if int(i) not in taken)
                taken.add(far)
                centers[j] = x[far]
    inertia = float(_sq_dists(x, centers)[np.arange(n), labels].sum())
    return KMeansResult(labels=labels, centers=centers, inertia=inertia, n_iter=sweep)


def kmeans_baseline(
    x: np.ndarray,
    n_clusters: int,
    n_runs: int = 1,
    rng: int | np.random.Generator | None = None,
    truth=None,
) -> dict:
    """Repeated k-means; reports the lowest-inertia labeling and, when ground
    truth is supplied, per-run and mean accuracy/ARI across all runs."""
    if n_runs < 1:
        raise InputError(f"n_runs must be >= 1, got {n_runs}")
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    runs = [kmeans(x, n_clusters, gen) for _ in range(n_runs)]
    best = min(range(n_runs), key=lambda i: runs[i].inertia)
    out = {
        "n_runs": n_runs,
        "labels": runs[best].labels,
        "inertia": runs[best].inertia,
    }
    if truth is not None:
        truth = _int_labels(truth, "truth")
        accs = [clustering_accuracy(r.labels, truth) for r in runs]
        aris = [adjusted_rand_index(r.labels, truth) for r in runs]
        out.update(
            acc=accs, ari=aris,
            mean_acc=float(np.mean(accs)), mean_ari=float(np.mean(aris)),
        )
    return out
