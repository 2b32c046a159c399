"""Combine many seeded runs into one labeling, and mine its safest samples.

Runs from different seeds each invent their own class numbering. We pick the
run with the best cross-validation accuracy as the frame of reference, match
every other run's classes to it, and take per-sample majority votes. On top
of the consensus, reliable-sample selection ranks each class's members by how
unanimously the runs and the embedding neighborhood agree with the consensus,
and keeps the top slice per class.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import InputError
from .evaluation import confusion_matrix, hungarian_match

DEFAULT_N_NEIGHBORS = 500
_KNN_CHUNK = 512


@dataclass
class AlignedRuns:
    """Hard labelings of all runs, permuted into the reference run's classes.

    Behaves as a sequence of label vectors (input order preserved); the
    reference run's own labeling is unchanged by construction.
    """

    labelings: list[np.ndarray]
    reference_index: int
    seeds: list[int]
    cv_accuracies: list[float]
    n_classes: int

    def __len__(self) -> int:
        return len(self.labelings)

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter(self.labelings)

    def __getitem__(self, i: int) -> np.ndarray:
        return self.labelings[i]

    @property
    def reference_seed(self) -> int:
        return self.seeds[self.reference_index]


@dataclass
class AggregateResult:
    """Majority-vote consensus with its vote counts and frame of reference."""

    consensus: np.ndarray
    per_sample_votes: np.ndarray
    reference_seed: int


def align_labelings(runs: Sequence) -> AlignedRuns:
    """Match every run's classes to the highest-cv_accuracy run's classes.

    ``runs`` are run results (anything with ``labels``, ``cv_accuracy``,
    ``seed``, and ``config.n_classes``). Ties on cv_accuracy go to the lower
    seed. Each labeling is relabeled by the permutation maximizing its
    agreement with the reference.
    """
    if not runs:
        raise InputError("need at least one run to align")
    k = runs[0].config.n_classes
    n = runs[0].labels.shape[0]
    for r in runs:
        if r.config.n_classes != k:
            raise InputError(f"seed {r.seed} has {r.config.n_classes} classes, expected {k}")
        if r.labels.shape[0] != n:
            raise InputError(f"seed {r.seed} labeled {r.labels.shape[0]} samples, expected {n}")
    ref = min(range(len(runs)), key=lambda i: (-runs[i].cv_accuracy, runs[i].seed))
    ref_labels = np.asarray(runs[ref].labels, dtype=np.int64)
    aligned = []
    for r in runs:
        counts = confusion_matrix(r.labels, ref_labels, n_classes=k)
        perm = hungarian_match(-counts.astype(np.float64))
        aligned.append(perm[np.asarray(r.labels, dtype=np.int64)])
    return AlignedRuns(
        labelings=aligned,
        reference_index=ref,
        seeds=[int(r.seed) for r in runs],
        cv_accuracies=[float(r.cv_accuracy) for r in runs],
        n_classes=k,
    )


def majority_vote(aligned: AlignedRuns, top_n: int | None = None) -> AggregateResult:
    """Per-sample plurality over aligned runs.

    With ``top_n`` set, only the top_n runs by cv_accuracy vote (the
    reference is always among them). A tied vote goes to the reference run's
    prediction when it is one of the tied classes, else to the lowest tied
    class index.
    """
    order = sorted(
        range(len(aligned)),
        key=lambda i: (-aligned.cv_accuracies[i], aligned.seeds[i]),
    )
    if top_n is not None:
        if top_n < 1:
            raise InputError(f"top_n must be >= 1, got {top_n}")
        order = order[:top_n]
    n = aligned.labelings[0].shape[0]
    k = aligned.n_classes
    votes = np.zeros((n, k), dtype=np.int64)
    rows = np.arange(n)
    for i in order:
        votes[rows, aligned.labelings[i]] += 1
    consensus = votes.argmax(axis=1)
    top = votes[rows, consensus]
    tied = (votes == top[:, None]).sum(axis=1) > 1
    if tied.any():
        ref_labels = aligned.labelings[aligned.reference_index]
        ref_is_top = votes[rows, ref_labels] == top
        use_ref = tied & ref_is_top
        consensus[use_ref] = ref_labels[use_ref]
    return AggregateResult(
        consensus=consensus,
        per_sample_votes=votes,
        reference_seed=aligned.reference_seed,
    )


def aggregate_runs(runs: Sequence, top_n: int | None = None) -> AggregateResult:
    """Align then vote, in one call."""
    return majority_vote(align_labelings(runs), top_n=top_n)


# ---------------------------------------------------------------------------
# Reliable samples
# ---------------------------------------------------------------------------


@dataclass
class ReliableClass:
    """Selected members of one consensus class, best-agreement first."""

    label: int
    indices: np.ndarray
    a_nn: np.ndarray
    a_tau: np.ndarray


@dataclass
class ReliableSet:
    classes: list[ReliableClass]
    n_per_class: int
    n_neighbors: int

    @property
    def indices(self) -> np.ndarray:
        """All selected sample indices, concatenated over classes."""
        parts = [c.indices for c in self.classes]
        return np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)

    @property
    def labels(self) -> np.ndarray:
        parts = [np.full(c.indices.shape[0], c.label, dtype=np.int64) for c in self.classes]
        return np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)

    def to_json_obj(self) -> list[dict]:
        return [
            {
                "class": c.label,
                "indices": [int(v) for v in c.indices],
                "a_nn": [int(v) for v in c.a_nn],
                "a_tau": [int(v) for v in c.a_tau],
            }
            for c in self.classes
        ]


def _neighbor_agreement(x: np.ndarray, consensus: np.ndarray, n_neighbors: int) -> np.ndarray:
    """For each sample, how many of its nearest neighbors share its consensus
    label. Cosine similarity on length-normalized rows, self excluded,
    similarity ties broken toward the lower index."""
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if (norms < 1e-12).any():
        raise InputError(f"row {int(np.argmin(norms))} has near-zero norm")
    unit = x / norms
    n = unit.shape[0]
    a_nn = np.empty(n, dtype=np.int64)
    for start in range(0, n, _KNN_CHUNK):
        stop = min(start + _KNN_CHUNK, n)
        sims = unit[start:stop] @ unit.T
        sims[np.arange(stop - start), np.arange(start, stop)] = -np.inf
        order = np.argsort(-sims, axis=1, kind="stable")[:, :n_neighbors]
        same = consensus[order] == consensus[start:stop, None]
        a_nn[start:stop] = same.sum(axis=1)
    return a_nn


def select_reliable(
    runs: Sequence,
    phi1,
    n_per_class: int,
    n_neighbors: int = DEFAULT_N_NEIGHBORS,
) -> ReliableSet:
    """Pick the per-class samples the ensemble is most confident about.

    For every sample the consensus label comes with two agreement counts:
    a_tau, the number of runs voting for it, and a_nn, the number of its
    nearest neighbors in the first embedding space sharing it. Each class's
    members are sorted by (a_nn, a_tau) descending — index breaks ties — and
    the top ``n_per_class`` survive. Classes with fewer members (or none)
    yield what they have, with a warning.
    """
    x = np.asarray(getattr(phi1, "matrix", phi1), dtype=np.float64)
    n = x.shape[0]
    if not 0 < n_neighbors < n:
        raise InputError(f"need 0 < n_neighbors < {n}, got {n_neighbors}")
    if n_per_class < 1:
        raise InputError(f"n_per_class must be >= 1, got {n_per_class}")
    aligned = align_labelings(runs)
    if aligned.labelings[0].shape[0] != n:
        raise InputError(
            f"runs labeled {aligned.labelings[0].shape[0]} samples but phi1 has {n} rows"
        )
    agg = majority_vote(aligned)
    consensus = agg.consensus
    stacked = np.stack(aligned.labelings)
    a_tau = (stacked == consensus[None, :]).sum(axis=0)
    a_nn = _neighbor_agreement(x, consensus, n_neighbors)

    classes = []
    for label in range(aligned.n_classes):
        members = np.flatnonzero(consensus == label)
        if members.size == 0:
            warnings.warn(f"class {label} has no consensus members; nothing selected")
            classes.append(
                ReliableClass(
                    label=label,
                    indices=np.empty(0, dtype=np.int64),
                    a_nn=np.empty(0, dtype=np.int64),
                    a_tau=np.empty(0, dtype=np.int64),
                )
            )
            continue
        if members.size < n_per_class:
            warnings.warn(
                f"class {label} has only {members.size} members, fewer than the "
                f"{n_per_class} requested"
            )
        order = np.lexsort((members, -a_tau[members], -a_nn[members]))
        chosen = members[order][:n_per_class]
        classes.append(
            ReliableClass(
                label=label,
                indices=chosen,
                a_nn=a_nn[chosen],
                a_tau=a_tau[chosen],
            )
        )
    return ReliableSet(classes=classes, n_per_class=n_per_class, n_neighbors=n_neighbors)
