"""
Ignoring a shortcut only one space can see
==========================================

Single-space clustering trusts whatever directions carry variance. This
script plants a decoy: a strong, linearly separable direction mixed into
the first embedding space that has nothing to do with the real classes and
leaves no trace in the second space. K-means degrades. The cross-space
search does not even slow down, because a labeling built on the decoy
cannot be predicted from the second space.
"""

import numpy as np
from dataclasses import replace

from labelsearch import (
    SynthSpec,
    TrainConfig,
    clustering_accuracy,
    generate,
    kmeans_baseline,
    normalize_rows,
    orthonormalize,
    run_sweep,
)
from labelsearch.meta_opt import outer_value, sample_splits

##############################################################################
# The trap
# --------
#
# Same four planted classes as the other demos, plus a decoy labeling that
# is cleanly separable in the first space and near chance in the second.

spec = SynthSpec(
    n_samples=800,
    n_classes=4,
    latent_dim=6,
    d1=12,
    d2=12,
    cluster_separation=6.0,
    noise_sigma=1.0,
    seed=11,
    spurious=True,
)
data = generate(spec)
phi1, phi2, truth = data
decoy = data.spurious_labels

##############################################################################
# K-means walks in
# ----------------
#
# On the clean version of this fixture k-means scores around 0.98 (see
# recover_planted_classes.py). With the decoy direction inflating the
# variance along a class-irrelevant axis, its partitions start tracking
# the wrong structure.

km = kmeans_baseline(phi1.matrix, n_clusters=4, n_runs=5, rng=0, truth=truth.labels)
print("k-means on the first space, accuracy vs planted per run:")
print("  " + "  ".join(f"{a:.3f}" for a in km["acc"]))

##############################################################################
# The search does not
# -------------------
#
# Any labeling that leans on the decoy trains a probe in the second space
# that generalizes no better than chance, so the outer objective never
# rewards it.

config = TrainConfig(
    n_classes=4,
    eta=10.0,
    gamma=0.3,
    alpha=0.01,
    iters=200,
    inner_steps=50,
    inner_lr=0.01,
    subset_size=240,
    train_frac=0.8,
    n_subsets=4,
    anneal_at=(80, 140),
    anneal_factor=10.0,
    cv_folds=8,
)
runs = run_sweep(phi1, phi2, config, seeds=range(6), jobs=2)
print("\nsearch results:")
print("  seed   vs planted   vs decoy")
for run in runs:
    planted = clustering_accuracy(run.labels, truth.labels)
    shortcut = clustering_accuracy(run.labels, decoy)
    print(f"  {run.seed:4d}   {planted:10.3f}   {shortcut:8.3f}")

##############################################################################
# Why: the objective itself orders the two labelings
# --------------------------------------------------
#
# Point an encoder straight at each labeling's class means and score both
# with the cross-space objective (entropy bonus off, so this is pure
# held-out cross-entropy). The decoy costs visibly more, which is all the
# outer optimization needs to steer away from it.

x1_hat = normalize_rows(phi1).matrix


def aimed_at(labels):
    means = np.stack([x1_hat[labels == c].mean(axis=0) for c in range(4)])
    return orthonormalize(means)


splits = sample_splits(np.random.default_rng(0), spec.n_samples, config)
ce_only = replace(config, eta=0.0)
for name, labels in (("planted", truth.labels), ("decoy", decoy)):
    ce = outer_value(aimed_at(labels), x1_hat, phi2.matrix, splits, ce_only)
    print(f"held-out cross-entropy of an encoder aimed at the {name} labeling: {ce:.3f}")
