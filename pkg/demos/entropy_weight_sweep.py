"""
What the entropy bonus buys
===========================

The outer objective pays a bonus for keeping the average predicted label
distribution spread out. This script turns that bonus off, watches the
search collapse most classes, then sweeps it across positive values to show
the result barely depends on the exact weight.
"""

import numpy as np

from labelsearch import (
    SynthSpec,
    TrainConfig,
    aggregate_runs,
    clustering_accuracy,
    generate,
    run_sweep,
)
from dataclasses import replace

##############################################################################
# A noisy fixture
# ---------------
#
# Wider clusters than the easy case: a supervised probe sits around 0.9
# here, and the search has real local optima to fall into. That makes the
# role of the regularizer visible.

spec = SynthSpec(
    n_samples=800,
    n_classes=4,
    latent_dim=6,
    d1=12,
    d2=12,
    cluster_separation=6.0,
    noise_sigma=1.6,
    seed=29,
    min_probe_acc=0.85,
)
phi1, phi2, truth = generate(spec)

base = TrainConfig(
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


def effective_classes(labels, k, floor=0.01):
    """Classes that still hold at least 1% of the samples."""
    counts = np.bincount(labels, minlength=k)
    return int((counts >= floor * labels.size).sum())


##############################################################################
# Sweep the weight
# ----------------
#
# With the bonus off (weight 0) the cheapest way to make the probe's job
# easy is to stop using classes: constant labels are trivially predictable
# from anywhere. Any solidly positive weight forestalls that, and the
# recovered labeling is nearly the same across a 10x range of weights.

seeds = range(5)
print("weight   runs collapsed (<=2 live classes)   consensus ACC")
for eta in (0.0, 1.0, 2.0, 5.0, 10.0):
    runs = run_sweep(phi1, phi2, replace(base, eta=eta), seeds=seeds, jobs=2)
    collapsed = sum(effective_classes(r.labels, 4) <= 2 for r in runs)
    acc = clustering_accuracy(aggregate_runs(runs).consensus, truth.labels)
    print(f"{eta:6.1f}   {collapsed:3d} / {len(runs)}"
          f"{'':26s}   {acc:.3f}")
