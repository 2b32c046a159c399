"""Tests for clustering metrics, the probe cross-validation score, k-means."""

import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose

from labelsearch import (
    InputError,
    TrainConfig,
    adjusted_rand_index,
    clustering_accuracy,
    confusion_matrix,
    cross_validation_accuracy,
    hungarian_match,
    kmeans,
    kmeans_baseline,
    ortho_rand,
)


def acc_oracle(pred, truth, k):
    """Best agreement over every permutation of predicted class ids."""
    best = 0
    for perm in itertools.permutations(range(k)):
        mapped = np.array(perm)[pred]
        best = max(best, int(np.sum(mapped == truth)))
    return best / len(truth)


def ari_oracle(a, b):
    """Pair-counting definition, O(N^2): agreement over all sample pairs."""
    n = len(a)
    ss = sd = ds = dd = 0
    for i in range(n):
        for j in range(i + 1, n):
            same_a, same_b = a[i] == a[j], b[i] == b[j]
            if same_a and same_b:
                ss += 1
            elif same_a:
                sd += 1
            elif same_b:
                ds += 1
            else:
                dd += 1
    num = 2.0 * (ss * dd - sd * ds)
    den = (ss + sd) * (sd + dd) + (ss + ds) * (ds + dd)
    return num / den if den else 1.0


class TestConfusionMatrix:
    def test_counts_by_hand(self):
        pred = np.array([0, 0, 1, 1, 2])
        truth = np.array([0, 1, 1, 1, 0])
        cm = confusion_matrix(pred, truth, n_classes=3)
        expect = np.array([[1, 1, 0], [0, 2, 0], [1, 0, 0]])
        assert np.array_equal(cm, expect)

    def test_total_preserved(self):
        rng = np.random.default_rng(0)
        pred = rng.integers(0, 6, size=500)
        truth = rng.integers(0, 6, size=500)
        assert confusion_matrix(pred, truth).sum() == 500


class TestHungarian:
    def test_matches_exhaustive_search(self):
        """10^3 random costs, K <= 6; compares optimal cost values."""
        rng = np.random.default_rng(1)
        for _ in range(1000):
            k = int(rng.integers(2, 7))
            cost = rng.normal(size=(k, k))
            perm = hungarian_match(cost)
            got = cost[np.arange(k), perm].sum()
            best = min(
                sum(cost[i, p[i]] for i in range(k))
                for p in itertools.permutations(range(k))
            )
            assert_allclose(got, best, atol=1e-12)

    def test_returns_permutation(self):
        rng = np.random.default_rng(2)
        cost = rng.normal(size=(8, 8))
        perm = hungarian_match(cost)
        assert sorted(perm.tolist()) == list(range(8))

    def test_rejects_bad_input(self):
        with pytest.raises(InputError):
            hungarian_match(np.ones((3, 4)))
        with pytest.raises(InputError):
            hungarian_match(np.array([[1.0, np.inf], [0.0, 1.0]]))


class TestClusteringAccuracy:
    def test_matches_brute_force(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            k = int(rng.integers(2, 6))
            n = int(rng.integers(5, 40))
            pred = rng.integers(0, k, size=n)
            truth = rng.integers(0, k, size=n)
            assert_allclose(
                clustering_accuracy(pred, truth),
                acc_oracle(pred, truth, k),
                atol=1e-12,
            )

    def test_label_permutation_invariance(self):
        rng = np.random.default_rng(4)
        truth = rng.integers(0, 4, size=100)
        pred = rng.integers(0, 4, size=100)
        base = clustering_accuracy(pred, truth)
        for perm in itertools.permutations(range(4)):
            assert clustering_accuracy(np.array(perm)[pred], truth) == base

    def test_perfect_and_worst_case(self):
        truth = np.array([0, 1, 2, 0, 1, 2])
        assert clustering_accuracy(truth, truth) == 1.0
        shifted = (truth + 1) % 3
        assert clustering_accuracy(shifted, truth) == 1.0  # relabeling only


class TestAdjustedRandIndex:
    def test_matches_pair_counting_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(60):
            n = int(rng.integers(5, 40))
            a = rng.integers(0, 4, size=n)
            b = rng.integers(0, 4, size=n)
            assert_allclose(adjusted_rand_index(a, b), ari_oracle(a, b), atol=1e-12)

    def test_identical_partitions(self):
        a = np.array([0, 0, 1, 2, 2, 1])
        assert adjusted_rand_index(a, a) == 1.0

    def test_chance_level_near_zero(self):
        rng = np.random.default_rng(6)
        vals = [
            adjusted_rand_index(rng.integers(0, 5, 300), rng.integers(0, 5, 300))
            for _ in range(30)
        ]
        assert abs(float(np.mean(vals))) < 0.01

    def test_too_small_input(self):
        with pytest.raises(InputError):
            adjusted_rand_index(np.array([0]), np.array([0]))


class TestCrossValidation:
    def test_chance_level_for_random_structure(self):
        """A random encoder on random data scores near 1/K."""
        rng = np.random.default_rng(7)
        n, k, d = 300, 4, 10
        x1 = rng.normal(size=(n, d))
        x1 /= np.linalg.norm(x1, axis=1, keepdims=True)
        x2 = rng.normal(size=(n, d))
        enc = ortho_rand(k, d, rng, gamma=1.0)
        cfg = TrainConfig(
            n_classes=k, gamma=1.0, inner_steps=30, inner_lr=0.1,
            subset_size=200, train_frac=0.8, n_subsets=2, cv_folds=6,
        )
        score = cross_validation_accuracy(enc, x1, x2, cfg, n_folds=6,
                                          rng=np.random.default_rng(8))
        assert 0.05 < score < 0.6

    def test_high_for_planted_structure(self):
        """When the encoder labels match real clusters in both views."""
        rng = np.random.default_rng(9)
        k, per, d = 3, 60, 8
        centers1 = np.eye(k, d) * 6
        centers2 = rng.normal(size=(k, d)) * 6
        labels = np.repeat(np.arange(k), per)
        x1 = centers1[labels] + 0.3 * rng.normal(size=(k * per, d))
        x1 /= np.linalg.norm(x1, axis=1, keepdims=True)
        x2 = centers2[labels] + 0.3 * rng.normal(size=(k * per, d))
        from labelsearch.task_encoder import TaskEncoder, orthonormalize

        means = np.stack([x1[labels == c].mean(axis=0) for c in range(k)])
        enc = TaskEncoder(m=orthonormalize(means), gamma=0.1)
        cfg = TrainConfig(
            n_classes=k, gamma=0.1, inner_steps=100, inner_lr=0.5,
            subset_size=150, train_frac=0.8, n_subsets=2, cv_folds=6,
        )
        score = cross_validation_accuracy(enc, x1, x2, cfg, n_folds=6,
                                          rng=np.random.default_rng(10))
        assert score > 0.9

    def test_deterministic_given_rng_seed(self):
        rng = np.random.default_rng(11)
        x1 = rng.normal(size=(100, 6))
        x1 /= np.linalg.norm(x1, axis=1, keepdims=True)
        x2 = rng.normal(size=(100, 6))
        enc = ortho_rand(3, 6, rng)
        cfg = TrainConfig(
            n_classes=3, inner_steps=20, inner_lr=0.1,
            subset_size=80, train_frac=0.8, n_subsets=1, cv_folds=4,
        )
        a = cross_validation_accuracy(enc, x1, x2, cfg, n_folds=4,
                                      rng=np.random.default_rng(1))
        b = cross_validation_accuracy(enc, x1, x2, cfg, n_folds=4,
                                      rng=np.random.default_rng(1))
        assert a == b


class TestKMeans:
    def test_recovers_tight_blobs(self):
        rng = np.random.default_rng(12)
        centers = np.array([[8.0, 0.0], [0.0, 8.0], [-8.0, -8.0]])
        labels = np.repeat(np.arange(3), 50)
        x = centers[labels] + 0.2 * rng.normal(size=(150, 2))
        result = kmeans(x, 3, rng=np.random.default_rng(0))
        assert clustering_accuracy(result.labels, labels) == 1.0

    def test_k_equals_n_gives_zero_inertia(self):
        rng = np.random.default_rng(13)
        x = rng.normal(size=(12, 3))
        result = kmeans(x, 12, rng=np.random.default_rng(0))
        assert_allclose(result.inertia, 0.0, atol=1e-20)

    def test_deterministic_for_fixed_seed(self):
        rng = np.random.default_rng(14)
        x = rng.normal(size=(200, 4))
        a = kmeans(x, 5, rng=np.random.default_rng(3))
        b = kmeans(x, 5, rng=np.random.default_rng(3))
        assert np.array_equal(a.labels, b.labels)
        assert_allclose(a.centers, b.centers, atol=0)
        assert a.inertia == b.inertia

    def test_inertia_matches_assignment(self):
        rng = np.random.default_rng(15)
        x = rng.normal(size=(100, 3))
        result = kmeans(x, 4, rng=np.random.default_rng(1))
        manual = float(np.sum((x - result.centers[result.labels]) ** 2))
        assert_allclose(result.inertia, manual, rtol=1e-12)

    def test_rejects_bad_k(self):
        x = np.ones((5, 2))
        with pytest.raises(InputError):
            kmeans(x, 0, rng=np.random.default_rng(0))
        with pytest.raises(InputError):
            kmeans(x, 6, rng=np.random.default_rng(0))

    def test_baseline_reports_best_of_runs(self):
        rng = np.random.default_rng(16)
        centers = np.array([[6.0, 0.0], [0.0, 6.0], [-6.0, -6.0]])
        labels = np.repeat(np.arange(3), 40)
        x = centers[labels] + 0.3 * rng.normal(size=(120, 2))
        report = kmeans_baseline(x, 3, n_runs=4, rng=np.random.default_rng(2),
                                 truth=labels)
        assert report["n_runs"] == 4
        assert len(report["acc"]) == 4 and len(report["ari"]) == 4
        assert report["mean_acc"] > 0.99 and report["mean_ari"] > 0.99
        # the reported labeling is consistent with its inertia
        manual = kmeans(x, 3, rng=np.random.default_rng(2))
        assert report["inertia"] <= manual.inertia + 1e-9
