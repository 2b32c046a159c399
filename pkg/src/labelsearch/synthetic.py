"""Paired synthetic embedding spaces with a planted labeling.

The two spaces are different views of the same latent cluster structure:
view one is a random linear map of the latent points, view two a random
linear map of an invertibly warped copy. The planted classes stay linearly
separable in both views, which is exactly the structure the encoder search
is built to find. Optionally a second, spurious labeling is painted into
view one only — separable there, chance-level in view two — to give the
search something tempting to reject.

Every generated pair is verified on the spot by fitting linear probes; a
draw that misses the requested separability is retried with a fresh
seed-derived draw a few times before giving up. Matrices are rounded to
32-bit float values so that saving and reloading reproduces them bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .embeddings import EmbeddingManifest, EmbeddingSpace, GroundTruthLabels
from .errors import ConfigurationError, GenerationError
from .inner_solver import fit_probe
from .task_encoder import orthonormalize

MAX_ATTEMPTS = 5
_VERIFY_STEPS = 400
_VERIFY_LR = 2.0


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for one dataset pair.

    ``cluster_separation`` is the distance between latent class means,
    ``noise_sigma`` the within-class standard deviation per latent
    coordinate. ``min_probe_acc`` is the training accuracy both verification
    probes must reach on the planted labels; lower it deliberately to accept
    noisy, harder fixtures.
    """

    n_samples: int
    n_classes: int
    latent_dim: int
    d1: int
    d2: int
    cluster_separation: float
    noise_sigma: float
    spurious: bool = False
    seed: int = 0
    min_probe_acc: float = 0.99

    def __post_init__(self):
        if self.n_classes < 2:
            raise ConfigurationError(f"need at least 2 classes, got {self.n_classes}")
        if self.n_classes > min(self.d1, self.d2):
            raise ConfigurationError(
                f"need n_classes <= min(d1, d2), got {self.n_classes} > "
                f"min({self.d1}, {self.d2})"
            )
        if self.latent_dim < self.n_classes:
            raise ConfigurationError(
                f"latent_dim {self.latent_dim} cannot hold {self.n_classes} "
                "separated class means"
            )
        if self.n_samples < self.n_classes:
            raise ConfigurationError("need at least one sample per class")
        if not self.cluster_separation > 0:
            raise ConfigurationError("cluster_separation must be positive")
        if self.noise_sigma < 0:
            raise ConfigurationError("noise_sigma must be non-negative")
        if not 0.0 < self.min_probe_acc <= 1.0:
            raise ConfigurationError("min_probe_acc must be in (0, 1]")


@dataclass(frozen=True)
class SyntheticDataset:
    """Generated pair plus the planted (and any spurious) labelings.

    Unpacks as the triple ``phi1, phi2, truth``; the spurious labeling, when
    present, rides along as an extra attribute.
    """

    phi1: EmbeddingSpace
    phi2: EmbeddingSpace
    truth: GroundTruthLabels
    spurious_labels: np.ndarray | None = None

    def __iter__(self) -> Iterator:
        return iter((self.phi1, self.phi2, self.truth))


def _probe_train_accuracy(x: np.ndarray, labels: np.ndarray, k: int) -> float:
    """Training accuracy of a probe fit to one-hot labels on scaled features."""
    scale = float(np.sqrt((x**2).mean()))
    xs = x / max(scale, 1e-12)
    onehot = np.eye(k)[labels]
    traj = fit_probe(xs, onehot, _VERIFY_STEPS, _VERIFY_LR)
    return float(np.mean(traj.final.predict(xs) == labels))


def _probe_holdout_accuracy(x: np.ndarray, labels: np.ndarray, k: int) -> float:
    """Accuracy on the odd half of a probe fit on the even half."""
    scale = float(np.sqrt((x**2).mean()))
    xs = x / max(scale, 1e-12)
    onehot = np.eye(k)[labels]
    traj = fit_probe(xs[0::2], onehot[0::2], _VERIFY_STEPS, _VERIFY_LR)
    return float(np.mean(traj.final.predict(xs[1::2]) == labels[1::2]))


def _f32_exact(x: np.ndarray) -> np.ndarray:
    """Round to the nearest 32-bit float values (kept as float64 in memory),
    so the on-disk representation reproduces the matrix exactly."""
    return x.astype("<f4").astype(np.float64)


def _draw(spec: SynthSpec, rng: np.random.Generator):
    n, k = spec.n_samples, spec.n_classes
    # balanced planted classes, shuffled
    labels = rng.permutation(np.repeat(np.arange(k), -(-n // k))[:n]).astype(np.int64)

    # latent blobs on scaled orthonormal directions: pairwise mean distance
    # equals cluster_separation exactly
    means = orthonormalize(rng.standard_normal((k, spec.latent_dim)))
    means *= spec.cluster_separation / np.sqrt(2.0)
    z = means[labels] + spec.noise_sigma * rng.standard_normal((n, spec.latent_dim))

    # view one: random linear map of the latent points; the view noise has a
    # common bias component so features sit in a narrow cone off the origin,
    # the way encoder activations do
    a1 = rng.standard_normal((spec.d1, spec.latent_dim)) / np.sqrt(spec.latent_dim)
    ambient = 0.1 * spec.noise_sigma
    bias1 = rng.standard_normal(spec.d1)
    bias1 *= spec.cluster_separation / np.linalg.norm(bias1)
    x1 = z @ a1.T + bias1 + ambient * rng.standard_normal((n, spec.d1))

    # view two: coordinate-wise monotone warp, rotation, and a translation
    # (real feature spaces are far from zero-mean), then another map
    rot = orthonormalize(rng.standard_normal((spec.latent_dim, spec.latent_dim)))
    shift = rng.standard_normal(spec.latent_dim)
    shift *= spec.cluster_separation / np.linalg.norm(shift)
    warped = (z + 0.5 * np.tanh(z)) @ rot.T + shift
    a2 = rng.standard_normal((spec.d2, spec.latent_dim)) / np.sqrt(spec.latent_dim)
    x2 = warped @ a2.T + ambient * rng.standard_normal((n, spec.d2))

    spurious = None
    if spec.spurious:
        # a second, independent labeling imprinted on view one only
        spurious = rng.permutation(np.repeat(np.arange(k), -(-n // k))[:n]).astype(np.int64)
        directions = orthonormalize(rng.standard_normal((k, spec.d1)))
        x1 = x1 + spec.cluster_separation * directions[spurious]
    return _f32_exact(x1), _f32_exact(x2), labels, spurious


def _verify(spec: SynthSpec, x1, x2, labels, spurious) -> list[str]:
    k = spec.n_classes
    problems = []
    acc1 = _probe_train_accuracy(x1, labels, k)
    if acc1 < spec.min_probe_acc:
        problems.append(f"planted labels reach only {acc1:.3f} in view one")
    acc2 = _probe_train_accuracy(x2, labels, k)
    if acc2 < spec.min_probe_acc:
        problems.append(f"planted labels reach only {acc2:.3f} in view two")
    if spurious is not None:
        sp1 = _probe_train_accuracy(x1, spurious, k)
        if sp1 < spec.min_probe_acc:
            problems.append(f"spurious labels reach only {sp1:.3f} in view one")
        sp2 = _probe_holdout_accuracy(x2, spurious, k)
        if sp2 > 1.0 / k + 0.15:
            problems.append(
                f"spurious labels are too predictable in view two ({sp2:.3f} held out)"
            )
    return problems


def generate(spec: SynthSpec) -> SyntheticDataset:
    """Produce a verified dataset pair; deterministic given the spec.

    Each attempt derives its generator from (seed, attempt), so retries are
    reproducible too. Raises a generation error when no attempt meets the
    separability requirements.
    """
    failures = []
    for attempt in range(MAX_ATTEMPTS):
        rng = np.random.default_rng([spec.seed, attempt])
        x1, x2, labels, spurious = _draw(spec, rng)
        problems = _verify(spec, x1, x2, labels, spurious)
        if not problems:
            phi1 = EmbeddingSpace(
                manifest=EmbeddingManifest(name="phi1", n_samples=spec.n_samples, dim=spec.d1),
                matrix=x1,
            )
            phi2 = EmbeddingSpace(
                manifest=EmbeddingManifest(name="phi2", n_samples=spec.n_samples, dim=spec.d2),
                matrix=x2,
            )
            truth = GroundTruthLabels(labels=labels, n_classes=spec.n_classes)
            return SyntheticDataset(
                phi1=phi1, phi2=phi2, truth=truth, spurious_labels=spurious
            )
        failures.append(f"attempt {attempt}: " + "; ".join(problems))
    raise GenerationError(
        "could not generate a dataset meeting the separability requirements: "
        + " | ".join(failures)
    )
