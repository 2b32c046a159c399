"""Sparse prototype-based task encoding.

A task encoder owns an unconstrained parameter matrix M. Its derived
prototypes W1 = orthonormalize(M) are row-orthonormal, so W1 @ phi_hat(x)
is a vector of cosine similarities. Dividing by a temperature and applying
sparsemax yields a sparse distribution over classes for every sample.

Both orthonormalization and sparsemax come with hand-derived reverse-mode
rules so the outer optimization can differentiate straight through them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DegenerateParameterError, InputError

PIVOT_TOL = 1e-10


# ---------------------------------------------------------------------------
# Orthonormalization (modified Gram-Schmidt on rows, with a backward tape)
# ---------------------------------------------------------------------------


@dataclass
class GramSchmidtTape:
    """Intermediates of one orthonormalization, kept for the backward pass.

    ``partials[i][j]`` is row i after j projections have been removed, so
    ``partials[i][0]`` is the raw input row and ``partials[i][i]`` the vector
    that gets normalized into ``q[i]``.
    """

    q: np.ndarray
    r: np.ndarray
    partials: list[list[np.ndarray]]
    norms: np.ndarray


def gram_schmidt(m: np.ndarray) -> tuple[np.ndarray, GramSchmidtTape]:
    """Row-orthonormalize ``m``, returning the result and its backward tape."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise InputError(f"expected a 2-D parameter matrix, got shape {m.shape}")
    k, d = m.shape
    if k > d:
        raise ConfigurationError(f"cannot orthonormalize {k} rows in {d} dimensions")
    q = np.empty((k, d))
    r = np.zeros((k, k))
    norms = np.empty(k)
    partials: list[list[np.ndarray]] = []
    for i in range(k):
        v = m[i].copy()
        row_partials = [v.copy()]
        for j in range(i):
            r[i, j] = q[j] @ v
            v = v - r[i, j] * q[j]
            row_partials.append(v.copy())
        norms[i] = np.linalg.norm(v)
        if norms[i] < PIVOT_TOL:
            raise DegenerateParameterError(
                f"row {i} is linearly dependent on earlier rows "
                f"(pivot norm {norms[i]:.3e} < {PIVOT_TOL})"
            )
        q[i] = v / norms[i]
        partials.append(row_partials)
    return q, GramSchmidtTape(q=q, r=r, partials=partials, norms=norms)


def gram_schmidt_vjp(tape: GramSchmidtTape, g_q: np.ndarray) -> np.ndarray:
    """Pull a gradient w.r.t. the orthonormal rows back to the raw parameters.

    Replays the exact update arithmetic of :func:`gram_schmidt` in reverse.
    Rows are processed from last to first so that every adjoint accumulated
    onto an earlier output row is complete before that row itself is unwound.
    """
    q, r, norms = tape.q, tape.r, tape.norms
    k = q.shape[0]
    q_bar = np.array(g_q, dtype=np.float64, copy=True)
    m_bar = np.empty_like(q_bar)
    for i in range(k - 1, -1, -1):
        # q_i = v / ||v||  =>  v_bar = (I - q_i q_i^T) q_bar_i / ||v||
        v_bar = (q_bar[i] - (q_bar[i] @ q[i]) * q[i]) / norms[i]
        for j in range(i - 1, -1, -1):
            # forward was: v_next = v - (q_j . v) q_j
            y_bar = v_bar
            yq = y_bar @ q[j]
            q_bar[j] -= yq * tape.partials[i][j] + r[i, j] * y_bar
            v_bar = y_bar - yq * q[j]
        m_bar[i] = v_bar
    return m_bar


def orthonormalize(m: np.ndarray) -> np.ndarray:
    """Row-orthonormal matrix with the same row span as ``m``."""
    q, _ = gram_schmidt(m)
    return q


# ---------------------------------------------------------------------------
# Sparsemax
# ---------------------------------------------------------------------------


def sparsemax(z: np.ndarray) -> np.ndarray:
    """Euclidean projection of logits onto the probability simplex.

    Accepts a single vector or a matrix of row vectors. Uses the sorted
    cumulative-sum threshold rule; the result has exact zeros outside the
    support ``S = {k : z_k > tau*}``.
    """
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    rows = np.atleast_2d(z)
    if not np.all(np.isfinite(rows)):
        raise InputError("sparsemax requires finite logits")
    k = rows.shape[1]
    # stable sort: the threshold formula is tie-insensitive, but keep the
    # permutation deterministic anyway
    srt = -np.sort(-rows, axis=1, kind="stable")
    csum = np.cumsum(srt, axis=1) - 1.0
    ks = np.arange(1, k + 1, dtype=np.float64)
    support_size = np.count_nonzero(srt * ks > csum, axis=1)
    tau = csum[np.arange(rows.shape[0]), support_size - 1] / support_size
    out = np.maximum(rows - tau[:, None], 0.0)
    return out[0] if single else out


def sparsemax_jacobian(z: np.ndarray) -> np.ndarray:
    """Jacobian of sparsemax at ``z``: diag(s) - s s^T / |S| for support s."""
    p = sparsemax(np.asarray(z, dtype=np.float64))
    if p.ndim != 1:
        raise InputError("sparsemax_jacobian expects a single logit vector")
    s = (p > 0.0).astype(np.float64)
    return np.diag(s) - np.outer(s, s) / s.sum()


def sparsemax_vjp(p: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Vector-Jacobian product through sparsemax, row-wise.

    ``p`` are sparsemax outputs (their zero pattern determines the support),
    ``g`` the incoming gradients. Within each row's support the gradient is
    centered; outside it vanishes.
    """
    s = p > 0.0
    count = s.sum(axis=1, keepdims=True)
    mean_on_support = np.where(s, g, 0.0).sum(axis=1, keepdims=True) / count
    return np.where(s, g - mean_on_support, 0.0)


# ---------------------------------------------------------------------------
# Encoder and labelings
# ---------------------------------------------------------------------------


@dataclass
class Labeling:
    """Per-sample rows on the (K-1)-simplex, with a derived hard-label view."""

    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.ascontiguousarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 2:
            raise InputError("labeling probabilities must be an N x K matrix")
        if (self.probs < 0.0).any():
            raise InputError("labeling probabilities must be non-negative")
        sums = self.probs.sum(axis=1)
        if not np.all(np.abs(sums - 1.0) <= 1e-9):
            bad = int(np.argmax(np.abs(sums - 1.0)))
            raise InputError(f"labeling row {bad} sums to {sums[bad]!r}, not 1")

    @cached_property
    def hard(self) -> np.ndarray:
        """Argmax labels; ties break to the lowest class index."""
        return np.argmax(self.probs, axis=1)

    @property
    def n_samples(self) -> int:
        return self.probs.shape[0]

    @property
    def n_classes(self) -> int:
        return self.probs.shape[1]


@dataclass
class TaskEncoder:
    """Trainable labeling function: sparsemax of scaled cosine similarities."""

    m: np.ndarray
    gamma: float
    seed: int | None = None

    def __post_init__(self):
        self.m = np.ascontiguousarray(self.m, dtype=np.float64)
        if self.m.ndim != 2:
            raise InputError("encoder parameters must be a K x d1 matrix")
        if self.m.shape[0] > self.m.shape[1]:
            raise ConfigurationError(
                f"need K <= d1, got K={self.m.shape[0]}, d1={self.m.shape[1]}"
            )
        if not self.gamma > 0:
            raise ConfigurationError(f"temperature must be positive, got {self.gamma}")

    @property
    def n_classes(self) -> int:
        return self.m.shape[0]

    @property
    def dim(self) -> int:
        return self.m.shape[1]

    @property
    def prototypes(self) -> np.ndarray:
        """Row-orthonormal W1, re-derived from the raw parameters on demand."""
        return orthonormalize(self.m)

    def to_dict(self) -> dict:
        return {
            "K": self.n_classes,
            "d1": self.dim,
            "gamma": self.gamma,
            "M": [float(v) for v in self.m.ravel()],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskEncoder":
        m = np.array(d["M"], dtype=np.float64).reshape(int(d["K"]), int(d["d1"]))
        return cls(m=m, gamma=float(d["gamma"]), seed=d.get("seed"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "TaskEncoder":
        return cls.from_dict(json.loads(Path(path).read_text()))


def ortho_rand(
    n_classes: int,
    dim: int,
    rng: int | np.random.Generator,
    gamma: float = 0.1,
) -> TaskEncoder:
    """Encoder with K random orthonormal prototypes, deterministic given the seed.

    The parameter matrix is set to the orthonormalized Gaussian draw itself,
    so initially W1 equals M exactly.
    """
    if n_classes > dim:
        raise ConfigurationError(f"need K <= d1, got K={n_classes}, d1={dim}")
    gen = np.random.default_rng(rng) if isinstance(rng, (int, np.integer)) else rng
    seed = int(rng) if isinstance(rng, (int, np.integer)) else None
    m = orthonormalize(gen.standard_normal((n_classes, dim)))
    return TaskEncoder(m=m, gamma=gamma, seed=seed)


def encode(encoder: TaskEncoder, phi1_hat: np.ndarray) -> Labeling:
    """Label every row of ``phi1_hat``: sparsemax(W1 @ row / gamma).

    Rows must be unit-norm so the logits are cosine similarities in [-1, 1]
    before temperature scaling.
    """
    phi1_hat = np.asarray(phi1_hat, dtype=np.float64)
    if phi1_hat.ndim != 2 or phi1_hat.shape[1] != encoder.dim:
        raise InputError(
            f"embedding rows have dim {phi1_hat.shape[-1]}, encoder expects {encoder.dim}"
        )
    norms = np.linalg.norm(phi1_hat, axis=1)
    if not np.allclose(norms, 1.0, atol=1e-5):
        bad = int(np.argmax(np.abs(norms - 1.0)))
        raise InputError(f"row {bad} is not unit-norm (norm={norms[bad]:.6g}); normalize first")
    logits = phi1_hat @ encoder.prototypes.T / encoder.gamma
    return Labeling(probs=sparsemax(logits))
