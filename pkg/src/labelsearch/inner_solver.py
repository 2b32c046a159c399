"""Linear probe fitting in the second embedding space.

Given soft targets produced by a task encoder, this module fits a multinomial
logistic-regression weight matrix W2 by plain full-batch gradient descent.
The whole iterate trajectory can be retained: the outer optimization
differentiates through every step of it, so fitting is deliberately a fixed
number of exact, replayable updates rather than a black-box solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, InputError

_DIVERGENCE_CAP = 1e30


def softmax(z: np.ndarray) -> np.ndarray:
    """Row-wise softmax, shifted by the row max for stability."""
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def probe_predict(w2: np.ndarray, phi2: np.ndarray) -> np.ndarray:
    """Class probabilities softmax(phi2 @ w2^T), strictly positive rows."""
    return softmax(np.asarray(phi2, dtype=np.float64) @ np.asarray(w2, dtype=np.float64).T)


def soft_cross_entropy(probs: np.ndarray, targets: np.ndarray) -> float:
    """Mean cross-entropy between prediction rows and soft target rows.

    Terms where the target is exactly zero contribute nothing, even if the
    matching prediction is zero too (0 * log 0 == 0 here).
    """
    probs = np.asarray(probs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if probs.shape != targets.shape:
        raise InputError(f"shape mismatch: predictions {probs.shape}, targets {targets.shape}")
    safe = np.where(targets > 0.0, probs, 1.0)
    if (safe <= 0.0).any():
        raise DivergenceError("cross-entropy saw a zero prediction at a supported target")
    return float(-(targets * np.log(safe)).sum() / probs.shape[0])


@dataclass
class LinearProbe:
    """A fitted K x d2 weight matrix over the second embedding space."""

    weights: np.ndarray

    def predict_probs(self, phi2: np.ndarray) -> np.ndarray:
        return probe_predict(self.weights, phi2)

    def predict(self, phi2: np.ndarray) -> np.ndarray:
        return np.argmax(phi2 @ self.weights.T, axis=1)


@dataclass
class InnerTrajectory:
    """One probe fit, optionally with everything needed to replay it.

    When recorded, ``iterates`` holds the m+1 weight matrices from the
    initialization to the final fit, and ``probs[t]`` the softmax predictions
    of iterate t on the training rows, so every update can be reproduced (and
    differentiated) exactly: iterates[t+1] = iterates[t] - lr/n * grad_t.
    """

    final: LinearProbe
    lr: float
    n_train: int
    iterates: list[np.ndarray] = field(default_factory=list)
    probs: list[np.ndarray] = field(default_factory=list)

    @property
    def n_steps(self) -> int:
        return len(self.probs)


def fit_probe(
    phi2: np.ndarray,
    targets: np.ndarray,
    n_steps: int,
    lr: float,
    w2_init: np.ndarray | None = None,
    ridge: float = 0.0,
    record: bool = False,
) -> InnerTrajectory:
    """Fit a probe to soft targets with ``n_steps`` of full-batch GD.

    Each step is W <- W - (lr / n) * (P - T)^T X with P the current softmax
    predictions; no momentum, fixed summation order. The initialization
    defaults to the zero matrix. ``ridge`` adds 2*ridge*W to the gradient
    (off by default; handy for driving the iterates to a strict optimum).
    With ``record=True`` every iterate and prediction matrix is kept so the
    fit can be differentiated through.
    """
    phi2 = np.asarray(phi2, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if phi2.ndim != 2 or targets.ndim != 2 or phi2.shape[0] != targets.shape[0]:
        raise InputError(
            f"inconsistent probe inputs: embeddings {phi2.shape}, targets {targets.shape}"
        )
    if n_steps < 1:
        raise InputError(f"probe fitting needs at least one step, got {n_steps}")
    if record and ridge != 0.0:
        raise InputError("recorded fits assume the plain cross-entropy updates (ridge=0)")
    n, d = phi2.shape
    k = targets.shape[1]
    if w2_init is None:
        w = np.zeros((k, d))
    else:
        w = np.array(w2_init, dtype=np.float64, copy=True)
        if w.shape != (k, d):
            raise InputError(f"w2_init has shape {w.shape}, expected {(k, d)}")
    traj = InnerTrajectory(final=LinearProbe(w), lr=lr, n_train=n)
    scale = lr / n
    for step in range(n_steps):
        p = softmax(phi2 @ w.T)
        if record:
            traj.iterates.append(w)
            traj.probs.append(p)
        grad = (p - targets).T @ phi2 / n
        if ridge:
            grad = grad + 2.0 * ridge * w
        w = w - lr * grad
        if not np.all(np.isfinite(w)) or np.abs(w).max() > _DIVERGENCE_CAP:
            raise DivergenceError(f"probe weights diverged at step {step}", step=step)
    if record:
        traj.iterates.append(w)
    traj.final = LinearProbe(w)
    return traj


def probe_fit_vjp(
    traj: InnerTrajectory,
    phi2: np.ndarray,
    g_weights: np.ndarray,
) -> np.ndarray:
    """Gradient of the fitted weights with respect to the soft targets.

    Unrolls the recorded GD trajectory backwards. ``g_weights`` is the
    adjoint of the final iterate; the return value is the adjoint of the
    target matrix. The initialization is a constant, so gradient flow stops
    there and the recursion simply terminates after the earliest step.
    """
    if not traj.probs:
        raise InputError("trajectory was not recorded; refit with record=True")
    phi2 = np.asarray(phi2, dtype=np.float64)
    scale = traj.lr / traj.n_train
    g_w = np.array(g_weights, dtype=np.float64, copy=True)
    g_targets = np.zeros((traj.n_train, traj.probs[0].shape[1]))
    for p in reversed(traj.probs):
        # forward: w_next = w - scale * (p - targets)^T phi2
        xg = phi2 @ g_w.T
        g_targets += scale * xg
        g_p = -scale * xg
        # softmax vjp: p * (g - sum(g * p))
        g_z = p * (g_p - (g_p * p).sum(axis=1, keepdims=True))
        g_w = g_w + g_z.T @ phi2
    return g_targets
