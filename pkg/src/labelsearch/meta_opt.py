"""Outer search over task encoders.

The objective for a candidate encoder is estimated on random train/test
subsets: label both subsets with the encoder, fit a linear probe to the train
labels in the second embedding space, and score the probe's test predictions
against the encoder's own test labels by soft cross-entropy. An entropy bonus
on the mean label distribution discourages collapse onto few classes.

The gradient of all of this with respect to the raw encoder parameters is
assembled by hand. It flows along three routes — through the probe's whole
gradient-descent trajectory into the train labels, directly into the test
labels inside the cross-entropy, and through the mean label distribution
inside the entropy bonus — then back through sparsemax, the cosine logits,
and the orthonormalization. Optimization is Adam on the unconstrained
parameters with norm-clipped gradients and a schedule that periodically
shrinks both the step size and the labeling temperature.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DivergenceError, InputError
from .evaluation import cross_validation_accuracy
from .inner_solver import (
    InnerTrajectory,
    fit_probe,
    probe_fit_vjp,
    probe_predict,
    soft_cross_entropy,
)
from .task_encoder import (
    GramSchmidtTape,
    TaskEncoder,
    encode,
    gram_schmidt,
    gram_schmidt_vjp,
    sparsemax,
    sparsemax_vjp,
)

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

PRESETS: dict[str, dict] = {
    "default": {},
    "stl10-inductive": {"subset_size": 5000},
    "stl10-transductive": {"subset_size": 8000},
    "imagenet": {
        "alpha": 0.1,
        "inner_lr": 0.1,
        "inner_steps": 100,
        "subset_size": 20000,
        "train_frac": 0.7,
        "anneal_at": (),
    },
}


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one encoder search. Seeds live outside the config,
    so a sweep shares a single config across all of its runs."""

    n_classes: int
    eta: float = 10.0
    gamma: float = 0.1
    alpha: float = 0.001
    iters: int = 1000
    inner_steps: int = 300
    inner_lr: float = 0.001
    subset_size: int = 10000
    train_frac: float = 0.9
    n_subsets: int = 20
    clip_norm: float = 1.0
    anneal_at: tuple[int, ...] = (100, 200)
    anneal_factor: float = 10.0
    cv_folds: int = 20

    def __post_init__(self):
        if self.n_classes < 2:
            raise ConfigurationError(f"need at least 2 classes, got {self.n_classes}")
        if not 0.0 < self.train_frac < 1.0:
            raise ConfigurationError(f"train fraction must be in (0, 1), got {self.train_frac}")
        for name in ("gamma", "alpha", "inner_lr", "anneal_factor"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("iters", "inner_steps", "subset_size", "n_subsets", "cv_folds"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.subset_size < 2:
            raise ConfigurationError("subset_size must be >= 2 to leave a test part")
        if self.eta < 0 or self.clip_norm <= 0:
            raise ConfigurationError("eta must be >= 0 and clip_norm > 0")
        object.__setattr__(self, "anneal_at", tuple(int(t) for t in self.anneal_at))

    @classmethod
    def preset(cls, name: str, n_classes: int, **overrides) -> "TrainConfig":
        if name not in PRESETS:
            raise ConfigurationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        merged = {**PRESETS[name], **overrides}
        return cls(n_classes=n_classes, **merged)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["anneal_at"] = list(self.anneal_at)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def config_hash(config: TrainConfig) -> str:
    """Stable digest of a config, for tagging outputs produced under it."""
    canon = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


# ---------------------------------------------------------------------------
# Subset sampling
# ---------------------------------------------------------------------------


def sample_split(
    rng: np.random.Generator, n_total: int, subset_size: int, train_frac: float
) -> tuple[np.ndarray, np.ndarray]:
    """One random disjoint (train, test) index pair, drawn without replacement."""
    if subset_size > n_total:
        raise ConfigurationError(
            f"subset_size {subset_size} exceeds the {n_total} available samples"
        )
    n_train = int(round(subset_size * train_frac))
    n_train = min(max(n_train, 1), subset_size - 1)
    idx = rng.choice(n_total, size=subset_size, replace=False)
    return idx[:n_train], idx[n_train:]


def sample_splits(
    rng: np.random.Generator, n_total: int, config: TrainConfig
) -> list[tuple[np.ndarray, np.ndarray]]:
    """The per-iteration batch of independent split pairs."""
    return [
        sample_split(rng, n_total, config.subset_size, config.train_frac)
        for _ in range(config.n_subsets)
    ]


# ---------------------------------------------------------------------------
# Objective and hand-assembled gradient
# ---------------------------------------------------------------------------


def entropy_regularizer(label_rows: np.ndarray) -> float:
    """Shannon entropy of the column mean of simplex rows, with 0 log 0 == 0."""
    tau_bar = np.asarray(label_rows, dtype=np.float64).mean(axis=0)
    safe = np.where(tau_bar > 0.0, tau_bar, 1.0)
    return float(-(tau_bar * np.log(safe)).sum())


@dataclass
class OuterCache:
    """Forward intermediates of one split evaluation, kept for the backward."""

    tape: GramSchmidtTape
    gamma: float
    eta: float
    x1_tr: np.ndarray
    x1_te: np.ndarray
    x2_tr: np.ndarray
    x2_te: np.ndarray
    t_tr: np.ndarray
    t_te: np.ndarray
    traj: InnerTrajectory
    p_te: np.ndarray
    tau_bar: np.ndarray
    loss: float
    ce: float
    entropy: float


def outer_loss(
    encoder: TaskEncoder,
    phi1_hat: np.ndarray,
    phi2: np.ndarray,
    idx_tr: np.ndarray,
    idx_te: np.ndarray,
    config: TrainConfig,
    record: bool = True,
) -> tuple[float, OuterCache | None]:
    """Objective of one split pair: probe generalization minus entropy bonus.

    Labels both subsets with the encoder, fits a probe to the train labels,
    and scores its test predictions against the encoder's own test labels.
    With ``record=True`` the returned cache lets :func:`hypergradient` run
    the exact backward pass; with ``record=False`` only the value comes back.
    """
    w1, tape = gram_schmidt(encoder.m)
    gamma, eta = encoder.gamma, config.eta
    x1_tr, x1_te = phi1_hat[idx_tr], phi1_hat[idx_te]
    x2_tr, x2_te = phi2[idx_tr], phi2[idx_te]
    t_tr = sparsemax(x1_tr @ w1.T / gamma)
    t_te = sparsemax(x1_te @ w1.T / gamma)
    traj = fit_probe(x2_tr, t_tr, config.inner_steps, config.inner_lr, record=record)
    p_te = probe_predict(traj.final.weights, x2_te)
    ce = soft_cross_entropy(p_te, t_te)
    all_rows = np.concatenate([t_tr, t_te])
    ent = entropy_regularizer(all_rows)
    tau_bar = all_rows.mean(axis=0)
    loss = ce - eta * ent
    if not record:
        return loss, None
    cache = OuterCache(
        tape=tape, gamma=gamma, eta=eta,
        x1_tr=x1_tr, x1_te=x1_te, x2_tr=x2_tr, x2_te=x2_te,
        t_tr=t_tr, t_te=t_te, traj=traj, p_te=p_te, tau_bar=tau_bar,
        loss=loss, ce=ce, entropy=ent,
    )
    return loss, cache


def hypergradient(cache: OuterCache) -> np.ndarray:
    """Exact reverse-mode gradient of a cached split loss w.r.t. raw parameters."""
    n_te = cache.t_te.shape[0]
    n = cache.t_tr.shape[0] + n_te

    # cross-entropy: into the probe weights and directly into the test labels
    g_u_te = (cache.p_te - cache.t_te) / n_te
    g_w2 = g_u_te.T @ cache.x2_te
    g_t_te = -np.log(cache.p_te) / n_te
    # entropy bonus: loss carries -eta * entropy, so d/d tau_bar flips sign
    # to +eta * (log + 1); every label row feeds the mean equally. A class
    # with zero mass sits outside every sparsemax support, so its (arbitrary)
    # zero entry here never reaches the parameters.
    alive = cache.tau_bar > 0.0
    safe_tau = np.where(alive, cache.tau_bar, 1.0)
    g_tau = np.where(alive, cache.eta * (np.log(safe_tau) + 1.0), 0.0)
    g_t_tr = probe_fit_vjp(cache.traj, cache.x2_tr, g_w2)
    g_t_tr += g_tau / n
    g_t_te += g_tau / n

    g_z_tr = sparsemax_vjp(cache.t_tr, g_t_tr)
    g_z_te = sparsemax_vjp(cache.t_te, g_t_te)
    g_w1 = (g_z_tr.T @ cache.x1_tr + g_z_te.T @ cache.x1_te) / cache.gamma
    return gram_schmidt_vjp(cache.tape, g_w1)


def outer_value(
    m: np.ndarray,
    phi1_hat: np.ndarray,
    phi2: np.ndarray,
    splits: Sequence[tuple[np.ndarray, np.ndarray]],
    config: TrainConfig,
    gamma: float | None = None,
) -> float:
    """Mean outer loss of raw parameters ``m`` over the given splits."""
    enc = TaskEncoder(m=m, gamma=config.gamma if gamma is None else gamma)
    total = 0.0
    for tr, te in splits:
        value, _ = outer_loss(enc, phi1_hat, phi2, tr, te, config, record=False)
        total += value
    return total / len(splits)


def outer_value_and_grad(
    m: np.ndarray,
    phi1_hat: np.ndarray,
    phi2: np.ndarray,
    splits: Sequence[tuple[np.ndarray, np.ndarray]],
    config: TrainConfig,
    gamma: float | None = None,
) -> tuple[float, np.ndarray, dict]:
    """Mean outer loss over splits and its full (unclipped) gradient."""
    enc = TaskEncoder(m=m, gamma=config.gamma if gamma is None else gamma)
    g_m = np.zeros_like(enc.m)
    total_loss = total_ce = total_ent = 0.0
    for tr, te in splits:
        value, cache = outer_loss(enc, phi1_hat, phi2, tr, te, config)
        total_loss += value
        total_ce += cache.ce
        total_ent += cache.entropy
        g_m += hypergradient(cache)
    k = len(splits)
    aux = {"ce": total_ce / k, "entropy": total_ent / k}
    return total_loss / k, g_m / k, aux


def clip_gradient(g: np.ndarray, max_norm: float) -> np.ndarray:
    norm = float(np.linalg.norm(g))
    if norm > max_norm:
        return g * (max_norm / norm)
    return g


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """First/second moment accumulators; bias-corrected textbook updates."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def like(cls, params: np.ndarray) -> "AdamState":
        return cls(m=np.zeros_like(params), v=np.zeros_like(params))

    def step(self, params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return params - lr * m_hat / (np.sqrt(v_hat) + self.eps)


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
    return state.step(params, grad, lr)


# ---------------------------------------------------------------------------
# The full search
# ---------------------------------------------------------------------------


@dataclass
class RunResult:
    """Everything one seeded search produces."""

    config: TrainConfig
    seed: int
    encoder: TaskEncoder
    labels: np.ndarray
    cv_accuracy: float
    objective_trace: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "config_hash": config_hash(self.config),
            "seed": self.seed,
            "cv_accuracy": self.cv_accuracy,
            "objective_trace": list(self.objective_trace),
            "labels": [int(v) for v in self.labels],
            "encoder": self.encoder.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunResult":
        return cls(
            config=TrainConfig.from_dict(d["config"]),
            seed=int(d["seed"]),
            encoder=TaskEncoder.from_dict(d["encoder"]),
            labels=np.array(d["labels"], dtype=np.int64),
            cv_accuracy=float(d["cv_accuracy"]),
            objective_trace=[float(v) for v in d["objective_trace"]],
        )


def save_run(result: RunResult, path: str | Path) -> None:
    Path(path).write_text(json.dumps(result.to_dict()) + "\n")


def load_run(path: str | Path) -> RunResult:
    return RunResult.from_dict(json.loads(Path(path).read_text()))


def _as_matrix(x) -> np.ndarray:
    mat = getattr(x, "matrix", x)
    return np.asarray(mat, dtype=np.float64)


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if (norms < 1e-12).any():
        raise InputError(f"row {int(np.argmin(norms))} has near-zero norm")
    return x / norms


def train_run(
    phi1,
    phi2,
    config: TrainConfig,
    seed: int = 0,
    callback: Callable[[int, dict], None] | None = None,
) -> RunResult:
    """Search for a labeling of the data, starting from the given seed.

    ``phi1`` and ``phi2`` may be raw arrays or loaded embedding spaces. Rows
    of ``phi1`` are length-normalized here; ``phi2`` is consumed as-is. All
    randomness (encoder init, split draws, final cross-validation folds)
    comes from one generator seeded with ``seed``, so reruns are bit-equal.
    The optional callback sees ``(iteration, state)`` after every parameter
    update and is the hook tests use to watch invariants mid-run.
    """
    x1 = _unit_rows(_as_matrix(phi1))
    x2 = _as_matrix(phi2)
    if x1.shape[0] != x2.shape[0]:
        raise InputError(
            f"embedding spaces disagree on sample count: {x1.shape[0]} vs {x2.shape[0]}"
        )
    if config.n_classes > x1.shape[1]:
        raise ConfigurationError(
            f"need n_classes <= dim of the first space, got {config.n_classes} > {x1.shape[1]}"
        )
    n = x1.shape[0]
    rng = np.random.default_rng(seed)
    m, _ = gram_schmidt(rng.standard_normal((config.n_classes, x1.shape[1])))
    adam = AdamState.like(m)
    alpha, gamma = config.alpha, config.gamma
    trace: list[float] = []
    for it in range(config.iters):
        if it in config.anneal_at:
            alpha /= config.anneal_factor
            gamma /= config.anneal_factor
            logger.info("iteration %d: annealed to alpha=%.3g gamma=%.3g", it, alpha, gamma)
        splits = sample_splits(rng, n, config)
        try:
            loss, g_m, aux = outer_value_and_grad(m, x1, x2, splits, config, gamma=gamma)
        except DivergenceError as err:
            raise DivergenceError(f"outer iteration {it}: {err}", step=it) from err
        if not np.isfinite(loss):
            raise DivergenceError(f"outer loss became {loss} at iteration {it}", step=it)
        trace.append(loss)
        m = adam.step(m, clip_gradient(g_m, config.clip_norm), alpha)
        if callback is not None:
            callback(it, {"m": m, "loss": loss, "gamma": gamma, "alpha": alpha, **aux})

    encoder = TaskEncoder(m=m, gamma=gamma, seed=seed)
    labeling = encode(encoder, x1)
    cv = cross_validation_accuracy(
        encoder, x1, x2, config, n_folds=config.cv_folds, rng=rng
    )
    logger.info("seed %d finished: loss=%.4f cv_accuracy=%.4f", seed, trace[-1], cv)
    return RunResult(
        config=config,
        seed=seed,
        encoder=encoder,
        labels=labeling.hard,
        cv_accuracy=cv,
        objective_trace=trace,
    )


@dataclass
class FailedRun:
    """Diagnostics for a seed whose search did not finish."""

    seed: int
    error: str
    step: int | None = None


def _sweep_worker(args) -> dict:
    phi1, phi2, config_dict, seed = args
    config = TrainConfig.from_dict(config_dict)
    try:
        return train_run(phi1, phi2, config, seed=seed).to_dict()
    except DivergenceError as err:
        return {"seed": seed, "error": str(err), "step": err.step}


def run_sweep(
    phi1,
    phi2,
    config: TrainConfig,
    seeds: Sequence[int],
    jobs: int = 1,
    on_error: str = "raise",
) -> list[RunResult | FailedRun]:
    """Independent searches over many seeds, optionally in parallel.

    Results come back ordered like ``seeds`` and are identical for any
    ``jobs`` value: each run owns a private generator derived only from its
    seed, so scheduling cannot leak between runs. Diverged seeds raise by
    default; with ``on_error="report"`` they come back as FailedRun entries
    instead and the healthy seeds are unaffected.
    """
    if on_error not in ("raise", "report"):
        raise InputError(f"on_error must be 'raise' or 'report', got {on_error!r}")
    x1 = _as_matrix(phi1)
    x2 = _as_matrix(phi2)
    tasks = [(x1, x2, config.to_dict(), int(s)) for s in seeds]
    if jobs <= 1 or len(tasks) <= 1:
        dicts = [_sweep_worker(t) for t in tasks]
    else:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            dicts = list(pool.map(_sweep_worker, tasks))
    out: list[RunResult | FailedRun] = []
    for d in dicts:
        if "error" in d:
            if on_error == "raise":
                raise DivergenceError(f"seed {d['seed']}: {d['error']}", step=d.get("step"))
            out.append(FailedRun(seed=d["seed"], error=d["error"], step=d.get("step")))
        else:
            out.append(RunResult.from_dict(d))
    return out
