"""Unsupervised search for labelings that generalize across two frozen
embedding spaces, plus the evaluation and aggregation tooling around it."""

from .aggregation import (
    AggregateResult,
    AlignedRuns,
    ReliableSet,
    aggregate_runs,
    align_labelings,
    majority_vote,
    select_reliable,
)
from .embeddings import (
    EmbeddingManifest,
    EmbeddingSpace,
    GroundTruthLabels,
    load_labels,
    load_space,
    normalize_rows,
    save_labels,
    save_space,
)
from .errors import (
    ConfigurationError,
    DataError,
    DegenerateParameterError,
    DivergenceError,
    FormatError,
    GenerationError,
    InputError,
    LabelSearchError,
    UsageError,
)
from .evaluation import (
    KMeansResult,
    adjusted_rand_index,
    clustering_accuracy,
    confusion_matrix,
    cross_validation_accuracy,
    hungarian_match,
    kmeans,
    kmeans_baseline,
)
from .inner_solver import (
    InnerTrajectory,
    LinearProbe,
    fit_probe,
    probe_predict,
    soft_cross_entropy,
)
from .meta_opt import (
    PRESETS,
    AdamState,
    FailedRun,
    RunResult,
    TrainConfig,
    config_hash,
    entropy_regularizer,
    hypergradient,
    load_run,
    outer_loss,
    run_sweep,
    sample_split,
    save_run,
    train_run,
)
from .synthetic import SynthSpec, SyntheticDataset, generate
from .task_encoder import (
    Labeling,
    TaskEncoder,
    encode,
    ortho_rand,
    orthonormalize,
    sparsemax,
    sparsemax_jacobian,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "AggregateResult",
    "AlignedRuns",
    "ConfigurationError",
    "DataError",
    "DegenerateParameterError",
    "DivergenceError",
    "EmbeddingManifest",
    "EmbeddingSpace",
    "FailedRun",
    "FormatError",
    "GenerationError",
    "GroundTruthLabels",
    "InnerTrajectory",
    "InputError",
    "KMeansResult",
    "Labeling",
    "LabelSearchError",
    "LinearProbe",
    "PRESETS",
    "ReliableSet",
    "RunResult",
    "SynthSpec",
    "SyntheticDataset",
    "TaskEncoder",
    "TrainConfig",
    "UsageError",
    "adjusted_rand_index",
    "aggregate_runs",
    "align_labelings",
    "clustering_accuracy",
    "config_hash",
    "confusion_matrix",
    "cross_validation_accuracy",
    "encode",
    "entropy_regularizer",
    "fit_probe",
    "generate",
    "hungarian_match",
    "hypergradient",
    "kmeans",
    "kmeans_baseline",
    "load_labels",
    "load_run",
    "load_space",
    "majority_vote",
    "normalize_rows",
    "ortho_rand",
    "orthonormalize",
    "outer_loss",
    "probe_predict",
    "run_sweep",
    "sample_split",
    "save_labels",
    "save_run",
    "save_space",
    "select_reliable",
    "soft_cross_entropy",
    "sparsemax",
    "sparsemax_jacobian",
    "train_run",
]
