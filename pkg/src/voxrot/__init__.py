"""Speaker embedding anonymization with orthogonal reflection stacks.

Core pieces: embedding pools (synthetic generation, EMB1/CSV files),
Householder reflection stacks in two parameterizations, margin-softmax
training with a dissimilarity objective, a far-speaker selection baseline,
and privacy metrics (EER under attacker models, similarity matrices,
voice-distinctiveness gain).
"""

from .anonymizer import (
    AnonymizerModel,
    HouseholderStack,
    SelectionConfig,
    anonymize,
    apply_stack,
    init_stack,
    load_model,
    model_forward,
    save_model,
    select_anonymize,
    select_from_centroids,
    stack_forward,
)
from .attacks import (
    SCENARIOS,
    ScenarioConfig,
    ScenarioReport,
    anonymize_pool_model,
    anonymize_pool_selection,
    pair_cosine_report,
    run_scenario,
    run_scenarios,
)
from .errors import (
    DegenerateCovariance,
    DegenerateReference,
    DimensionMismatch,
    DivergenceDetected,
    EmptyPool,
    EmptyScores,
    FormatError,
    InvalidShape,
    InvalidSpec,
    NotPositiveDefinite,
    PoolTooSmall,
    SplitMissing,
    VoxrotError,
    ZeroVector,
)
from .losses import Batch, LossConfig, aam_loss, combined_objective, cosine_pair_loss, waam_loss
from .metrics import (
    IDENTITY_CALIBRATION,
    ScoreSet,
    SimilarityMatrix,
    d_diag,
    eer,
    fit_calibration,
    g_vd,
    sigmoid,
    similarity_matrix,
    weighted_average_eer,
)
from .pool import (
    EmbeddingPool,
    PoolRecord,
    SyntheticSpec,
    generate_synthetic,
    load_pool,
    load_pool_csv,
    pool_fingerprint,
    pool_stats,
    save_pool,
    save_pool_csv,
)
from .training import TrainConfig, TrainReport, cyclical_lr, gradient_check, train

__all__ = [
    "AnonymizerModel",
    "Batch",
    "DegenerateCovariance",
    "DegenerateReference",
    "DimensionMismatch",
    "DivergenceDetected",
    "EmbeddingPool",
    "EmptyPool",
    "EmptyScores",
    "FormatError",
    "HouseholderStack",
    "IDENTITY_CALIBRATION",
    "InvalidShape",
    "InvalidSpec",
    "LossConfig",
    "NotPositiveDefinite",
    "PoolRecord",
    "PoolTooSmall",
    "SCENARIOS",
    "ScenarioConfig",
    "ScenarioReport",
    "ScoreSet",
    "SelectionConfig",
    "SimilarityMatrix",
    "SplitMissing",
    "SyntheticSpec",
    "TrainConfig",
    "TrainReport",
    "VoxrotError",
    "ZeroVector",
    "aam_loss",
    "anonymize",
    "anonymize_pool_model",
    "anonymize_pool_selection",
    "apply_stack",
    "combined_objective",
    "cosine_pair_loss",
    "cyclical_lr",
    "d_diag",
    "eer",
    "fit_calibration",
    "g_vd",
    "generate_synthetic",
    "gradient_check",
    "init_stack",
    "load_model",
    "load_pool",
    "load_pool_csv",
    "model_forward",
    "pair_cosine_report",
    "pool_fingerprint",
    "pool_stats",
    "run_scenario",
    "run_scenarios",
    "save_model",
    "save_pool",
    "save_pool_csv",
    "select_anonymize",
    "select_from_centroids",
    "sigmoid",
    "similarity_matrix",
    "stack_forward",
    "train",
    "waam_loss",
]
