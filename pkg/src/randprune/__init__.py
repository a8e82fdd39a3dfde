"""Randomized pruning-mask generation and selection for dense networks."""

from .datasets import (
    Dataset,
    generate_synthetic,
    load_csv,
    standardize_pair,
    stratified_split,
)
from .driver import (
    CandidateMask,
    PruneRunConfig,
    PruneRunError,
    StageReport,
    emep_score,
    generate_candidates,
    imp_run,
    mcss_select,
)
from .estimator import RandomizedPruningClassifier
from .masks import (
    SamplingConfig,
    build_ensemble_mask,
    derive_sampling_probs,
    deterministic_topk_mask,
    introduced_randomness,
    sample_without_replacement,
)
from .nn import (
    KDConfig,
    MaskedNetwork,
    Network,
    OptimizerState,
    backward,
    evaluate,
    forward,
    init_network,
    init_optimizer,
    optimizer_step,
    restore,
    snapshot,
    train_one_epoch,
)
from .schedule import StageContext, masks_count, stage_context, validate_schedule

__version__ = "0.1.0"

__all__ = [
    "CandidateMask",
    "Dataset",
    "KDConfig",
    "MaskedNetwork",
    "Network",
    "OptimizerState",
    "PruneRunConfig",
    "PruneRunError",
    "RandomizedPruningClassifier",
    "SamplingConfig",
    "StageContext",
    "StageReport",
    "backward",
    "build_ensemble_mask",
    "derive_sampling_probs",
    "deterministic_topk_mask",
    "emep_score",
    "evaluate",
    "forward",
    "generate_candidates",
    "generate_synthetic",
    "imp_run",
    "init_network",
    "init_optimizer",
    "introduced_randomness",
    "load_csv",
    "masks_count",
    "mcss_select",
    "optimizer_step",
    "restore",
    "sample_without_replacement",
    "snapshot",
    "stage_context",
    "standardize_pair",
    "stratified_split",
    "train_one_epoch",
    "validate_schedule",
]
