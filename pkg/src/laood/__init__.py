"""Layer-adaptive out-of-distribution detection.

One one-class SVM per network layer, trained on pooled and standardized
features; the maximum per-layer score is the final OOD score. Includes
pseudo-OOD generation for hyperparameter tuning, evaluation metrics, a toy
backbone for detector/backbone co-training, and the on-disk formats shared
with feature exporters.
"""

from .ensemble import (
    DatasetScores,
    DetectorEnsemble,
    LayerDetector,
    SamplePrediction,
    build_ensemble,
    score_dataset,
    score_sample,
)
from .kernel import KernelParams, gram, rbf
from .metrics import EvalReport, aupr, auroc, evaluate, fpr_at_tpr
from .ocsvm import ConvergenceError, OcsvmConfig, OcsvmModel, fit, score, score_batch
from .preprocess import StandardizeStats, apply_stats, fit_stats, global_average_pool
from .pseudo_ood import ShiftConfig, edge_scores, generate_pseudo_ood
from .tuner import TuneSpec, select_gamma

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "DatasetScores",
    "DetectorEnsemble",
    "EvalReport",
    "KernelParams",
    "LayerDetector",
    "OcsvmConfig",
    "OcsvmModel",
    "SamplePrediction",
    "ShiftConfig",
    "StandardizeStats",
    "TuneSpec",
    "apply_stats",
    "aupr",
    "auroc",
    "build_ensemble",
    "edge_scores",
    "evaluate",
    "fit",
    "fit_stats",
    "fpr_at_tpr",
    "generate_pseudo_ood",
    "global_average_pool",
    "gram",
    "rbf",
    "score",
    "score_batch",
    "score_dataset",
    "score_sample",
    "select_gamma",
]
