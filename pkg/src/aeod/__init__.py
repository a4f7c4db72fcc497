"""Autoencoder outlier detection with probabilistic reconstruction error and mean-shift scoring."""

__version__ = "0.1.0"

from .data import Dataset, NormStats, Splits, apply_normalizer, fit_normalizer, load_csv, stratified_split
from .detector import DetectorModel, ReconOutput, ScoreWeights, train
from .evaluation import DetectorEnsemble, EnsembleConfig, ensemble_score, run_benchmark, select_k, train_ensemble
from .meanshift import KdTree, ShiftChain, shift_training_set
from .metrics import auc

__all__ = [
    "Dataset",
    "NormStats",
    "Splits",
    "apply_normalizer",
    "fit_normalizer",
    "load_csv",
    "stratified_split",
    "DetectorModel",
    "ReconOutput",
    "ScoreWeights",
    "train",
    "DetectorEnsemble",
    "EnsembleConfig",
    "ensemble_score",
    "run_benchmark",
    "select_k",
    "train_ensemble",
    "KdTree",
    "ShiftChain",
    "shift_training_set",
    "auc",
]
