"""Clickbait detection by fusing contextual and structural headline features."""

from .corpus import (
    ClassWeights, Corpus, DatasetSplit, HeadlineRecord, binarize_label, compute_class_weights,
    load_dataset, stratified_split,
)
from .errors import (
    BaitcheckError, CheckpointError, ConfigError, DatasetError, DivergenceError, NotFittedError, ShapeError,
)
from .feats import FEATURE_NAMES, extract_features, feature_matrix, fit_scaler, apply_scaler, rfe_select
from .ssafb import ABLATIONS, ClickGuardModel, ModelConfig, with_ablation
from .train import Metrics, TrainConfig, TrainHistory, evaluate, lr_at, search_base_lr, train, weighted_bce
from .trust import (
    PerturbationSpec, TrustReport, avg_prediction_change, export_radar, lime_explain, perturb, pfi, pfi_table,
)

__version__ = "0.1.0"
