"""Data-rate prediction model and probabilistic derivation model."""
from .features import FEATURE_NAMES, CellVocabulary, FeatureVector, encode
from .forest import ForestModel, ForestParams, Tree, predict, train_forest, train_rate_forest
from .gpr import (
    GprFitError,
    GprHyperparams,
    GprModel,
    draw_clamped_normal,
    log_marginal_likelihood,
    posterior,
    sample_virtual_ground_truth,
    select_hyperparams,
    train_gpr,
)

__all__ = [
    "FEATURE_NAMES", "CellVocabulary", "FeatureVector", "encode",
    "ForestModel", "ForestParams", "Tree", "predict", "train_forest", "train_rate_forest",
    "GprFitError", "GprHyperparams", "GprModel", "draw_clamped_normal", "log_marginal_likelihood",
    "posterior", "sample_virtual_ground_truth", "select_hyperparams", "train_gpr",
]
