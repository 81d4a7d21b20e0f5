from .estimator import ResidualFlowRegressor
from .features import COLUMNS, FeatureMatrix, FeatureRow, build_features
from .model import (
    DEFAULT_GRID, METHODS, CalibratedModel, Scaler, fit, fit_lasso, fit_ols, fit_ridge, inner_folds,
    predict, select_penalty,
)

__all__ = [
    "ResidualFlowRegressor", "COLUMNS", "FeatureMatrix", "FeatureRow", "build_features",
    "DEFAULT_GRID", "METHODS", "CalibratedModel", "Scaler", "fit", "fit_lasso", "fit_ols",
    "fit_ridge", "inner_folds", "predict", "select_penalty",
]
