"""scikit-learn estimator over the ``[V, OI, sigma, delta_r]`` feature columns."""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .features import COLUMNS, FeatureMatrix
from .model import DEFAULT_GRID, fit, select_penalty


class ResidualFlowRegressor(RegressorMixin, BaseEstimator):
    """Linear next-bar move model fit by OLS, ridge or lasso.

    Parameters
    ----------
    method : {"ols", "ridge", "lasso"}
    penalty : float
        Used as-is when ``penalty_grid`` is None.
    penalty_grid : sequence of float or None
        When given (ridge/lasso only), the penalty is chosen by walk-forward
        validation inside the training data.
    inner_folds : int
        Number of walk-forward folds for penalty selection.
    exclude_features : tuple of str
        Column names forced to a zero coefficient, e.g. ``("delta_r",)``.

    Attributes
    ----------
    model_ : CalibratedModel
    coef_ : ndarray of shape (4,)
        ``alpha, beta, gamma, lambda`` on standardized features.
    intercept_ : float
    penalty_ : float
    """

    def __init__(self, method="ols", penalty=0.0, penalty_grid=None, inner_folds=2, exclude_features=()):
        self.method = method
        self.penalty = penalty
        self.penalty_grid = penalty_grid
        self.inner_folds = inner_folds
        self.exclude_features = exclude_features

    def fit(self, X, y, bar_start=None):
        X, y = check_X_y(X, y, y_numeric=True)
        if X.shape[1] != len(COLUMNS):
            raise ValueError(f"expected {len(COLUMNS)} columns {COLUMNS}, got {X.shape[1]}")
        if bar_start is None:
            bar_start = np.arange(len(y))
        fm = FeatureMatrix(bar_start, X, y)
        exclude = tuple(self.exclude_features)
        penalty = self.penalty
        if self.method != "ols" and self.penalty_grid is not None:
            grid = DEFAULT_GRID if self.penalty_grid == "default" else self.penalty_grid
            penalty, self.fold_scores_ = select_penalty(fm, self.method, grid, self.inner_folds,
                                                        exclude=exclude)
        self.model_ = fit(fm, method=self.method, penalty=penalty, exclude=exclude)
        self.coef_ = np.array(self.model_.coefficients)
        self.intercept_ = self.model_.intercept
        self.penalty_ = self.model_.penalty
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = check_array(X)
        return self.model_.predict_many(X)
