"""Least-squares solvers with an unpenalized intercept.

All three take a design ``X`` (n x p, no constant column) and target ``y``
and return ``(slopes, intercept)``. Columns and target are centered first,
so the intercept is recovered as ``mean(y) - mean(X) @ slopes``.
"""

import numpy as np
from scipy.linalg import solve_triangular

from ..errors import NoConvergence, RankDeficient

LASSO_TOL = 1e-8
LASSO_MAX_SWEEPS = 10_000


def _center(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    x_mean = X.mean(axis=0) if X.shape[1] else np.zeros(0)
    y_mean = y.mean()
    return X - x_mean, y - y_mean, x_mean, y_mean


def _qr_lstsq(A, b):
    Q, R = np.linalg.qr(A)
    diag = np.abs(np.diag(R))
    if diag.size and diag.min() <= diag.max() * max(A.shape) * np.finfo(float).eps:
        raise RankDeficient("design matrix is rank deficient; use ridge or drop a column")
    return solve_triangular(R, Q.T @ b)


def ols(X, y):
    Xc, yc, x_mean, y_mean = _center(X, y)
    if Xc.shape[1] == 0:
        return np.zeros(0), float(y_mean)
    slopes = _qr_lstsq(Xc, yc)
    return slopes, float(y_mean - x_mean @ slopes)


def ridge(X, y, penalty):
    """Minimize ``SSE + penalty * n * ||slopes||^2`` via QR of the augmented system."""
    if penalty < 0:
        raise ValueError("penalty must be >= 0")
    if penalty == 0:
        return ols(X, y)
    Xc, yc, x_mean, y_mean = _center(X, y)
    n, p = Xc.shape
    if p == 0:
        return np.zeros(0), float(y_mean)
    A = np.vstack([Xc, np.sqrt(penalty * n) * np.eye(p)])
    b = np.concatenate([yc, np.zeros(p)])
    slopes = _qr_lstsq(A, b)
    return slopes, float(y_mean - x_mean @ slopes)


def soft_threshold(value, threshold):
    return np.sign(value) * max(abs(value) - threshold, 0.0)


def lasso(X, y, penalty, *, tol=LASSO_TOL, max_sweeps=LASSO_MAX_SWEEPS):
    """Cyclic coordinate descent on ``(1/2n) SSE + penalty * ||slopes||_1``.

    Stops when a full sweep moves no coefficient by ``tol`` or more; raises
    :class:`NoConvergence` carrying the last iterate after ``max_sweeps``.
    """
    if penalty < 0:
        raise ValueError("penalty must be >= 0")
    Xc, yc, x_mean, y_mean = _center(X, y)
    n, p = Xc.shape
    slopes = np.zeros(p)
    # zero is optimal from lambda_max up; the slack absorbs dot-product rounding
    if p == 0 or penalty >= np.abs(Xc.T @ yc).max() / n * (1.0 - 1e-12):
        return slopes, float(y_mean)
    col_sq = (Xc ** 2).sum(axis=0) / n
    resid = yc.copy()
    for _ in range(max_sweeps):
        max_change = 0.0
        for j in range(p):
            if col_sq[j] == 0.0:
                continue
            xj = Xc[:, j]
            rho = xj @ resid / n + col_sq[j] * slopes[j]
            new = soft_threshold(rho, penalty) / col_sq[j]
            delta = new - slopes[j]
            if delta != 0.0:
                resid -= delta * xj
                slopes[j] = new
                max_change = max(max_change, abs(delta))
        if max_change < tol:
            return slopes, float(y_mean - x_mean @ slopes)
    raise NoConvergence(f"lasso did not converge in {max_sweeps} sweeps", last=slopes.copy())


def lasso_max_penalty(X, y):
    """Smallest penalty at which every lasso slope is zero: ``max|Xc' yc| / n``."""
    Xc, yc, _, _ = _center(X, y)
    if Xc.shape[1] == 0:
        return 0.0
    return float(np.abs(Xc.T @ yc).max() / len(yc))
