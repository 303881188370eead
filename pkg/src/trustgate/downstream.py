"""Downstream scene-parameter regressor and its accuracy metric.

A linear ridge regressor fitted on clean features stands in for the
perception task consuming the sensor stream; corruption-induced feature
drift shows up directly as lost R2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RidgeRegressor:
    coef: np.ndarray  # (targets, features)
    intercept: np.ndarray  # (targets,)
    ridge: float


def _feature_matrix(features) -> np.ndarray:
    rows = [np.asarray(getattr(f, "values", f), dtype=np.float64) for f in features]
    return np.stack(rows)


def fit_ridge(features, targets, ridge: float = 1e-3) -> RidgeRegressor:
    """Closed-form ridge fit with an unpenalized intercept (via centering)."""
    x = _feature_matrix(features)
    y = np.asarray(targets, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if len(x) != len(y):
        raise ValueError(f"{len(x)} feature rows vs {len(y)} target rows")
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    x_mean, y_mean = x.mean(axis=0), y.mean(axis=0)
    xc, yc = x - x_mean, y - y_mean
    gram = xc.T @ xc + ridge * np.eye(x.shape[1])
    coef = np.linalg.solve(gram, xc.T @ yc).T  # (targets, features)
    intercept = y_mean - coef @ x_mean
    return RidgeRegressor(coef, intercept, ridge)


def predict_downstream(f, regressor: RidgeRegressor) -> np.ndarray:
    """Predicted scene parameters for one feature vector."""
    values = np.asarray(getattr(f, "values", f), dtype=np.float64)
    return regressor.coef @ values + regressor.intercept


def r2_score(preds, truths) -> float:
    """Coefficient of determination 1 - SS_res/SS_tot, pooled over output dims.

    SS_tot uses per-dimension means of the truths. Raises if the truths are
    constant (SS_tot = 0), where the metric is undefined.
    """
    p = np.asarray(preds, dtype=np.float64)
    t = np.asarray(truths, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {t.shape}")
    if p.ndim == 1:
        p, t = p[:, None], t[:, None]
    ss_res = float(np.sum((p - t) ** 2))
    ss_tot = float(np.sum((t - t.mean(axis=0)) ** 2))
    if ss_tot == 0.0:
        raise ValueError("R2 undefined: truths are constant (SS_tot = 0)")
    return 1.0 - ss_res / ss_tot
