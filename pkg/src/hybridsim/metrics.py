"""Prediction error metrics shared by the REM and evaluation code."""
import numpy as np


def _residuals(pred, truth):
    pred = np.asarray(pred, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.size} predictions vs {truth.size} targets")
    if pred.size == 0:
        raise ValueError("empty input")
    return pred - truth


def rmse(pred, truth) -> float:
    """Root mean squared error."""
    r = _residuals(pred, truth)
    scale = np.max(np.abs(r))
    if scale == 0 or not np.isfinite(scale):
        return float(np.sqrt(np.mean(r * r)))
    # scaling guards against under/overflow of the squares
    r = r / scale
    return float(scale * np.sqrt(np.mean(r * r)))


def mae(pred, truth) -> float:
    """Mean absolute error."""
    r = _residuals(pred, truth)
    return float(np.mean(np.abs(r)))
