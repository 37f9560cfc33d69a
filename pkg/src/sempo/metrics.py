"""Point-forecast error metrics."""

from __future__ import annotations

import numpy as np


class MetricError(ValueError):
    """Metric undefined for the given inputs."""


def _pair(y, y_hat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64).ravel()
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    if y.shape != y_hat.shape:
        raise MetricError(f"length mismatch: {y.size} targets vs {y_hat.size} forecasts")
    if y.size == 0:
        raise MetricError("empty input")
    return y, y_hat


def mse(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean((y - y_hat) ** 2))


def mae(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


def smape(y, y_hat) -> float:
    """Mean of 2|y_hat - y| / (|y| + |y_hat|); a 0/0 term counts as 0.  Range [0, 2]."""
    y, y_hat = _pair(y, y_hat)
    denom = np.abs(y) + np.abs(y_hat)
    num = 2.0 * np.abs(y_hat - y)
    terms = np.divide(num, denom, out=np.zeros_like(num), where=denom > 0)
    return float(np.mean(terms))


def nrmse(y, y_hat) -> float:
    """RMSE divided by the mean absolute target."""
    y, y_hat = _pair(y, y_hat)
    scale = np.mean(np.abs(y))
    if scale == 0:
        raise MetricError("NRMSE undefined for an all-zero target")
    return float(np.sqrt(np.mean((y - y_hat) ** 2)) / scale)


def mase(y, y_hat, insample, season: int = 1) -> float:
    """MAE scaled by the in-sample seasonal-naive MAE."""
    y, y_hat = _pair(y, y_hat)
    insample = np.asarray(insample, dtype=np.float64).ravel()
    if season < 1 or insample.size <= season:
        raise MetricError(f"in-sample length {insample.size} must exceed season {season}")
    scale = np.mean(np.abs(insample[season:] - insample[:-season]))
    if scale == 0:
        raise MetricError("MASE undefined: seasonal-naive in-sample error is zero")
    return float(np.mean(np.abs(y - y_hat)) / scale)


METRICS = ("mse", "mae", "smape", "nrmse", "mase")


def all_metrics(y, y_hat, insample, season: int = 1) -> dict[str, float | None]:
    out: dict[str, float | None] = {"mse": mse(y, y_hat), "mae": mae(y, y_hat), "smape": smape(y, y_hat)}
    for name, fn in (("nrmse", lambda: nrmse(y, y_hat)), ("mase", lambda: mase(y, y_hat, insample, season))):
        try:
            out[name] = fn()
        except MetricError:
            out[name] = None
    return out
