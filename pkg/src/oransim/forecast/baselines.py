"""Naive one-step forecasting baselines for residual comparison."""

from __future__ import annotations

import numpy as np

from .model import ForecastError


def baseline_seasonal_naive(values: np.ndarray, season: int) -> float:
    """Next value = the value one season ago (season=1 is persistence)."""
    values = np.asarray(values, dtype=np.float64)
    if season < 1:
        raise ForecastError("season must be >= 1")
    if values.size < season:
        raise ForecastError(f"need {season} frames of history, got {values.size}")
    return float(values[-season])


def baseline_moving_average(values: np.ndarray, window: int) -> float:
    """Next value = mean of the last ``window`` values."""
    values = np.asarray(values, dtype=np.float64)
    if window < 1:
        raise ForecastError("window must be >= 1")
    if values.size < window:
        raise ForecastError(f"need {window} frames of history, got {values.size}")
    return float(np.mean(values[-window:]))


def rolling_seasonal_naive(values: np.ndarray, season: int, start: int) -> np.ndarray:
    """One-step seasonal-naive predictions for indices [start, len)."""
    values = np.asarray(values, dtype=np.float64)
    if start < season:
        raise ForecastError("start index precedes available season history")
    return values[start - season : values.size - season].copy()


def rolling_moving_average(values: np.ndarray, window: int, start: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if start < window:
        raise ForecastError("start index precedes available window history")
    csum = np.concatenate(([0.0], np.cumsum(values)))
    ends = np.arange(start, values.size)
    return (csum[ends] - csum[ends - window]) / window
