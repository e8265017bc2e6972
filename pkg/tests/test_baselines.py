import numpy as np
import pytest

from oransim.forecast import ForecastError
from oransim.forecast.baselines import (
    baseline_moving_average,
    baseline_seasonal_naive,
    rolling_moving_average,
    rolling_seasonal_naive,
)


def test_constant_series():
    x = np.full(50, 42.0)
    assert baseline_seasonal_naive(x, 24) == 42.0
    assert baseline_moving_average(x, 12) == 42.0


def test_season_one_is_persistence():
    x = np.array([1.0, 5.0, 9.0])
    assert baseline_seasonal_naive(x, 1) == 9.0


def test_sinusoid_zero_residual_at_period():
    period = 24
    t = np.arange(96)
    x = np.sin(2 * np.pi * t / period)
    preds = rolling_seasonal_naive(x, period, start=period)
    assert np.max(np.abs(preds - x[period:])) <= 1e-12


def test_insufficient_history():
    with pytest.raises(ForecastError):
        baseline_seasonal_naive(np.ones(5), 10)
    with pytest.raises(ForecastError):
        baseline_moving_average(np.ones(3), 5)


def test_rolling_matches_pointwise():
    rng = np.random.default_rng(0)
    x = rng.normal(size=60)
    roll = rolling_moving_average(x, 8, start=20)
    point = [baseline_moving_average(x[:i], 8) for i in range(20, 60)]
    assert np.allclose(roll, point)
    roll_sn = rolling_seasonal_naive(x, 7, start=20)
    point_sn = [baseline_seasonal_naive(x[:i], 7) for i in range(20, 60)]
    assert np.allclose(roll_sn, point_sn)
