"""Traffic-volume forecaster: series decomposition + auto-correlation attention."""

from .model import (
    AutoCorrConfig,
    Decomposition,
    ForecastError,
    ModelConfig,
    NonFiniteActivationError,
    TrafficAutoformer,
    autocorrelation,
    decompose,
    time_delay_aggregate,
)
from .training import DivergenceError, Forecaster, TrainConfig, train
from .baselines import baseline_moving_average, baseline_seasonal_naive

__all__ = [
    "AutoCorrConfig",
    "Decomposition",
    "DivergenceError",
    "ForecastError",
    "Forecaster",
    "ModelConfig",
    "NonFiniteActivationError",
    "TrafficAutoformer",
    "TrainConfig",
    "autocorrelation",
    "baseline_moving_average",
    "baseline_seasonal_naive",
    "decompose",
    "time_delay_aggregate",
    "train",
]
