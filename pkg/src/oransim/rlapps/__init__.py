"""DQN machinery and the two RIC applications (steering xApp, sleeping rApp)."""

from .dqn import DqnAgent, DqnConfig, ReplayBuffer, RlError, Transition, td_targets
from .apps import SleepingApp, SleepingConfig, SteeringApp, SteeringConfig

__all__ = [
    "DqnAgent",
    "DqnConfig",
    "ReplayBuffer",
    "RlError",
    "SleepingApp",
    "SleepingConfig",
    "SteeringApp",
    "SteeringConfig",
    "Transition",
    "td_targets",
]
