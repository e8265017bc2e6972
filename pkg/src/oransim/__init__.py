"""Desk-scale O-RAN network optimization simulator.

Generates diurnal multi-class cellular traffic over a macro + small-cell
deployment, forecasts aggregate volume with a decomposition/auto-correlation
transformer, and orchestrates a DQN traffic-steering xApp or cell-sleeping
rApp through traffic-volume thresholds under a mutual-exclusion constraint.
"""

__version__ = "0.1.0"


class OranSimError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(OranSimError):
    """Invalid or unknown configuration content."""


class ArtifactError(OranSimError):
    """A required stage artifact is missing or inconsistent."""
