"""Measurement aggregation and pre-processing for the forecaster.

Per-TTI traffic samples are summed into per-frame volumes S(T) in Mbps,
smoothed with a Savitzky-Golay filter (which preserves peak width/height
better than a plain moving average), and cut into many-to-one windows.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import OranSimError


class PipelineError(OranSimError):
    pass


@dataclass
class AggregateSeries:
    """Uniformly spaced per-frame traffic volume in Mbps."""

    frame_length_ms: float
    values: np.ndarray
    origin_time_s: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise PipelineError("series must be one-dimensional")
        if self.values.size and not np.all(np.isfinite(self.values)):
            raise PipelineError("series values must be finite")

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class SgFilterConfig:
    window: int = 11
    poly_order: int = 3

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise PipelineError("SG window must be an odd integer >= 3")
        if self.poly_order < 0 or self.poly_order >= self.window:
            raise PipelineError("SG poly_order must satisfy 0 <= order < window")


def aggregate(
    tti_samples_mbit: np.ndarray,
    frame_length_ms: float,
    tti_ms: float = 1.0,
    origin_time_s: float = 0.0,
) -> AggregateSeries:
    """Sum per-TTI traffic (Mbit) into per-frame volume, reported in Mbps.

    A ragged final frame is truncated; the number of dropped TTIs is
    reported on the returned series as ``truncated_ttis``.
    """
    samples = np.asarray(tti_samples_mbit, dtype=np.float64)
    ratio = frame_length_ms / tti_ms
    per_frame = int(round(ratio))
    if per_frame < 1 or abs(ratio - per_frame) > 1e-9:
        raise PipelineError("frame_length must be a positive multiple of the TTI length")
    n_frames = samples.size // per_frame
    leftover = int(samples.size - n_frames * per_frame)
    trimmed = samples[: n_frames * per_frame].reshape(n_frames, per_frame)
    mbps = trimmed.sum(axis=1) / (frame_length_ms / 1000.0)
    series = AggregateSeries(frame_length_ms, mbps, origin_time_s)
    series.truncated_ttis = leftover  # type: ignore[attr-defined]
    return series


def savgol_coeffs(window: int, poly_order: int) -> np.ndarray:
    """Centered least-squares smoothing coefficients for one output point.

    Fitting a degree-``poly_order`` polynomial to the window and evaluating
    it at the center is a fixed linear combination of the window samples;
    the coefficients are the first row of the Vandermonde pseudo-inverse.
    """
    half = window // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    vander = np.vander(x, poly_order + 1, increasing=True)  # (window, order+1)
    # value of the fitted polynomial at x=0 is coefficient 0 of the fit
    return np.linalg.pinv(vander)[0]


def smooth(series: AggregateSeries, cfg: SgFilterConfig) -> AggregateSeries:
    """Savitzky-Golay smoothing with mirror padding at both edges."""
    x = series.values
    if x.size < cfg.window:
        raise PipelineError(
            f"series length {x.size} shorter than SG window {cfg.window}"
        )
    half = cfg.window // 2
    padded = np.pad(x, half, mode="reflect")
    coeffs = savgol_coeffs(cfg.window, cfg.poly_order)
    out = np.convolve(padded, coeffs[::-1], mode="valid")
    return AggregateSeries(series.frame_length_ms, out, series.origin_time_s)


def smooth_values(values: np.ndarray, cfg: SgFilterConfig) -> np.ndarray:
    """Array-level convenience wrapper around :func:`smooth`."""
    return smooth(AggregateSeries(1000.0, np.asarray(values, dtype=np.float64)), cfg).values


@dataclass
class WindowedDataset:
    """Sliding input windows with next-step targets, z-scored on the train split.

    ``inputs``/``targets`` are stored in normalized units; ``n_train`` pairs
    at the front form the chronological training split (targets of training
    pairs never cross the split boundary).
    """

    inputs: np.ndarray  # (N, L), normalized
    targets: np.ndarray  # (N, horizon), normalized
    norm_mean: float
    norm_std: float
    input_len: int
    horizon: int
    n_train: int

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.norm_mean) / self.norm_std

    def denormalize(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) * self.norm_std + self.norm_mean


def make_windows(
    series: AggregateSeries | np.ndarray,
    input_len: int,
    horizon: int = 1,
    train_frac: float = 1.0,
) -> WindowedDataset:
    values = series.values if isinstance(series, AggregateSeries) else np.asarray(series, float)
    n = values.size
    if n < input_len + horizon:
        raise PipelineError(
            f"need at least {input_len + horizon} frames, got {n}"
        )
    if not 0.0 < train_frac <= 1.0:
        raise PipelineError("train_frac must lie in (0, 1]")
    split = int(np.floor(n * train_frac))
    split = max(split, input_len + horizon)  # guarantee at least one training pair
    train_region = values[:split]
    mean = float(np.mean(train_region))
    std = float(np.std(train_region))
    if std <= 0.0:
        raise PipelineError("training split has zero variance; cannot normalize")
    n_pairs = n - input_len - horizon + 1
    idx = np.arange(n_pairs)
    inputs = np.lib.stride_tricks.sliding_window_view(values, input_len)[:n_pairs]
    targets = np.stack([values[i + input_len : i + input_len + horizon] for i in idx])
    n_train = int(np.sum(idx + input_len + horizon <= split))
    return WindowedDataset(
        inputs=(inputs - mean) / std,
        targets=(targets - mean) / std,
        norm_mean=mean,
        norm_std=std,
        input_len=input_len,
        horizon=horizon,
        n_train=n_train,
    )


def series_to_csv(series: AggregateSeries, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame_index", "mbps"])
        for i, v in enumerate(series.values):
            writer.writerow([i, repr(float(v))])


def series_from_csv(path: str | Path, frame_length_ms: float = 1000.0) -> AggregateSeries:
    path = Path(path)
    if not path.exists():
        raise PipelineError(f"series file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["frame_index", "mbps"]:
            raise PipelineError(f"{path}: expected header 'frame_index,mbps'")
        values = [float(row[1]) for row in reader]
    return AggregateSeries(frame_length_ms, np.asarray(values))
