"""Forecaster training loop, prediction wrapper and checkpoint format."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from ..pipeline import AggregateSeries, SgFilterConfig, WindowedDataset, smooth_values
from ..seeding import derive_rng
from .model import ForecastError, ModelConfig, TrafficAutoformer, build_model

CHECKPOINT_FORMAT = 1


class DivergenceError(ForecastError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 32
    epochs: int = 60
    seed: int = 0
    grad_clip: float = 5.0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ForecastError("learning_rate must be >= 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ForecastError("batch_size and epochs must be positive")


def train(
    model: TrafficAutoformer,
    dataset: WindowedDataset,
    cfg: TrainConfig,
) -> list[float]:
    """Mini-batch MSE minimization with Adam; returns per-epoch mean loss.

    Batch order is reshuffled each epoch from a seeded stream, so a given
    (model seed, train seed, dataset) triple is bit-reproducible. Training
    aborts if the loss explodes past 1000x its initial value.
    """
    n = dataset.n_train
    if n < 1:
        raise ForecastError("dataset has no training pairs")
    inputs = torch.from_numpy(np.ascontiguousarray(dataset.inputs[:n]))
    targets = torch.from_numpy(np.ascontiguousarray(dataset.targets[:n]))
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    shuffle_rng = derive_rng(cfg.seed, "forecast-shuffle")
    history: list[float] = []
    initial_loss = None
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            xb = inputs[batch]
            yb = targets[batch]
            optimizer.zero_grad()
            pred = model(xb)
            loss = torch.mean((pred - yb) ** 2)
            loss.backward()
            if cfg.grad_clip and cfg.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
            optimizer.step()
            value = float(loss.detach())
            loss_sum += value * len(batch)
            if initial_loss is None:
                initial_loss = max(value, 1e-12)
            if not np.isfinite(value) or value > 1e3 * initial_loss:
                raise DivergenceError(
                    f"training diverged at epoch {epoch}: loss {value:.3e} "
                    f"vs initial {initial_loss:.3e}"
                )
        history.append(loss_sum / n)
    for name, p in model.named_parameters():
        if not bool(torch.isfinite(p).all()):
            raise DivergenceError(f"non-finite parameter after training: {name}")
    return history


def write_loss_history(history: list[float], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mse"])
        for i, v in enumerate(history):
            writer.writerow([i, format(v, ".9g")])


class Forecaster:
    """Trained model plus the normalization and smoothing it was fitted with."""

    def __init__(
        self,
        model: TrafficAutoformer,
        norm_mean: float,
        norm_std: float,
        sg: SgFilterConfig | None = None,
        trained: bool = False,
    ):
        self.model = model
        self.norm_mean = float(norm_mean)
        self.norm_std = float(norm_std)
        self.sg = sg
        self.trained = trained
        self.history: list[float] = []

    @property
    def input_len(self) -> int:
        return self.model.cfg.input_len

    def fit(self, dataset: WindowedDataset, cfg: TrainConfig) -> list[float]:
        self.norm_mean = dataset.norm_mean
        self.norm_std = dataset.norm_std
        self.history = train(self.model, dataset, cfg)
        self.trained = True
        return self.history

    def predict_batch(self, windows_mbps: np.ndarray) -> np.ndarray:
        """Predictions in Mbps for raw (unnormalized) windows, shape (N, L)."""
        if not self.trained:
            raise ForecastError("forecaster is untrained; call fit() or load a checkpoint")
        w = (np.asarray(windows_mbps, dtype=np.float64) - self.norm_mean) / self.norm_std
        with torch.no_grad():
            out = self.model(torch.from_numpy(w)).numpy()
        return out * self.norm_std + self.norm_mean

    def predict_next(self, recent: AggregateSeries | np.ndarray) -> float:
        """One-step-ahead volume from the most recent ``input_len`` frames.

        When a smoothing config is attached, the trailing window is smoothed
        (mirror padding at the live edge) the same way the training series
        was, so the model sees the distribution it was fitted on.
        """
        values = recent.values if isinstance(recent, AggregateSeries) else np.asarray(recent)
        if values.size < self.input_len:
            raise ForecastError(
                f"need at least {self.input_len} recent frames, got {values.size}"
            )
        tail = values[-(self.input_len + (self.sg.window if self.sg else 0)) :]
        if self.sg is not None and tail.size >= self.sg.window:
            tail = smooth_values(tail, self.sg)
        window = tail[-self.input_len :]
        return float(self.predict_batch(window[None, :])[0, 0])

    def save(self, path: str | Path) -> None:
        payload = {
            "format": CHECKPOINT_FORMAT,
            "model_config": asdict(self.model.cfg),
            "state_dict": self.model.state_dict(),
            "norm_mean": self.norm_mean,
            "norm_std": self.norm_std,
            "sg": asdict(self.sg) if self.sg else None,
            "trained": self.trained,
            "history": self.history,
        }
        torch.save(payload, path)

    @classmethod
    def load(cls, path: str | Path) -> "Forecaster":
        path = Path(path)
        if not path.exists():
            raise ForecastError(f"forecaster checkpoint not found: {path}")
        payload = torch.load(path, weights_only=False)
        if payload.get("format") != CHECKPOINT_FORMAT:
            raise ForecastError(f"unsupported checkpoint format in {path}")
        model = TrafficAutoformer(ModelConfig(**payload["model_config"]))
        model.load_state_dict(payload["state_dict"])
        sg = SgFilterConfig(**payload["sg"]) if payload.get("sg") else None
        fc = cls(model, payload["norm_mean"], payload["norm_std"], sg, payload["trained"])
        fc.history = list(payload.get("history", []))
        return fc


def new_forecaster(
    model_cfg: ModelConfig,
    seed: int = 0,
    sg: SgFilterConfig | None = None,
) -> Forecaster:
    return Forecaster(build_model(model_cfg, seed), norm_mean=0.0, norm_std=1.0, sg=sg)
