"""Decomposition + auto-correlation forecaster in the Autoformer style.

The series is progressively split into a moving-average trend and a seasonal
remainder; attention over time is replaced by circular auto-correlation
(computed via FFT, Wiener-Khinchin) that scores lags, keeps the top-k, and
aggregates rolled copies of the values with softmax weights. The encoder
refines the seasonal part; the single decoder layer accumulates trend
components on top of the trend extracted from the input window.

Everything runs in float64: this is a desk-scale model where exactness of
the gradient and bit-reproducibility matter more than speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .. import OranSimError


class ForecastError(OranSimError):
    pass


class NonFiniteActivationError(ForecastError):
    def __init__(self, layer: str):
        super().__init__(f"non-finite activation in {layer}")
        self.layer = layer


def _check_finite(t: torch.Tensor, layer: str) -> torch.Tensor:
    if not bool(torch.isfinite(t).all()):
        raise NonFiniteActivationError(layer)
    return t


# ---------------------------------------------------------------------------
# series-level operations (numpy, 1-D) -- these define the reference
# semantics that the batched torch blocks below must agree with
# ---------------------------------------------------------------------------


@dataclass
class Decomposition:
    seasonal: np.ndarray
    trend: np.ndarray


def moving_average_trend(x: np.ndarray, kernel: int) -> np.ndarray:
    """Length-preserving moving average with end-replication padding."""
    x = np.asarray(x, dtype=np.float64)
    if kernel % 2 == 0 or kernel < 1:
        raise ForecastError("moving-average kernel must be odd and positive")
    if kernel > x.size:
        raise ForecastError(f"kernel {kernel} exceeds series length {x.size}")
    half = kernel // 2
    padded = np.pad(x, half, mode="edge")
    csum = np.concatenate(([0.0], np.cumsum(padded)))
    return (csum[kernel:] - csum[:-kernel]) / kernel


def decompose(x: np.ndarray, ma_kernel: int) -> Decomposition:
    """Split into trend (moving average) and seasonal = x - trend."""
    x = np.asarray(x, dtype=np.float64)
    trend = moving_average_trend(x, ma_kernel)
    return Decomposition(seasonal=x - trend, trend=trend)


def autocorrelation(q: np.ndarray, k_series: np.ndarray) -> np.ndarray:
    """Circular lag correlation R[tau] = (1/L) sum_t q[t] * k[(t - tau) mod L].

    Computed in the frequency domain: forward transform both series,
    multiply by the conjugate, invert.
    """
    q = np.asarray(q, dtype=np.float64)
    k_series = np.asarray(k_series, dtype=np.float64)
    if q.shape != k_series.shape or q.ndim != 1:
        raise ForecastError("autocorrelation needs two equal-length 1-D series")
    L = q.size
    if L < 2:
        raise ForecastError("series length must be >= 2")
    fq = np.fft.rfft(q)
    fk = np.fft.rfft(k_series)
    return np.fft.irfft(fq * np.conj(fk), n=L) / L


@dataclass(frozen=True)
class AutoCorrConfig:
    """Number of retained lags grows logarithmically with series length."""

    rho: float = 2.0

    def k(self, length: int) -> int:
        k = max(1, int(math.floor(self.rho * math.log(length))))
        return min(k, length - 1)


def time_delay_aggregate(values: np.ndarray, scores: np.ndarray, cfg: AutoCorrConfig) -> np.ndarray:
    """Softmax-weighted sum of the top-k lag-rolled copies of ``values``.

    Ties in the score break toward the lowest lag index.
    """
    values = np.asarray(values, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    if values.shape != scores.shape or values.ndim != 1:
        raise ForecastError("values and scores must be equal-length 1-D arrays")
    k = cfg.k(values.size)
    order = np.argsort(-scores, kind="stable")[:k]
    sel = scores[order]
    w = np.exp(sel - sel.max())
    w /= w.sum()
    out = np.zeros_like(values)
    for weight, lag in zip(w, order):
        out += weight * np.roll(values, int(lag))
    return out


# ---------------------------------------------------------------------------
# torch blocks
# ---------------------------------------------------------------------------


@dataclass
class ModelConfig:
    input_len: int = 96
    horizon: int = 1
    d_model: int = 32
    heads: int = 2
    encoder_layers: int = 2
    decoder_layers: int = 1
    ma_kernel: int = 25
    d_ff: int = 64
    rho: float = 2.0
    label_len: int | None = None  # decoder warm-start length, default input_len // 2
    use_positional: bool = True
    circular: bool = False  # circular decomposition + wrap-around readout

    def __post_init__(self):
        if self.d_model % self.heads != 0:
            raise ForecastError("d_model must be divisible by heads")
        if self.ma_kernel % 2 == 0:
            raise ForecastError("ma_kernel must be odd")
        if self.horizon < 1:
            raise ForecastError("horizon must be >= 1")
        if self.circular and self.use_positional:
            raise ForecastError("circular mode requires use_positional=False")
        if self.label_len is None:
            self.label_len = max(self.input_len // 2, 1)


class SeriesDecomp(nn.Module):
    """Moving-average trend extraction preserving sequence length."""

    def __init__(self, kernel: int, circular: bool = False):
        super().__init__()
        self.kernel = kernel
        self.mode = "circular" if circular else "replicate"

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        # x: (B, L, D)
        if self.kernel > x.shape[1]:
            raise ForecastError(
                f"ma_kernel {self.kernel} exceeds sequence length {x.shape[1]}"
            )
        half = self.kernel // 2
        xc = x.permute(0, 2, 1)  # (B, D, L)
        padded = F.pad(xc, (half, half), mode=self.mode)
        trend = F.avg_pool1d(padded, kernel_size=self.kernel, stride=1)
        trend = trend.permute(0, 2, 1)
        return x - trend, trend


class AutoCorrelationBlock(nn.Module):
    """Multi-head lag attention: score lags via FFT correlation, roll + mix."""

    def __init__(self, d_model: int, heads: int, rho: float):
        super().__init__()
        self.heads = heads
        self.d_head = d_model // heads
        self.corr_cfg = AutoCorrConfig(rho)
        self.w_q = nn.Linear(d_model, d_model)
        self.w_k = nn.Linear(d_model, d_model)
        self.w_v = nn.Linear(d_model, d_model)
        self.w_o = nn.Linear(d_model, d_model)

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        B, L, _ = x.shape
        return x.view(B, L, self.heads, self.d_head).permute(0, 2, 3, 1)  # (B,H,dh,L)

    def forward(self, query: torch.Tensor, key: torch.Tensor, value: torch.Tensor) -> torch.Tensor:
        B, L, D = query.shape
        Lk = key.shape[1]
        if Lk > L:  # align cross inputs on the most recent L positions
            key = key[:, -L:, :]
            value = value[:, -L:, :]
        elif Lk < L:
            pad = query.new_zeros(B, L - Lk, D)
            key = torch.cat([key, pad], dim=1)
            value = torch.cat([value, pad], dim=1)
        q = self._split(self.w_q(query))
        k = self._split(self.w_k(key))
        v = self._split(self.w_v(value))
        fq = torch.fft.rfft(q, dim=-1)
        fk = torch.fft.rfft(k, dim=-1)
        corr = torch.fft.irfft(fq * torch.conj(fk), n=L, dim=-1) / L  # (B,H,dh,L)
        scores = corr.mean(dim=2)  # (B,H,L)
        n_lags = self.corr_cfg.k(L)
        # selection-only bias so exact score ties (e.g. the +-tau symmetry of
        # periodic inputs) break toward the lowest lag instead of fp jitter
        scale = scores.detach().abs().amax(dim=-1, keepdim=True).clamp_min(1.0)
        tie_bias = torch.arange(L, device=scores.device, dtype=scores.dtype).view(1, 1, L)
        sel = scores.detach() - tie_bias * (1e-9 / L) * scale
        top_lags = torch.topk(sel, n_lags, dim=-1).indices  # (B,H,k)
        top_scores = torch.gather(scores, -1, top_lags)
        weights = torch.softmax(top_scores, dim=-1)
        idx = torch.arange(L, device=query.device).view(1, 1, 1, L)
        gather_idx = (idx - top_lags.unsqueeze(-1)) % L  # (B,H,k,L): roll(v, lag)
        v_exp = v.unsqueeze(2).expand(B, self.heads, n_lags, self.d_head, L)
        rolled = torch.gather(
            v_exp, 4, gather_idx.unsqueeze(3).expand(B, self.heads, n_lags, self.d_head, L)
        )
        out = (rolled * weights.view(B, self.heads, n_lags, 1, 1)).sum(dim=2)
        out = out.permute(0, 3, 1, 2).reshape(B, L, D)
        return self.w_o(out)


class FeedForward(nn.Module):
    def __init__(self, d_model: int, d_ff: int):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(d_model, d_ff), nn.ReLU(), nn.Linear(d_ff, d_model))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class EncoderLayer(nn.Module):
    """Auto-correlation -> decompose -> feed-forward -> decompose.

    Only the seasonal part is propagated; trends removed here belong to the
    slow component the decoder re-assembles from the raw input window.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.attn = AutoCorrelationBlock(cfg.d_model, cfg.heads, cfg.rho)
        self.decomp1 = SeriesDecomp(cfg.ma_kernel, cfg.circular)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff)
        self.decomp2 = SeriesDecomp(cfg.ma_kernel, cfg.circular)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x, _ = self.decomp1(x + self.attn(x, x, x))
        x, _ = self.decomp2(x + self.ff(x))
        return x


class DecoderLayer(nn.Module):
    """Self and cross auto-correlation with per-stage trend extraction."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.self_attn = AutoCorrelationBlock(cfg.d_model, cfg.heads, cfg.rho)
        self.cross_attn = AutoCorrelationBlock(cfg.d_model, cfg.heads, cfg.rho)
        self.decomp1 = SeriesDecomp(cfg.ma_kernel, cfg.circular)
        self.decomp2 = SeriesDecomp(cfg.ma_kernel, cfg.circular)
        self.decomp3 = SeriesDecomp(cfg.ma_kernel, cfg.circular)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff)

    def forward(self, x: torch.Tensor, memory: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        x, t1 = self.decomp1(x + self.self_attn(x, x, x))
        x, t2 = self.decomp2(x + self.cross_attn(x, memory, memory))
        x, t3 = self.decomp3(x + self.ff(x))
        return x, t1 + t2 + t3


class TrafficAutoformer(nn.Module):
    """One-step (or short-horizon) aggregate traffic forecaster.

    Input: normalized window (B, input_len). Output: (B, horizon) in the
    same normalized units. In ``circular`` mode the decoder consumes the
    full window and readout wraps around, making the whole model exactly
    equivariant to circular shifts of the input (every block is pointwise,
    a circular moving average, or a circular correlation).
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.value_embed = nn.Linear(1, cfg.d_model)
        if cfg.use_positional:
            self.pos_enc = nn.Parameter(torch.empty(cfg.input_len, cfg.d_model))
            self.pos_dec = nn.Parameter(torch.empty(cfg.label_len + cfg.horizon, cfg.d_model))
            nn.init.uniform_(self.pos_enc, -0.05, 0.05)
            nn.init.uniform_(self.pos_dec, -0.05, 0.05)
        self.input_decomp = SeriesDecomp(cfg.ma_kernel, cfg.circular)
        self.encoder_layers = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.encoder_layers))
        self.encoder_norm = nn.LayerNorm(cfg.d_model)
        self.decoder_layers = nn.ModuleList(DecoderLayer(cfg) for _ in range(cfg.decoder_layers))
        self.decoder_norm = nn.LayerNorm(cfg.d_model)
        self.head = nn.Linear(cfg.d_model, 1)
        self.double()
        self._calibrate_head()

    def _calibrate_head(self) -> None:
        """Start the head as the pseudo-inverse of the value embedding.

        The accumulated trend is an affine image of the input level, so this
        makes the untrained model a smoothed-persistence predictor with unit
        gain instead of a mean-regressor; training refines from there.
        """
        with torch.no_grad():
            w = self.value_embed.weight.view(-1)  # (D,)
            b = self.value_embed.bias
            inv = w / torch.dot(w, w)
            self.head.weight.copy_(inv.view(1, -1))
            self.head.bias.copy_(-(inv * b).sum().view(1))

    def param_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def forward(self, window: torch.Tensor) -> torch.Tensor:
        cfg = self.cfg
        if window.dim() == 1:
            window = window.unsqueeze(0)
        B, L = window.shape
        if L != cfg.input_len:
            raise ForecastError(f"window length {L} != configured input_len {cfg.input_len}")
        x = window.to(torch.float64).unsqueeze(-1)  # (B, L, 1)
        emb = self.value_embed(x)
        enc_in = emb + self.pos_enc if cfg.use_positional else emb
        _check_finite(enc_in, "value_embedding")

        h = enc_in
        for i, layer in enumerate(self.encoder_layers):
            h = _check_finite(layer(h), f"encoder_layer_{i}")
        memory = self.encoder_norm(h)

        seasonal_full, trend_full = self.input_decomp(emb)
        if cfg.circular:
            dec_in = seasonal_full
            trend_acc = trend_full
        else:
            label = min(cfg.label_len, L)
            zeros = emb.new_zeros(B, cfg.horizon, cfg.d_model)
            dec_in = torch.cat([seasonal_full[:, -label:, :], zeros], dim=1)
            trend_mean = trend_full.mean(dim=1, keepdim=True).expand(B, cfg.horizon, cfg.d_model)
            trend_acc = torch.cat([trend_full[:, -label:, :], trend_mean], dim=1)
            if cfg.use_positional:
                dec_in = dec_in + self.pos_dec

        s = dec_in
        for i, layer in enumerate(self.decoder_layers):
            s, trend_part = layer(s, memory)
            _check_finite(s, f"decoder_layer_{i}")
            trend_acc = trend_acc + trend_part

        hidden = self.decoder_norm(s) + trend_acc
        out = self.head(hidden).squeeze(-1)  # (B, L_dec)
        _check_finite(out, "output_head")
        if cfg.circular:
            # position after the last input index wraps to 0
            idx = [(i % L) for i in range(cfg.horizon)]
            return out[:, idx]
        return out[:, -cfg.horizon :]


def build_model(cfg: ModelConfig, seed: int = 0) -> TrafficAutoformer:
    """Construct with a fixed torch seed so initialization is reproducible."""
    torch.manual_seed(seed)
    return TrafficAutoformer(cfg)
