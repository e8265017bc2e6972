"""Residual analysis, KPI summarization and scenario comparison reports.

Everything here is pure post-processing over exported CSVs and manifests:
any report number is recomputable from the raw files alone.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ArtifactError, OranSimError


class EvalError(OranSimError):
    pass


@dataclass
class ResidualSeries:
    e: np.ndarray
    source: str

    def __post_init__(self):
        self.e = np.asarray(self.e, dtype=np.float64)

    def stats(self) -> dict[str, float]:
        if self.e.size == 0:
            raise EvalError(f"residual series {self.source!r} is empty")
        return {
            "mean": float(np.mean(self.e)),
            "std": float(np.std(self.e)),
            "mae": float(np.mean(np.abs(self.e))),
            "rmse": float(np.sqrt(np.mean(self.e**2))),
        }


def residuals(y: np.ndarray, yhat: np.ndarray, source: str = "model") -> ResidualSeries:
    """e_t = y_t - yhat_t, order preserved."""
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise EvalError(f"length mismatch: {y.shape} vs {yhat.shape}")
    return ResidualSeries(y - yhat, source)


# ---------------------------------------------------------------------------
# run-directory readers
# ---------------------------------------------------------------------------


def read_manifest(run_dir: Path) -> dict:
    path = Path(run_dir) / "manifest.json"
    if not path.exists():
        raise ArtifactError(f"missing manifest {path}")
    return json.loads(path.read_text())


def read_kpi_csv(run_dir: Path) -> dict[str, np.ndarray]:
    path = Path(run_dir) / "kpi.csv"
    if not path.exists():
        raise ArtifactError(f"missing KPI log {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    if not rows:
        raise ArtifactError(f"{path} holds no frames")
    out: dict[str, np.ndarray] = {}
    for col in rows[0]:
        out[col] = np.asarray([float(r[col]) for r in rows])
    return out


def read_series_csv(run_dir: Path) -> np.ndarray:
    path = Path(run_dir) / "series.csv"
    if not path.exists():
        raise ArtifactError(f"missing series log {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return np.asarray([float(r["mbps"]) for r in reader])


def read_predictions_csv(run_dir: Path) -> dict[str, np.ndarray] | None:
    path = Path(run_dir) / "predictions.csv"
    if not path.exists():
        return None
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    if not rows:
        return None
    return {col: np.asarray([float(r[col]) for r in rows]) for col in rows[0]}


# ---------------------------------------------------------------------------
# mode comparison
# ---------------------------------------------------------------------------


@dataclass
class ModeAggregate:
    mode: str
    runs: int
    mean_throughput_mbps: float
    mean_ee_mbits_per_joule: float  # mean of per-frame EE values
    overall_ee_mbits_per_joule: float  # pooled delivered Mbit / consumed J
    mean_drop_rate: float
    mean_power_w: float


@dataclass
class ComparisonReport:
    aggregates: dict[str, ModeAggregate]
    residual_stats: dict[str, dict[str, float]]
    ee_delta_vs_always_steering: float | None
    throughput_delta_vs_always_sleeping: float | None
    volume_bins: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "aggregates": {m: vars(a) for m, a in self.aggregates.items()},
            "residual_stats": self.residual_stats,
            "ee_delta_vs_always_steering": self.ee_delta_vs_always_steering,
            "throughput_delta_vs_always_sleeping": self.throughput_delta_vs_always_sleeping,
            "volume_bins": self.volume_bins,
        }


def compare_modes(run_dirs: list[Path], volume_bin_mbps: float = 20.0) -> ComparisonReport:
    """Aggregate per-mode KPI logs and compute the cross-mode deltas.

    All runs must come from the same scenario (hash), duration and
    evaluation seed set; runs of the same mode (different seeds) pool.
    """
    if not run_dirs:
        raise EvalError("compare needs at least one run directory")
    manifests = {Path(d): read_manifest(Path(d)) for d in run_dirs}
    hashes = {m["scenario_hash"] for m in manifests.values()}
    durations = {m["duration_s"] for m in manifests.values()}
    if len(hashes) > 1 or len(durations) > 1:
        raise EvalError(
            f"mismatched scenarios: hashes={sorted(hashes)} durations={sorted(durations)}"
        )
    seeds_by_mode: dict[str, set] = {}
    for m in manifests.values():
        seeds_by_mode.setdefault(m["mode"], set()).add(m.get("eval_seed"))
    if len({frozenset(s) for s in seeds_by_mode.values()}) > 1:
        raise EvalError(f"modes evaluated on different seed sets: {seeds_by_mode}")

    by_mode: dict[str, list[Path]] = {}
    for d, m in manifests.items():
        by_mode.setdefault(m["mode"], []).append(d)

    aggregates: dict[str, ModeAggregate] = {}
    frames_by_mode: dict[str, dict[str, np.ndarray]] = {}
    for mode, dirs in sorted(by_mode.items()):
        kpis = [read_kpi_csv(d) for d in sorted(dirs)]
        pooled = {
            col: np.concatenate([k[col] for k in kpis]) for col in kpis[0]
        }
        offered = np.concatenate([read_series_csv(d) for d in sorted(dirs)])
        pooled["offered_mbps"] = offered
        frames_by_mode[mode] = pooled
        aggregates[mode] = ModeAggregate(
            mode=mode,
            runs=len(dirs),
            mean_throughput_mbps=float(np.mean(pooled["throughput_mbps"])),
            mean_ee_mbits_per_joule=float(np.mean(pooled["ee_mbits_per_joule"])),
            # frame length cancels in (sum tput * F) / (sum power * F)
            overall_ee_mbits_per_joule=float(
                np.sum(pooled["throughput_mbps"]) / np.sum(pooled["power_w"])
            ),
            mean_drop_rate=float(np.mean(pooled["drop_rate"])),
            mean_power_w=float(np.mean(pooled["power_w"])),
        )

    residual_stats: dict[str, dict[str, float]] = {}
    for mode, dirs in by_mode.items():
        for d in sorted(dirs):
            preds = read_predictions_csv(d)
            if preds is None:
                continue
            actual = preds["actual_mbps"]
            finite_naive = np.isfinite(preds["naive_mbps"])
            residual_stats.setdefault(
                "forecaster", residuals(actual, preds["predicted_mbps"], "forecaster").stats()
            )
            if finite_naive.any():
                residual_stats.setdefault(
                    "seasonal_naive",
                    residuals(actual[finite_naive], preds["naive_mbps"][finite_naive],
                              "seasonal_naive").stats(),
                )
            residual_stats.setdefault(
                "moving_average",
                residuals(actual, preds["moving_avg_mbps"], "moving_average").stats(),
            )
            break

    def delta(mode_a: str, mode_b: str, attr: str) -> float | None:
        if mode_a not in aggregates or mode_b not in aggregates:
            return None
        a = getattr(aggregates[mode_a], attr)
        b = getattr(aggregates[mode_b], attr)
        return (a - b) / b if b else math.inf

    report = ComparisonReport(
        aggregates=aggregates,
        residual_stats=residual_stats,
        ee_delta_vs_always_steering=delta(
            "proposed", "always_steering", "overall_ee_mbits_per_joule"
        ),
        throughput_delta_vs_always_sleeping=delta(
            "proposed", "always_sleeping", "mean_throughput_mbps"
        ),
        volume_bins=_volume_bins(frames_by_mode, volume_bin_mbps),
    )
    return report


def _volume_bins(frames_by_mode: dict[str, dict[str, np.ndarray]], width: float) -> list[dict]:
    """Per-mode mean throughput/EE binned by offered volume (the Fig. 7/8 axes)."""
    if not frames_by_mode:
        return []
    lo = min(float(v["offered_mbps"].min()) for v in frames_by_mode.values())
    hi = max(float(v["offered_mbps"].max()) for v in frames_by_mode.values())
    if not np.isfinite([lo, hi]).all() or hi <= lo:
        return []
    edges = np.arange(math.floor(lo / width) * width, hi + width, width)
    rows = []
    for i in range(len(edges) - 1):
        row: dict = {"volume_mbps": float((edges[i] + edges[i + 1]) / 2.0)}
        any_mode = False
        for mode, pooled in sorted(frames_by_mode.items()):
            mask = (pooled["offered_mbps"] >= edges[i]) & (pooled["offered_mbps"] < edges[i + 1])
            if mask.any():
                any_mode = True
                row[f"throughput_{mode}"] = float(np.mean(pooled["throughput_mbps"][mask]))
                row[f"ee_{mode}"] = float(np.mean(pooled["ee_mbits_per_joule"][mask]))
        if any_mode:
            rows.append(row)
    return rows


def render_report_text(report: ComparisonReport) -> str:
    lines = ["scenario comparison", "=" * 19, ""]
    for mode, agg in sorted(report.aggregates.items()):
        lines.append(
            f"{mode:>16}: runs={agg.runs}  throughput={agg.mean_throughput_mbps:.3f} Mbps  "
            f"ee={agg.overall_ee_mbits_per_joule:.4f} Mbit/J "
            f"(frame mean {agg.mean_ee_mbits_per_joule:.4f})  "
            f"drop={agg.mean_drop_rate:.4f}  power={agg.mean_power_w:.1f} W"
        )
    lines.append("")
    if report.ee_delta_vs_always_steering is not None:
        lines.append(
            "energy efficiency, proposed vs always-steering: "
            f"{report.ee_delta_vs_always_steering * 100.0:+.2f}%"
        )
    if report.throughput_delta_vs_always_sleeping is not None:
        lines.append(
            "throughput, proposed vs always-sleeping: "
            f"{report.throughput_delta_vs_always_sleeping * 100.0:+.2f}%"
        )
    if report.residual_stats:
        lines.append("")
        lines.append("one-step residuals on the evaluation day:")
        for name, stats in sorted(report.residual_stats.items()):
            lines.append(
                f"{name:>16}: mean={stats['mean']:+.3f}  std={stats['std']:.3f}  "
                f"mae={stats['mae']:.3f}  rmse={stats['rmse']:.3f}"
            )
    return "\n".join(lines) + "\n"


def write_report(report: ComparisonReport, out_dir: Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.txt").write_text(render_report_text(report))
    (out_dir / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    with open(out_dir / "aggregates.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mode", "runs", "mean_throughput_mbps", "mean_ee_mbits_per_joule",
                         "overall_ee_mbits_per_joule", "mean_drop_rate", "mean_power_w"])
        for mode, a in sorted(report.aggregates.items()):
            writer.writerow([mode, a.runs, repr(a.mean_throughput_mbps),
                             repr(a.mean_ee_mbits_per_joule),
                             repr(a.overall_ee_mbits_per_joule), repr(a.mean_drop_rate),
                             repr(a.mean_power_w)])
    if report.volume_bins:
        cols = sorted({k for row in report.volume_bins for k in row})
        cols.remove("volume_mbps")
        cols = ["volume_mbps"] + cols
        with open(out_dir / "volume_bins.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for row in report.volume_bins:
                writer.writerow([repr(row[c]) if c in row else "" for c in cols])
    try:
        from .figures import comparison_figure

        comparison_figure(report, out_dir / "comparison.png")
    except Exception:
        pass
    return out_dir


def read_decision_log(run_dir: Path) -> list[dict]:
    path = Path(run_dir) / "decision_log.csv"
    if not path.exists():
        raise ArtifactError(f"missing decision log {path}")
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def audit_decision_log(run_dir: Path) -> dict[str, int]:
    """Post-hoc verification of the orchestration constraints.

    Checks, from the log alone: S + V <= 1 on every frame, and that each
    frame's activation state matches its logged prediction against the
    logged thresholds with the one-frame lead already applied.
    """
    rows = read_decision_log(run_dir)
    violations = 0
    mismatches = 0
    for row in rows:
        s, v = int(row["S"]), int(row["V"])
        if s + v > 1:
            violations += 1
        t_p = row["t_p_mbps"]
        if t_p == "":
            if s or v:
                mismatches += 1
            continue
        t_p_val = float(t_p)
        th_p, th_t = float(row["th_p_mbps"]), float(row["th_t_mbps"])
        if s and not t_p_val > th_p:
            mismatches += 1
        if v and not t_p_val < th_t:
            mismatches += 1
    return {"frames": len(rows), "sv_violations": violations, "lead_mismatches": mismatches}
