"""Matplotlib renderings saved next to the delimited report files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def residual_figure(residual_sets: dict[str, np.ndarray], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 3.2))
    for name, e in sorted(residual_sets.items()):
        ax.plot(np.arange(len(e)), e, lw=0.7, alpha=0.8, label=name)
    ax.axhline(0.0, color="k", lw=0.5)
    ax.set_xlabel("frame")
    ax.set_ylabel("residual (Mbps)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def sweep_figure(rows: list[tuple], path: Path) -> None:
    """EE bars with the drop rate on a twin axis, one group per volume."""
    volumes = [r[0] for r in rows]
    ee = [r[2] for r in rows]
    drop = [r[3] for r in rows]
    fig, ax = plt.subplots(figsize=(6.5, 3.4))
    x = np.arange(len(volumes))
    ax.bar(x, ee, width=0.55, color="#43a2ca", label="energy efficiency")
    ax.set_xticks(x, [f"{v:.0f}" for v in volumes])
    ax.set_xlabel("traffic volume (Mbps)")
    ax.set_ylabel("Mbit/J")
    ax2 = ax.twinx()
    ax2.plot(x, drop, "o-", color="#e34a33", label="drop rate")
    ax2.set_ylabel("drop rate")
    ax2.set_ylim(bottom=0.0)
    handles1, labels1 = ax.get_legend_handles_labels()
    handles2, labels2 = ax2.get_legend_handles_labels()
    ax.legend(handles1 + handles2, labels1 + labels2, fontsize=8, loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def comparison_figure(report, path: Path) -> None:
    """Throughput and EE versus binned traffic volume, one line per mode."""
    bins = report.volume_bins
    if not bins:
        return
    modes = sorted(
        {k.split("_", 1)[1] for row in bins for k in row if k.startswith("throughput_")}
    )
    vols = [row["volume_mbps"] for row in bins]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.4))
    for mode in modes:
        tput = [row.get(f"throughput_{mode}", np.nan) for row in bins]
        ee = [row.get(f"ee_{mode}", np.nan) for row in bins]
        ax1.plot(vols, tput, "o-", ms=3, label=mode)
        ax2.plot(vols, ee, "o-", ms=3, label=mode)
    ax1.set_xlabel("traffic volume (Mbps)")
    ax1.set_ylabel("throughput (Mbps)")
    ax2.set_xlabel("traffic volume (Mbps)")
    ax2.set_ylabel("energy efficiency (Mbit/J)")
    ax1.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
