"""Command-line entry point.

Subcommands map to the pipeline stages; every stage is runnable on its own
against a run directory produced by the earlier stages. Configuration comes
from --config (YAML), with ORANSIM_SECTION__KEY environment overrides and
the --mode/--seed/--duration flags applied on top.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import OranSimError
from .config import RunConfig, RunMode, ci_config, load_config, save_config
from .evalkit import compare_modes, read_predictions_csv, residuals, write_report
from .runner import (
    stage_evaluate,
    stage_replay,
    stage_run,
    stage_simulate,
    stage_sweep,
    stage_train_apps,
    stage_train_forecaster,
)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None, help="YAML run configuration")
    p.add_argument("--preset", choices=["default", "ci"], default=None,
                   help="start from a built-in configuration instead of defaults")
    p.add_argument("--mode", default=None,
                   help="proposed | always_steering | always_sleeping | noapp")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--duration", type=float, default=None, help="simulated seconds")
    p.add_argument("--out", type=Path, required=True, help="run/artifact directory")


def _resolve_config(args) -> RunConfig:
    if args.config is not None:
        cfg = load_config(args.config)
    elif args.preset == "ci":
        cfg = ci_config()
    else:
        cfg = load_config(None)  # defaults + env overrides
    if args.mode is not None:
        cfg.mode = args.mode
        cfg.run_mode()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.duration is not None:
        cfg.duration_s = args.duration
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oransim",
        description="prediction-led O-RAN xApp/rApp orchestration simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in [
        ("run", "full pipeline: simulate, train, evaluate for the configured mode"),
        ("simulate", "training-day data collection (series + KPIs)"),
        ("train-forecaster", "fit the traffic forecaster on the recorded series"),
        ("train-apps", "offline-train the steering xApp and sleeping rApp"),
        ("evaluate", "run the evaluation day under a mode"),
        ("sweep", "constant-volume segments with the sleeping rApp (threshold study)"),
        ("replay", "re-feed a recorded series through prediction + orchestration"),
    ]:
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        if name == "evaluate":
            p.add_argument("--eval-seed", type=int, default=None,
                           help="seed for the evaluation day streams (default: run seed)")
        if name == "train-apps":
            p.add_argument("--apps", default="steering,sleeping",
                           help="comma list: steering,sleeping")
        if name == "sweep":
            p.add_argument("--volumes", default="120,140,190,220,300",
                           help="comma list of target offered volumes in Mbps")
        if name == "replay":
            p.add_argument("--series", type=Path, required=True,
                           help="recorded series CSV (frame_index,mbps)")

    p = sub.add_parser("compare", help="aggregate evaluation runs into a report")
    p.add_argument("runs", nargs="+", type=Path, help="evaluation run directories")
    p.add_argument("--out", type=Path, required=True, help="report directory")
    p.add_argument("--bin-mbps", type=float, default=20.0)

    p = sub.add_parser("show-config", help="print the resolved configuration as YAML")
    _add_common(p)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except OranSimError as exc:
        print(f"error [{type(exc).__module__}.{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    if args.command == "compare":
        report = compare_modes([Path(d) for d in args.runs], args.bin_mbps)
        out = write_report(report, args.out)
        _render_residual_figure(args.runs, out)
        print((out / "report.txt").read_text(), end="")
        return 0

    cfg = _resolve_config(args)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)

    if args.command == "show-config":
        save_config(cfg, out / "config_resolved.yaml")
        print((out / "config_resolved.yaml").read_text(), end="")
        return 0
    if args.command == "run":
        save_config(cfg, out / "config_resolved.yaml")
        run_dir = stage_run(cfg, out)
        print(f"run complete: {run_dir}")
        return 0
    if args.command == "simulate":
        stage_simulate(cfg, out)
        print(f"training day recorded in {out}")
        return 0
    if args.command == "train-forecaster":
        stage_train_forecaster(cfg, out)
        print(f"forecaster checkpoint written to {out}")
        return 0
    if args.command == "train-apps":
        which = tuple(w.strip() for w in args.apps.split(",") if w.strip())
        stage_train_apps(cfg, out, which)
        print(f"agent checkpoints written to {out}")
        return 0
    if args.command == "evaluate":
        mode = cfg.run_mode() if args.mode is None else RunMode(args.mode)
        run_dir = stage_evaluate(cfg, out, mode, args.eval_seed)
        print(f"evaluation written to {run_dir}")
        return 0
    if args.command == "sweep":
        volumes = [float(v) for v in args.volumes.split(",")]
        sweep_dir = stage_sweep(cfg, out, volumes)
        print((sweep_dir / "sweep.csv").read_text(), end="")
        return 0
    if args.command == "replay":
        replay_dir = stage_replay(cfg, out, args.series)
        print(f"replay written to {replay_dir}")
        return 0
    raise OranSimError(f"unknown command {args.command!r}")


def _render_residual_figure(run_dirs, out: Path) -> None:
    try:
        from .figures import residual_figure
    except Exception:
        return
    for d in run_dirs:
        preds = read_predictions_csv(Path(d))
        if preds is None:
            continue
        sets = {"forecaster": residuals(preds["actual_mbps"], preds["predicted_mbps"]).e}
        import numpy as np

        finite = np.isfinite(preds["naive_mbps"])
        if finite.any():
            sets["seasonal_naive"] = (preds["actual_mbps"] - preds["naive_mbps"])[finite]
        sets["moving_average"] = preds["actual_mbps"] - preds["moving_avg_mbps"]
        residual_figure(sets, out / "residuals.png")
        _write_residuals_csv(preds, out)
        return


def _write_residuals_csv(preds, out: Path) -> None:
    import csv

    with open(out / "residuals.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "residual_forecaster", "residual_naive", "residual_moving_avg"])
        for i in range(len(preds["frame"])):
            writer.writerow(
                [
                    int(preds["frame"][i]),
                    repr(float(preds["actual_mbps"][i] - preds["predicted_mbps"][i])),
                    repr(float(preds["actual_mbps"][i] - preds["naive_mbps"][i])),
                    repr(float(preds["actual_mbps"][i] - preds["moving_avg_mbps"][i])),
                ]
            )


if __name__ == "__main__":
    sys.exit(main())
