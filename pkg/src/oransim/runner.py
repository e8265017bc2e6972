"""Scenario assembly and the frame-by-frame simulation stages.

Stages are independently runnable and write disjoint artifacts into the
run directory, each with its own manifest; a stage never touches another
stage's outputs. Every random stream derives from (seed, purpose tags),
so identical (config, seed) reproduce byte-identical CSVs.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ArtifactError, __version__
from .config import RunConfig, RunMode, config_hash, scenario_hash
from .forecast.baselines import baseline_moving_average, baseline_seasonal_naive
from .forecast.model import ModelConfig
from .forecast.training import Forecaster, TrainConfig, new_forecaster, write_loss_history
from .netsim import (
    KpiRecord,
    Network,
    assignment_best_sinr,
    build_network,
)
from .orchestrator import (
    AdjustPolicy,
    Decision,
    Orchestrator,
    Thresholds,
    decide,
)
from .pipeline import (
    AggregateSeries,
    SgFilterConfig,
    make_windows,
    series_from_csv,
    series_to_csv,
    smooth,
)
from .rlapps.apps import (
    SleepingApp,
    SleepingConfig,
    SteeringApp,
    SteeringConfig,
    apply_mask,
    sleeping_reward,
)
from .rlapps.dqn import DqnConfig
from .seeding import derive_int, derive_rng
from .traffic import (
    BurstConfig,
    FlowSource,
    TrafficClassSpec,
    analytic_base_demand_mbps,
    calibrate_profile,
    default_traffic_classes,
    flat_profile,
    generate_frame_demand,
)

FORECASTER_FILE = "forecaster.pt"
STEERING_FILE = "steering.pt"
SLEEPING_FILE = "sleeping.pt"
TRAIN_SERIES_FILE = "training_series.csv"
TRAIN_SERIES_SMOOTH_FILE = "training_series_smoothed.csv"


def _fmt(v: float) -> str:
    return repr(float(v))


@dataclass
class Scenario:
    cfg: RunConfig
    classes: list[TrafficClassSpec]
    budgets: dict[str, float]
    base_demand_mbps: float

    @property
    def period_s(self) -> float:
        return self.cfg.period_s


def build_scenario(cfg: RunConfig) -> Scenario:
    classes = [
        TrafficClassSpec(
            name=row.name,
            arrival=row.arrival,  # type: ignore[arg-type]
            mean_interarrival_ms=row.mean_interarrival_ms,
            packet_size_bytes=row.packet_size_bytes,
            qos_throughput_mbps=row.qos_throughput_mbps,
            qos_delay_budget_ms=row.qos_delay_budget_ms,
            pareto_shape=row.pareto_shape,
            uniform_halfwidth_frac=row.uniform_halfwidth_frac,
        )
        for row in cfg.scenario.traffic_classes
    ]
    if not classes:
        raise ArtifactError("scenario needs at least one traffic class")
    budgets = {c.name: c.qos_delay_budget_ms for c in classes}
    sources = make_sources(cfg, classes, seed_tags=("base-demand",))
    base = analytic_base_demand_mbps(sources)
    return Scenario(cfg, classes, budgets, base)


def make_sources(
    cfg: RunConfig, classes: list[TrafficClassSpec], seed_tags: tuple[str, ...]
) -> list[FlowSource]:
    """One flow source per UE (class round-robin) or per UE-class pair."""
    ue_count = cfg.scenario.topology.ue_count
    sources = []
    for ue in range(ue_count):
        if cfg.scenario.class_mix == "all_per_ue":
            assigned = classes
        else:
            assigned = [classes[ue % len(classes)]]
        for spec in assigned:
            rng = derive_rng(cfg.seed, *seed_tags, "src", str(ue), spec.name)
            sources.append(FlowSource(ue, spec, rng))
    return sources


def make_network(scenario: Scenario) -> Network:
    cfg = scenario.cfg
    rng = derive_rng(cfg.scenario.topology_seed, "topology")
    return build_network(
        cfg.scenario.topology,
        rng,
        frame_s=cfg.frame_s,
        class_delay_budget_ms=scenario.budgets,
    )


def make_profile(scenario: Scenario, *noise_tags: str):
    cfg = scenario.cfg
    p = cfg.scenario.profile
    bursts = None
    if p.burst_rate_per_day > 0:
        bursts = BurstConfig(
            rate_per_day=p.burst_rate_per_day,
            min_duration_s=p.burst_min_duration_s,
            max_duration_s=p.burst_max_duration_s,
            level_lo=p.burst_level_lo,
            level_hi=p.burst_level_hi,
            shape_bias=p.burst_shape_bias,
        )
    return calibrate_profile(
        p.peak_mbps,
        p.trough_mbps,
        scenario.base_demand_mbps,
        period_s=scenario.period_s,
        shape=p.shape,
        noise_sigma_frac=p.noise_sigma_frac,
        noise_seed=derive_int(cfg.seed, "profile-noise", *noise_tags),
        bursts=bursts,
    )


def steering_app_for(cfg: RunConfig, net: Network, classes: list[TrafficClassSpec]) -> SteeringApp:
    s = cfg.steering
    dqn = DqnConfig(
        gamma=s.gamma,
        alpha=s.learning_rate,
        batch_size=s.batch_size,
        initial_explore_steps=s.initial_explore_steps,
        target_sync_every=s.target_sync_every,
        eps_end=s.eps_end,
        eps_decay_steps=s.eps_decay_steps,
        buffer_capacity=s.buffer_capacity,
        hidden_dims=tuple(s.hidden_dims),
        seed=derive_int(cfg.seed, "steering-agent"),
    )
    return SteeringApp(
        net, classes,
        SteeringConfig(dqn=dqn, w_throughput=s.w_throughput, w_delay=s.w_delay,
                       update_every=s.update_every),
    )


def sleeping_app_for(cfg: RunConfig, net: Network) -> SleepingApp:
    s = cfg.sleeping
    dqn = DqnConfig(
        gamma=s.gamma,
        alpha=s.learning_rate,
        batch_size=s.batch_size,
        initial_explore_steps=s.initial_explore_steps,
        target_sync_every=s.target_sync_every,
        eps_end=s.eps_end,
        eps_decay_steps=s.eps_decay_steps,
        buffer_capacity=s.buffer_capacity,
        hidden_dims=tuple(s.hidden_dims),
        seed=derive_int(cfg.seed, "sleeping-agent"),
    )
    return SleepingApp(
        net,
        SleepingConfig(dqn=dqn, lambda_overload=s.lambda_overload,
                       overload_util=s.overload_util, epoch_frames=s.epoch_frames,
                       updates_per_decision=s.updates_per_decision),
    )


def orchestrator_for(cfg: RunConfig) -> Orchestrator:
    o = cfg.orchestrator
    return Orchestrator(
        Thresholds(o.th_p_mbps, o.th_t_mbps),
        lead_frames=o.lead_frames,
        adjust=AdjustPolicy(
            enabled=o.adjust_enabled,
            delta_mbps=o.adjust_delta_mbps,
            margin_mbps=o.adjust_margin_mbps,
            window_frames=o.adjust_window_frames,
            drop_target=o.adjust_drop_target,
            ee_target_mbits_per_joule=o.adjust_ee_target,
        ),
    )


@dataclass
class DayResult:
    kpis: list[KpiRecord] = field(default_factory=list)
    offered_mbps: list[float] = field(default_factory=list)
    prediction_rows: list[tuple] = field(default_factory=list)  # frame, actual, model, naive, ma
    epoch_rewards: list[float] = field(default_factory=list)
    steering_rewards: list[float] = field(default_factory=list)
    orchestrator: Orchestrator | None = None


def simulate_day(
    cfg: RunConfig,
    scenario: Scenario,
    *,
    seed_tags: tuple[str, ...],
    mode: RunMode,
    duration_s: float | None = None,
    net: Network | None = None,
    profile=None,
    forecaster: Forecaster | None = None,
    steering: SteeringApp | None = None,
    sleeping: SleepingApp | None = None,
    train_steering: bool = False,
    train_sleeping: bool = False,
    history_prefix: np.ndarray | None = None,
    origin_s: float = 0.0,
) -> DayResult:
    """One contiguous stretch of frames under the given mode.

    ``history_prefix`` (the training-day series) extends the history used
    for prediction and the seasonal-naive baseline so the evaluation day
    starts with a full day of context. ``origin_s`` rotates the diurnal
    phase: profile lookups and the apps' time-of-day features both shift,
    as if the run started at that wall-clock offset.
    """
    frame_s = cfg.frame_s
    frames = cfg.frames(duration_s)
    net = make_network(scenario) if net is None else net
    profile = make_profile(scenario, *seed_tags) if profile is None else profile
    sources = make_sources(cfg, scenario.classes, seed_tags)
    orch = orchestrator_for(cfg) if mode == RunMode.PROPOSED else None
    result = DayResult(orchestrator=orch)
    prefix = np.asarray(history_prefix, dtype=np.float64) if history_prefix is not None else np.empty(0)
    season_frames = cfg.frames(scenario.period_s)

    epoch_kpis: list[KpiRecord] = []
    epoch_anchor: int | None = None
    sleeping_cfg = sleeping.cfg if sleeping is not None else None
    last_kpi: KpiRecord | None = None
    t_p_for_frame: float | None = None  # prediction governing the current frame
    pred_baselines: tuple[float, float] | None = None

    def sleeping_boundary(f: int, just_started: bool) -> bool:
        if sleeping is None:
            return False
        if just_started or epoch_anchor is None:
            return True
        return (f - epoch_anchor) % sleeping_cfg.epoch_frames == 0

    def close_sleeping_epoch(state_now, terminal: bool):
        nonlocal epoch_kpis
        if train_sleeping and sleeping is not None and sleeping._pending is not None and epoch_kpis:
            r = sleeping_reward(
                epoch_kpis, sleeping_cfg.lambda_overload, sleeping_cfg.overload_util, frame_s
            )
            result.epoch_rewards.append(r)
            sleeping.record_epoch(r, state_now, terminal)

    for f in range(frames):
        t0 = origin_s + f * frame_s
        sleeping_started = False
        if orch is not None:
            events = orch.advance(f)
            if events["sleeping_stopped"]:
                apply_mask(net, [])
                epoch_anchor = None
                epoch_kpis = []
            sleeping_started = events["sleeping_started"]
            s_active = bool(orch.state.steering_active)
            v_active = bool(orch.state.sleeping_active)
        else:
            s_active = mode == RunMode.ALWAYS_STEERING
            v_active = mode == RunMode.ALWAYS_SLEEPING
            sleeping_started = v_active and f == 0

        if v_active and sleeping is not None and sleeping_boundary(f, sleeping_started):
            state_now = sleeping.build_state(net, epoch_kpis, t0, scenario.period_s)
            close_sleeping_epoch(state_now, terminal=False)
            mask = sleeping.decide_mask(state_now, training=train_sleeping)
            apply_mask(net, sleeping.mask_to_sleeping_ids(mask))
            epoch_anchor = f
            epoch_kpis = []

        demand = generate_frame_demand(sources, t0, frame_s, profile)
        if s_active and steering is not None:
            assignment = steering.decide(net, demand, last_kpi, training=train_steering)
        else:
            assignment = assignment_best_sinr(net, demand)
        kpi, flow_detail = net_step(net, demand, assignment, f, t0 - origin_s)
        if s_active and steering is not None and train_steering:
            rewards = steering.record_rewards(flow_detail, frame_s)
            result.steering_rewards.extend(rewards.values())
        if v_active:
            epoch_kpis.append(kpi)
        result.kpis.append(kpi)
        result.offered_mbps.append(kpi.offered_mbps)
        last_kpi = kpi

        # prediction made at f for frame f+1
        t_p_next: float | None = None
        if forecaster is not None:
            history = np.concatenate([prefix, np.asarray(result.offered_mbps)])
            if history.size >= forecaster.input_len:
                t_p_next = forecaster.predict_next(history)
                naive = (
                    baseline_seasonal_naive(history, season_frames)
                    if history.size >= season_frames
                    else float("nan")
                )
                ma = baseline_moving_average(history, cfg.ma_baseline_window)
                next_baselines = (naive, ma)
            else:
                next_baselines = None
        else:
            next_baselines = None

        if t_p_for_frame is not None and pred_baselines is not None:
            result.prediction_rows.append(
                (f, kpi.offered_mbps, t_p_for_frame, pred_baselines[0], pred_baselines[1])
            )
        if orch is not None:
            governed = (
                decide(t_p_for_frame, orch.thresholds)
                if t_p_for_frame is not None
                else Decision.IDLE
            )
            orch.log_frame(f, t_p_for_frame, governed)
            orch.feed_back(kpi)
            if t_p_next is not None:
                orch.submit(f, t_p_next)
        t_p_for_frame = t_p_next
        pred_baselines = next_baselines

    if sleeping is not None and train_sleeping:
        state_now = sleeping.build_state(net, epoch_kpis, origin_s + frames * frame_s, scenario.period_s)
        close_sleeping_epoch(state_now, terminal=True)
        sleeping.end_episode()
    if steering is not None and train_steering:
        steering.end_episode()
    return result


def net_step(net, demand, assignment, f, t0):
    from .netsim import step_frame

    return step_frame(net, demand, assignment, f, t0)


# ---------------------------------------------------------------------------
# artifact writers
# ---------------------------------------------------------------------------


def write_manifest(path: Path, cfg: RunConfig, stage: str, extra: dict | None = None) -> None:
    import torch

    payload = {
        "stage": stage,
        "config_hash": config_hash(cfg),
        "scenario_hash": scenario_hash(cfg),
        "seed": cfg.seed,
        "mode": cfg.mode,
        "duration_s": cfg.run_duration_s,
        "period_s": cfg.period_s,
        "time_warp": cfg.time_warp,
        "versions": {
            "oransim": __version__,
            "numpy": np.__version__,
            "torch": torch.__version__,
        },
    }
    payload.update(extra or {})
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def write_kpi_csv(path: Path, kpis: list[KpiRecord], class_names: list[str]) -> None:
    lat_cols = [f"latency_ms_{name.lower()}" for name in class_names]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["frame", "throughput_mbps", *lat_cols, "drop_rate", "power_w", "ee_mbits_per_joule"]
        )
        for k in kpis:
            writer.writerow(
                [
                    k.frame_index,
                    _fmt(k.throughput_mbps),
                    *[_fmt(k.latency_ms_by_class.get(name, 0.0)) for name in class_names],
                    _fmt(k.drop_rate),
                    _fmt(k.power_w),
                    _fmt(k.ee_mbits_per_joule),
                ]
            )


def write_bs_detail_csv(path: Path, kpis: list[KpiRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "bs", "sleeping", "throughput_mbps", "power_w", "util", "queued_bits"])
        for k in kpis:
            for bs_id in sorted(k.per_bs):
                s = k.per_bs[bs_id]
                sleeping = int(s.sleeping)
                writer.writerow(
                    [k.frame_index, bs_id, sleeping, _fmt(s.throughput_mbps),
                     _fmt(s.power_w), _fmt(s.util), _fmt(s.queued_bits)]
                )


def write_predictions_csv(path: Path, rows: list[tuple]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "actual_mbps", "predicted_mbps", "naive_mbps", "moving_avg_mbps"])
        for frame, actual, model, naive, ma in rows:
            writer.writerow([frame, _fmt(actual), _fmt(model), _fmt(naive), _fmt(ma)])


def write_rewards_csv(path: Path, rows: list[tuple]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "mean_reward", "steps"])
        for ep, mean_r, steps in rows:
            writer.writerow([ep, _fmt(mean_r), steps])


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise ArtifactError(f"missing required artifact {path} ({hint})")
    return path


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


def stage_simulate(cfg: RunConfig, out: Path) -> Path:
    """Step 1: training-day data collection (no apps), aggregate + smooth."""
    out.mkdir(parents=True, exist_ok=True)
    scenario = build_scenario(cfg)
    result = simulate_day(cfg, scenario, seed_tags=("train-day",), mode=RunMode.NOAPP)
    series = AggregateSeries(cfg.pipeline.frame_ms, np.asarray(result.offered_mbps))
    series_to_csv(series, out / TRAIN_SERIES_FILE)
    sg = SgFilterConfig(cfg.pipeline.sg_window, cfg.pipeline.sg_poly_order)
    if len(series) >= sg.window:
        series_to_csv(smooth(series, sg), out / TRAIN_SERIES_SMOOTH_FILE)
    write_kpi_csv(out / "training_kpi.csv", result.kpis, [c.name for c in scenario.classes])
    write_manifest(out / "manifest_simulate.json", cfg, "simulate",
                   {"frames": len(result.kpis), "base_demand_mbps": scenario.base_demand_mbps})
    return out


def stage_train_forecaster(cfg: RunConfig, out: Path) -> Path:
    smooth_path = _require(out / TRAIN_SERIES_SMOOTH_FILE, "run the simulate stage first")
    series = series_from_csv(smooth_path, cfg.pipeline.frame_ms)
    ds = make_windows(series, cfg.pipeline.input_len, cfg.pipeline.horizon,
                      cfg.pipeline.train_frac)
    f = cfg.forecaster
    model_cfg = ModelConfig(
        input_len=cfg.pipeline.input_len,
        horizon=cfg.pipeline.horizon,
        d_model=f.d_model,
        heads=f.heads,
        encoder_layers=f.encoder_layers,
        decoder_layers=f.decoder_layers,
        ma_kernel=f.ma_kernel,
        d_ff=f.d_ff,
        rho=f.rho,
        use_positional=f.use_positional,
    )
    sg = SgFilterConfig(cfg.pipeline.sg_window, cfg.pipeline.sg_poly_order)
    forecaster = new_forecaster(model_cfg, seed=derive_int(cfg.seed, "forecaster-init"), sg=sg)
    history = forecaster.fit(
        ds,
        TrainConfig(
            learning_rate=f.learning_rate,
            batch_size=f.batch_size,
            epochs=f.epochs,
            seed=derive_int(cfg.seed, "forecaster-train"),
            grad_clip=f.grad_clip,
        ),
    )
    forecaster.save(out / FORECASTER_FILE)
    write_loss_history(history, out / "forecaster_loss.csv")
    write_manifest(out / "manifest_train_forecaster.json", cfg, "train_forecaster",
                   {"epochs": len(history), "final_mse": history[-1] if history else None})
    return out


def stage_train_apps(cfg: RunConfig, out: Path, which: tuple[str, ...] = ("steering", "sleeping")) -> Path:
    scenario = build_scenario(cfg)
    if "steering" in which:
        net = make_network(scenario)
        app = steering_app_for(cfg, net, scenario.classes)
        rows = []
        for day in range(cfg.steering.train_days):
            net = make_network(scenario)
            phase = float(derive_rng(cfg.seed, "steer-phase", str(day)).uniform(0, scenario.period_s))
            result = simulate_day(
                cfg, scenario, seed_tags=("train-steer", str(day)),
                mode=RunMode.ALWAYS_STEERING, net=net, steering=app, train_steering=True,
                origin_s=phase,
            )
            mean_r = float(np.mean(result.steering_rewards)) if result.steering_rewards else 0.0
            rows.append((day, mean_r, app.agent.action_steps))
        app.agent.save(out / STEERING_FILE)
        write_rewards_csv(out / "steering_rewards.csv", rows)
    if "sleeping" in which:
        net = make_network(scenario)
        app = sleeping_app_for(cfg, net)
        rows = []
        for day in range(cfg.sleeping.train_days):
            net = make_network(scenario)
            phase = float(derive_rng(cfg.seed, "sleep-phase", str(day)).uniform(0, scenario.period_s))
            result = simulate_day(
                cfg, scenario, seed_tags=("train-sleep", str(day)),
                mode=RunMode.ALWAYS_SLEEPING, net=net, sleeping=app, train_sleeping=True,
                origin_s=phase,
            )
            mean_r = float(np.mean(result.epoch_rewards)) if result.epoch_rewards else 0.0
            rows.append((day, mean_r, app.agent.action_steps))
        app.agent.save(out / SLEEPING_FILE)
        write_rewards_csv(out / "sleeping_rewards.csv", rows)
    write_manifest(out / "manifest_train_apps.json", cfg, "train_apps", {"apps": list(which)})
    return out


def evaluate_dir(out: Path, mode: RunMode, eval_seed: int) -> Path:
    return out / f"eval_{mode.value}_seed{eval_seed}"


def stage_evaluate(cfg: RunConfig, out: Path, mode: RunMode | None = None,
                   eval_seed: int | None = None) -> Path:
    """Steps 4-5: evaluation day under the chosen mode, with per-frame
    prediction and orchestration in Proposed mode."""
    mode = cfg.run_mode() if mode is None else mode
    eval_seed = cfg.seed if eval_seed is None else eval_seed
    scenario = build_scenario(cfg)
    run_dir = evaluate_dir(out, mode, eval_seed)
    run_dir.mkdir(parents=True, exist_ok=True)

    forecaster = None
    prefix = None
    if mode == RunMode.PROPOSED:
        forecaster = Forecaster.load(_require(out / FORECASTER_FILE, "run train-forecaster"))
        prefix = series_from_csv(
            _require(out / TRAIN_SERIES_FILE, "run simulate"), cfg.pipeline.frame_ms
        ).values
    net = make_network(scenario)
    steering = None
    sleeping = None
    if mode in (RunMode.PROPOSED, RunMode.ALWAYS_STEERING):
        steering = steering_app_for(cfg, net, scenario.classes)
        steering.agent = steering.agent.load(_require(out / STEERING_FILE, "run train-apps"))
    if mode in (RunMode.PROPOSED, RunMode.ALWAYS_SLEEPING):
        sleeping = sleeping_app_for(cfg, net)
        sleeping.agent = sleeping.agent.load(_require(out / SLEEPING_FILE, "run train-apps"))

    eval_cfg = dataclasses.replace(cfg, seed=eval_seed)
    result = simulate_day(
        eval_cfg, build_scenario(eval_cfg), seed_tags=("eval",), mode=mode, net=net,
        forecaster=forecaster, steering=steering, sleeping=sleeping,
        history_prefix=prefix,
    )
    class_names = [c.name for c in scenario.classes]
    write_kpi_csv(run_dir / "kpi.csv", result.kpis, class_names)
    write_bs_detail_csv(run_dir / "bs_detail.csv", result.kpis)
    series_to_csv(AggregateSeries(cfg.pipeline.frame_ms, np.asarray(result.offered_mbps)),
                  run_dir / "series.csv")
    if result.prediction_rows:
        write_predictions_csv(run_dir / "predictions.csv", result.prediction_rows)
    if result.orchestrator is not None:
        result.orchestrator.write_log(run_dir / "decision_log.csv")
    write_manifest(run_dir / "manifest.json", cfg, "evaluate",
                   {"mode": mode.value, "eval_seed": eval_seed, "frames": len(result.kpis)})
    return run_dir


def stage_sweep(cfg: RunConfig, out: Path, volumes: list[float]) -> Path:
    """Fixed-duration constant-load segments with the sleeping rApp active."""
    if sorted(volumes) != list(volumes):
        raise ArtifactError("sweep volumes must be sorted ascending")
    scenario = build_scenario(cfg)
    sweep_dir = out / "sweep"
    sweep_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, volume in enumerate(volumes):
        net = make_network(scenario)
        sleeping = sleeping_app_for(cfg, net)
        sleeping.agent = sleeping.agent.load(_require(out / SLEEPING_FILE, "run train-apps"))
        mult = volume / scenario.base_demand_mbps
        profile = flat_profile(mult, period_s=scenario.period_s)
        result = simulate_day(
            cfg, scenario, seed_tags=("sweep", str(i)), mode=RunMode.ALWAYS_SLEEPING,
            duration_s=cfg.sweep_segment_s, net=net, profile=profile, sleeping=sleeping,
        )
        served = sum(k.served_bits for k in result.kpis)
        dropped = sum(k.dropped_bits for k in result.kpis)
        handled = served + dropped
        realized = float(np.mean([k.offered_mbps for k in result.kpis]))
        ee = float(np.mean([k.ee_mbits_per_joule for k in result.kpis]))
        drop = dropped / handled if handled > 0 else 0.0
        if volume > 0:
            flagged = abs(realized - volume) / volume > 0.15
        else:
            flagged = realized > 1.0
        rows.append((volume, realized, ee, drop, int(flagged)))
    with open(sweep_dir / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["volume_mbps", "realized_mbps", "ee_mbits_per_joule", "drop_rate", "flagged"])
        for vol, realized, ee, drop, flagged in rows:
            writer.writerow([_fmt(vol), _fmt(realized), _fmt(ee), _fmt(drop), flagged])
    write_manifest(sweep_dir / "manifest.json", cfg, "sweep", {"volumes": volumes})
    try:
        from .figures import sweep_figure

        sweep_figure(rows, sweep_dir / "sweep.png")
    except Exception:
        pass  # figures are a convenience; the CSV is the artifact of record
    return sweep_dir


def stage_replay(cfg: RunConfig, out: Path, series_path: Path) -> Path:
    """Re-feed a recorded series through prediction + orchestration."""
    forecaster = Forecaster.load(_require(out / FORECASTER_FILE, "run train-forecaster"))
    series = series_from_csv(_require(Path(series_path), "recorded series"), cfg.pipeline.frame_ms)
    replay_dir = out / "replay"
    replay_dir.mkdir(parents=True, exist_ok=True)
    orch = orchestrator_for(cfg)
    values = series.values
    season = cfg.frames(cfg.period_s)
    rows = []
    t_p_for_frame: float | None = None
    baselines_for_frame: tuple[float, float] | None = None
    for f in range(values.size):
        orch.advance(f)
        if t_p_for_frame is not None and baselines_for_frame is not None:
            rows.append((f, values[f], t_p_for_frame, *baselines_for_frame))
        governed = (
            decide(t_p_for_frame, orch.thresholds) if t_p_for_frame is not None else Decision.IDLE
        )
        orch.log_frame(f, t_p_for_frame, governed)
        history = values[: f + 1]
        if history.size >= forecaster.input_len:
            t_p_next = forecaster.predict_next(history)
            naive = (
                baseline_seasonal_naive(history, season) if history.size >= season else float("nan")
            )
            ma = baseline_moving_average(history, cfg.ma_baseline_window)
            orch.submit(f, t_p_next)
            t_p_for_frame = t_p_next
            baselines_for_frame = (naive, ma)
        else:
            t_p_for_frame = None
            baselines_for_frame = None
    write_predictions_csv(replay_dir / "predictions.csv", rows)
    orch.write_log(replay_dir / "decision_log.csv")
    write_manifest(replay_dir / "manifest.json", cfg, "replay",
                   {"series": str(series_path), "frames": int(values.size)})
    return replay_dir


def stage_run(cfg: RunConfig, out: Path) -> Path:
    """The full Step 1-5 loop for the configured mode."""
    out.mkdir(parents=True, exist_ok=True)
    mode = cfg.run_mode()
    stage_simulate(cfg, out)
    if mode == RunMode.PROPOSED:
        stage_train_forecaster(cfg, out)
    needed = []
    if mode in (RunMode.PROPOSED, RunMode.ALWAYS_STEERING):
        needed.append("steering")
    if mode in (RunMode.PROPOSED, RunMode.ALWAYS_SLEEPING):
        needed.append("sleeping")
    if needed:
        stage_train_apps(cfg, out, tuple(needed))
    run_dir = stage_evaluate(cfg, out, mode)
    write_manifest(out / "manifest_run.json", cfg, "run", {"eval_dir": run_dir.name})
    return run_dir
