"""Threshold-driven app activation under the mutual-exclusion constraint.

Predicted volume strictly above the peak threshold activates the steering
xApp; strictly below the trough threshold activates the sleeping rApp;
anything else (including equality) idles both. At most one app is ever
active (S + V <= 1): activating one terminates the other at the decision
frame, with the activation itself taking effect a lead time later.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

from . import OranSimError
from .netsim import KpiRecord


class OrchestratorError(OranSimError):
    pass


class ConstraintViolation(OrchestratorError):
    pass


class Decision(str, Enum):
    ACTIVATE_STEERING = "activate_steering"
    ACTIVATE_SLEEPING = "activate_sleeping"
    IDLE = "idle"


class AppKind(str, Enum):
    XAPP = "xapp"
    RAPP = "rapp"


@dataclass(frozen=True)
class AppDescriptor:
    id: str
    kind: AppKind
    improves: frozenset[str]
    capability: bool = True  # W(Q): the app can improve some metric


def default_registry() -> list[AppDescriptor]:
    return [
        AppDescriptor("traffic-steering", AppKind.XAPP, frozenset({"throughput", "latency"})),
        AppDescriptor("cell-sleeping", AppKind.RAPP, frozenset({"energy_efficiency"})),
    ]


@dataclass(frozen=True)
class Thresholds:
    th_p_mbps: float = 220.0
    th_t_mbps: float = 140.0

    def __post_init__(self):
        if not self.th_t_mbps < self.th_p_mbps:
            raise OrchestratorError(
                f"th_t {self.th_t_mbps} must be below th_p {self.th_p_mbps}"
            )


def decide(t_p_mbps: float, th: Thresholds) -> Decision:
    """Pure threshold comparison; equality with either threshold idles."""
    if not math.isfinite(t_p_mbps):
        raise OrchestratorError(f"predicted volume must be finite, got {t_p_mbps}")
    if t_p_mbps > th.th_p_mbps:
        return Decision.ACTIVATE_STEERING
    if t_p_mbps < th.th_t_mbps:
        return Decision.ACTIVATE_SLEEPING
    return Decision.IDLE


@dataclass
class OrchestratorState:
    steering_active: int = 0  # S
    sleeping_active: int = 0  # V
    pending: dict[int, Decision] = field(default_factory=dict)  # frame -> activation

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.steering_active + self.sleeping_active > 1:
            raise ConstraintViolation(
                f"S + V <= 1 violated: S={self.steering_active} V={self.sleeping_active}"
            )


def apply(state: OrchestratorState, decision: Decision, lead_frames: int, now_frame: int) -> OrchestratorState:
    """Schedule a decision made at ``now_frame``.

    The conflicting app terminates immediately; the requested activation
    lands ``lead_frames`` later (realized by :meth:`Orchestrator.advance`).
    Re-requesting the already-active app is a no-op. Idle terminates both.
    """
    if lead_frames < 0:
        raise OrchestratorError("lead_frames must be >= 0")
    new = replace(state, pending=dict(state.pending))
    if decision == Decision.IDLE:
        new.steering_active = 0
        new.sleeping_active = 0
        new.pending.clear()
        return new
    # a fresh decision supersedes any scheduled activation of the other app
    new.pending = {f: d for f, d in new.pending.items() if d == decision}
    if decision == Decision.ACTIVATE_STEERING:
        if new.steering_active:
            return new
        new.sleeping_active = 0
    elif decision == Decision.ACTIVATE_SLEEPING:
        if new.sleeping_active:
            return new
        new.steering_active = 0
    new.pending[now_frame + lead_frames] = decision
    if lead_frames == 0:
        return _activate_now(new, decision, now_frame)
    new.validate()
    return new


def _activate_now(state: OrchestratorState, decision: Decision, frame: int) -> OrchestratorState:
    state.pending.pop(frame, None)
    if decision == Decision.ACTIVATE_STEERING:
        if state.sleeping_active:
            raise ConstraintViolation("steering activation while sleeping still active")
        state.steering_active = 1
    elif decision == Decision.ACTIVATE_SLEEPING:
        if state.steering_active:
            raise ConstraintViolation("sleeping activation while steering still active")
        state.sleeping_active = 1
    state.validate()
    return state


@dataclass
class AdjustPolicy:
    """Hysteresis feedback on the thresholds; disabled by default."""

    enabled: bool = False
    delta_mbps: float = 5.0
    margin_mbps: float = 10.0
    window_frames: int = 3600
    drop_target: float = 0.02
    ee_target_mbits_per_joule: float = 0.35


def adjust_thresholds(
    th: Thresholds,
    feedback: list[tuple[KpiRecord, int, int]],
    policy: AdjustPolicy,
) -> Thresholds:
    """Move th_p down when steering-active frames drop too much; move th_t up
    when idle frames run energy-inefficiently. Clamped to th_t < th_p - margin.
    """
    if not feedback:
        raise OrchestratorError("feedback window must be non-empty")
    if not policy.enabled:
        return th
    th_p, th_t = th.th_p_mbps, th.th_t_mbps
    steering = [k.drop_rate for k, s, v in feedback if s == 1]
    idle = [k.ee_mbits_per_joule for k, s, v in feedback if s == 0 and v == 0]
    if steering and float(sum(steering) / len(steering)) > policy.drop_target:
        th_p -= policy.delta_mbps
    if idle and float(sum(idle) / len(idle)) < policy.ee_target_mbits_per_joule:
        th_t += policy.delta_mbps
    th_t = min(th_t, th_p - policy.margin_mbps)
    return Thresholds(th_p, th_t)


def objective_delta(
    before: KpiRecord,
    after: KpiRecord,
    metrics: set[str],
    scales: dict[str, float] | None = None,
) -> float:
    """Sum over metrics of (after - before) / scale, the per-step objective."""
    scales = scales or {}
    fields = {
        "throughput": "throughput_mbps",
        "energy_efficiency": "ee_mbits_per_joule",
        "drop_rate": "drop_rate",
        "power": "power_w",
    }
    total = 0.0
    for metric in sorted(metrics):
        attr = fields.get(metric)
        if attr is None or not hasattr(before, attr) or not hasattr(after, attr):
            raise OrchestratorError(f"metric {metric!r} missing from KPI records")
        scale = scales.get(metric, 1.0)
        total += (getattr(after, attr) - getattr(before, attr)) / scale
    return total


@dataclass
class DecisionLogRow:
    frame: int
    t_p_mbps: float | None  # prediction that governed this frame (None in warm-up)
    th_p_mbps: float
    th_t_mbps: float
    decision: Decision
    steering_active: int
    sleeping_active: int


class Orchestrator:
    """Stateful decision authority serialized with frame advancement."""

    def __init__(
        self,
        thresholds: Thresholds,
        lead_frames: int = 1,
        registry: list[AppDescriptor] | None = None,
        adjust: AdjustPolicy | None = None,
    ):
        self.thresholds = thresholds
        self.lead_frames = lead_frames
        self.registry = registry if registry is not None else default_registry()
        if not self.registry:
            raise OrchestratorError("app registry must be non-empty")
        if not any(d.capability for d in self.registry):
            raise OrchestratorError("registry needs at least one capable app (W=1)")
        self.adjust = adjust or AdjustPolicy()
        self.state = OrchestratorState()
        self.log: list[DecisionLogRow] = []
        self._feedback: list[tuple[KpiRecord, int, int]] = []

    def _check_capability(self, kind: AppKind) -> None:
        if not any(d.kind == kind and d.capability for d in self.registry):
            raise ConstraintViolation(f"no capable {kind.value} registered")

    def submit(self, now_frame: int, t_p_mbps: float) -> Decision:
        """Decide from the prediction for frame ``now_frame + lead``."""
        decision = decide(t_p_mbps, self.thresholds)
        if decision == Decision.ACTIVATE_STEERING:
            self._check_capability(AppKind.XAPP)
        elif decision == Decision.ACTIVATE_SLEEPING:
            self._check_capability(AppKind.RAPP)
        self.state = apply(self.state, decision, self.lead_frames, now_frame)
        return decision

    def advance(self, frame: int) -> dict[str, bool]:
        """Realize activations scheduled for ``frame``; returns transitions."""
        was_sleeping = self.state.sleeping_active
        was_steering = self.state.steering_active
        pending = self.state.pending.pop(frame, None)
        if pending is not None:
            self.state = _activate_now(self.state, pending, frame)
        return {
            "steering_started": bool(self.state.steering_active and not was_steering),
            "sleeping_started": bool(self.state.sleeping_active and not was_sleeping),
            "sleeping_stopped": bool(was_sleeping and not self.state.sleeping_active),
        }

    def log_frame(self, frame: int, t_p_mbps: float | None, decision: Decision) -> None:
        self.log.append(
            DecisionLogRow(
                frame=frame,
                t_p_mbps=t_p_mbps,
                th_p_mbps=self.thresholds.th_p_mbps,
                th_t_mbps=self.thresholds.th_t_mbps,
                decision=decision,
                steering_active=self.state.steering_active,
                sleeping_active=self.state.sleeping_active,
            )
        )

    def feed_back(self, kpi: KpiRecord) -> None:
        """Collect per-frame KPI feedback; adjusts thresholds per window."""
        self._feedback.append((kpi, self.state.steering_active, self.state.sleeping_active))
        if self.adjust.enabled and len(self._feedback) >= self.adjust.window_frames:
            self.thresholds = adjust_thresholds(self.thresholds, self._feedback, self.adjust)
            self._feedback.clear()

    def write_log(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["frame", "t_p_mbps", "th_p_mbps", "th_t_mbps", "decision", "S", "V"])
            for row in self.log:
                writer.writerow(
                    [
                        row.frame,
                        "" if row.t_p_mbps is None else format(row.t_p_mbps, ".9g"),
                        format(row.th_p_mbps, ".9g"),
                        format(row.th_t_mbps, ".9g"),
                        row.decision.value,
                        row.steering_active,
                        row.sleeping_active,
                    ]
                )
