"""The two RIC applications built on the DQN core.

Traffic-steering xApp: picks a serving station per newly arriving flow,
rewarding QoS-normalized throughput and penalizing QoS-normalized delay.

Cell-sleeping rApp: once per decision epoch picks a sleep bitmask over the
small cells, rewarding delivered megabits per Joule across the cluster and
penalizing overloaded active stations. The macro is never in the mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..netsim import BsState, KpiRecord, Network, FlowFrameDetail
from ..traffic import TrafficClassSpec
from .dqn import DqnAgent, DqnConfig, RlError, Transition


@dataclass
class SteeringConfig:
    dqn: DqnConfig = field(default_factory=DqnConfig)
    w_throughput: float = 0.5
    w_delay: float = 0.5
    sinr_norm_db: tuple[float, float] = (-10.0, 50.0)
    update_every: int = 8  # gradient step per this many stored transitions


@dataclass
class SleepingConfig:
    dqn: DqnConfig = field(default_factory=DqnConfig)
    # Penalty per overloaded active station. Sized well above typical
    # Mbit/J differences so it acts as a constraint: the policy prefers the
    # most energy-efficient mask that keeps every station under the
    # overload threshold (when such a mask exists).
    lambda_overload: float = 0.3
    overload_util: float = 0.97
    epoch_frames: int = 60
    updates_per_decision: int = 1  # replay gradient steps per recorded epoch


def steering_reward(
    detail: FlowFrameDetail,
    spec: TrafficClassSpec,
    frame_s: float,
    w_throughput: float,
    w_delay: float,
) -> float:
    """w_t * min(1, tput/qos_tput) - w_d * min(1, delay/budget), in [-w_d, w_t].

    A flow whose bits were all dropped or stranded counts as a full budget
    violation (delay ratio 1) with zero throughput credit.
    """
    achieved_mbps = detail.served_bits / 1e6 / frame_s
    tput_term = min(1.0, achieved_mbps / spec.qos_throughput_mbps) if spec.qos_throughput_mbps > 0 else 1.0
    if detail.served_bits > 0:
        delay_term = min(1.0, detail.mean_latency_ms / spec.qos_delay_budget_ms)
    else:
        delay_term = 1.0
    return w_throughput * tput_term - w_delay * delay_term


class SteeringApp:
    """Per-flow serving-station selection. Actions index the station list."""

    def __init__(self, net: Network, specs: list[TrafficClassSpec], cfg: SteeringConfig):
        self.cfg = cfg
        self.station_ids = list(net.stations)
        self.class_names = [s.name for s in specs]
        self.specs = {s.name: s for s in specs}
        self.state_dim = len(self.class_names) + 2 * len(self.station_ids)
        self.agent = DqnAgent(self.state_dim, len(self.station_ids), cfg.dqn)
        self._pending: dict[tuple[int, str], tuple[np.ndarray, int, float | None]] = {}
        self._since_update = 0
        self.losses: list[float] = []

    def _build_state(self, net: Network, ue: int, cls: str, util: dict[str, float]) -> np.ndarray:
        lo, hi = self.cfg.sinr_norm_db
        onehot = [1.0 if cls == name else 0.0 for name in self.class_names]
        loads = [min(max(util.get(bs_id, 0.0), 0.0), 1.0) for bs_id in self.station_ids]
        sinrs = [
            min(max((net.sinr_db(ue, bs_id) - lo) / (hi - lo), 0.0), 1.0)
            for bs_id in self.station_ids
        ]
        return np.asarray(onehot + loads + sinrs, dtype=np.float64)

    def decide(
        self,
        net: Network,
        demand: dict[tuple[int, str], float],
        last_kpi: KpiRecord | None,
        training: bool,
    ) -> dict[tuple[int, str], str]:
        """Assignment for every flow with new demand; records transitions."""
        util = {b: s.util for b, s in last_kpi.per_bs.items()} if last_kpi else {}
        flows = sorted(demand)
        if not flows:
            return {}
        states = np.stack([self._build_state(net, ue, cls, util) for ue, cls in flows])
        actions = self.agent.act_batch(states, training)
        assignment: dict[tuple[int, str], str] = {}
        for (flow, state, action) in zip(flows, states, actions):
            if training:
                prev = self._pending.get(flow)
                if prev is not None and prev[2] is not None:
                    self.agent.push(Transition(prev[0], prev[1], prev[2], state, False))
                    self._since_update += 1
                    if self._since_update >= self.cfg.update_every:
                        self._since_update = 0
                        loss = self.agent.train_step()
                        if loss is not None:
                            self.losses.append(loss)
                self._pending[flow] = (state, int(action), None)
            bs_id = self.station_ids[int(action)]
            if net.stations[bs_id].state != BsState.ACTIVE:
                bs_id = net.best_active_bs(flow[0])
            assignment[flow] = bs_id
        return assignment

    def record_rewards(
        self,
        flow_detail: dict[tuple[int, str], FlowFrameDetail],
        frame_s: float,
    ) -> dict[tuple[int, str], float]:
        """Attach this frame's rewards to the pending decisions."""
        rewards: dict[tuple[int, str], float] = {}
        for flow, entry in self._pending.items():
            if entry[2] is not None:
                continue
            detail = flow_detail.get(flow, FlowFrameDetail())
            r = steering_reward(
                detail, self.specs[flow[1]], frame_s, self.cfg.w_throughput, self.cfg.w_delay
            )
            self._pending[flow] = (entry[0], entry[1], r)
            rewards[flow] = r
        return rewards

    def end_episode(self) -> None:
        for flow, (state, action, reward) in self._pending.items():
            if reward is not None:
                self.agent.push(Transition(state, action, reward, state, True))
        self._pending.clear()


def sleeping_reward(
    frames: list[KpiRecord],
    lambda_overload: float,
    overload_util: float,
    frame_s: float,
) -> float:
    """Delivered Mbit per Joule over the epoch minus the overload penalty.

    The penalty is lambda times the mean per-frame count of active stations
    whose airtime utilization exceeds the overload threshold.
    """
    if not frames:
        raise RlError("sleeping reward needs at least one frame")
    delivered_mbit = sum(k.served_bits for k in frames) / 1e6
    energy_j = sum(k.power_w for k in frames) * frame_s
    overloads = [
        sum(1 for s in k.per_bs.values() if s.util > overload_util) for k in frames
    ]
    return delivered_mbit / energy_j - lambda_overload * float(np.mean(overloads))


class SleepingApp:
    """Per-epoch sleep bitmask over the small cells (2^n actions)."""

    def __init__(self, net: Network, cfg: SleepingConfig):
        self.cfg = cfg
        self.station_ids = list(net.stations)
        self.small_ids = [bs.id for bs in net.small_cells()]
        if not self.small_ids:
            raise RlError("sleeping rApp needs at least one small cell")
        self.state_dim = 2 * len(self.station_ids) + 2
        self.n_actions = 2 ** len(self.small_ids)
        self.agent = DqnAgent(self.state_dim, self.n_actions, cfg.dqn)
        self._pending: tuple[np.ndarray, int] | None = None
        self.losses: list[float] = []

    def build_state(
        self,
        net: Network,
        epoch_frames: list[KpiRecord],
        t_s: float,
        period_s: float,
    ) -> np.ndarray:
        utils = {b: 0.0 for b in self.station_ids}
        queue = {b: 0.0 for b in self.station_ids}
        if epoch_frames:
            for b in self.station_ids:
                utils[b] = float(np.mean([k.per_bs[b].util for k in epoch_frames if b in k.per_bs]))
            last = epoch_frames[-1]
            for b in self.station_ids:
                if b in last.per_bs:
                    cap = net.capacity_estimate_bps(b) * net.frame_s
                    queue[b] = min(last.per_bs[b].queued_bits / cap, 1.0) if cap > 0 else 0.0
        phase = 2.0 * math.pi * (t_s % period_s) / period_s
        state = [utils[b] for b in self.station_ids]
        state += [queue[b] for b in self.station_ids]
        state += [math.sin(phase), math.cos(phase)]
        return np.asarray(state, dtype=np.float64)

    def decide_mask(self, state: np.ndarray, training: bool) -> int:
        """Trains on the previous epoch's pending pair, then picks a mask."""
        if training and self._pending is not None:
            raise RlError("previous epoch reward not recorded before new decision")
        if training:
            action = self.agent.act(state)
            self._pending = (state, int(action))
        else:
            action = self.agent.greedy(state)
        return int(action)

    def record_epoch(self, reward: float, next_state: np.ndarray, terminal: bool) -> None:
        if self._pending is None:
            return
        state, action = self._pending
        self.agent.push(Transition(state, action, reward, next_state, terminal))
        self._pending = None
        for _ in range(max(self.cfg.updates_per_decision, 1)):
            loss = self.agent.train_step()
            if loss is not None:
                self.losses.append(loss)

    def end_episode(self) -> None:
        self._pending = None

    def mask_to_sleeping_ids(self, mask: int) -> list[str]:
        if not 0 <= mask < self.n_actions:
            raise RlError(f"mask {mask} out of range for {len(self.small_ids)} small cells")
        return [sid for i, sid in enumerate(self.small_ids) if mask & (1 << i)]


def apply_mask(net: Network, sleeping_ids: list[str]) -> None:
    """Reconcile small-cell sleep states with the requested set."""
    from ..netsim import set_sleep

    want = set(sleeping_ids)
    for bs in net.small_cells():
        should_sleep = bs.id in want
        if (bs.state == BsState.SLEEPING) != should_sleep:
            set_sleep(net, bs.id, should_sleep)
