"""Multi-agent environment surface: observations, action profiling, rewards and
agent status on top of the simulator."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from zmerge.actions import FALLBACK, HybridAction
from zmerge.config import SimConfig
from zmerge.geo import ttc
from zmerge.road import ACCEL, RAMP
from zmerge.sim import EventKind, SimEvent, Vehicle, World, mean_speed, queue_lengths
from zmerge.v2x import GlobalSummary, Rsu, time_to_merge, visible_neighbors

OBS_DIM = 42
N_GLOBAL = 8
N_EGO = 4
N_NEIGHBOR_FEATURES = 5
PAD = -1.0

# normalization scales
DENSITY_SCALE = 100.0
QUEUE_SCALE = 20.0
TIME_SCALE = 30.0
DISTANCE_SCALE = 100.0
ACCEL_SCALE = 4.5

REWARD_NAMES = ("efficiency", "safety", "comfort", "queue", "deadlock", "lane_change")


class UnknownAgentError(KeyError):
    pass


class AgentStatus(str, enum.Enum):
    ACTIVE = "active"
    EXITED = "exited"
    COLLIDED = "collided"
    DEADLOCKED = "deadlocked"
    MERGED_OK = "merged_ok"

    @property
    def terminal(self) -> bool:
        return self is not AgentStatus.ACTIVE


# ---------------------------------------------------------------------------
# observation


def _clip(x: float) -> float:
    return -1.0 if x < -1.0 else (1.0 if x > 1.0 else x)


def build_observation(world: World, summary: GlobalSummary, agent_id: int) -> np.ndarray:
    """42-entry normalized observation: 8 RSU globals, 4 ego features, 6 x 5 neighbor features."""
    veh = world.vehicles.get(agent_id)
    if veh is None or not veh.is_av:
        raise UnknownAgentError(agent_id)
    cfg, net = world.cfg, world.net
    max_lane = net.max_lane_ordinal
    obs = np.full(OBS_DIM, PAD)
    obs[0] = _clip(summary.premerge_speed / cfg.v_max)
    obs[1] = _clip(summary.premerge_density / DENSITY_SCALE)
    obs[2] = _clip(summary.merge_speed / cfg.v_max)
    obs[3] = _clip(summary.merge_density / DENSITY_SCALE)
    obs[4] = _clip(summary.ramp_speed / cfg.v_max)
    obs[5] = _clip(summary.ramp_density / DENSITY_SCALE)
    obs[6] = _clip(summary.queue_premerge / QUEUE_SCALE)
    obs[7] = _clip(summary.queue_accel / QUEUE_SCALE)
    obs[8] = _clip(veh.speed / cfg.v_max)
    obs[9] = _clip(veh.accel / ACCEL_SCALE)
    obs[10] = net.lane_ordinal(veh.lane) / max_lane
    obs[11] = _clip(time_to_merge(world, veh) / TIME_SCALE)
    base = N_GLOBAL + N_EGO
    for n, rec in enumerate(visible_neighbors(world, veh)):
        i = base + n * N_NEIGHBOR_FEATURES
        obs[i] = _clip(rec.speed / cfg.v_max)
        obs[i + 1] = _clip(rec.accel / ACCEL_SCALE)
        obs[i + 2] = net.lane_ordinal(rec.lane) / max_lane
        obs[i + 3] = _clip(rec.time_to_merge / TIME_SCALE)
        obs[i + 4] = _clip(rec.distance_to_ego / DISTANCE_SCALE)
    return obs


def mask_global_block(obs: np.ndarray) -> np.ndarray:
    """Copy of ``obs`` with the RSU entries zeroed (local-information-only agents)."""
    out = np.array(obs, dtype=np.float64, copy=True)
    out[..., :N_GLOBAL] = 0.0
    return out


# ---------------------------------------------------------------------------
# action profiler


def is_valid_action(world: World, veh: Vehicle, a: HybridAction) -> bool:
    if not a.is_lane_change:
        return True
    if veh.lane == RAMP:
        return False
    target = veh.lane + a.lane_delta
    if not world.net.lane_exists(target, veh.pos):
        return False
    return world.clearance(veh, target) >= world.cfg.min_lane_change_gap


def validate_action(world: World, agent_id: int, a: HybridAction) -> HybridAction:
    """Return ``a`` if it can be executed, otherwise the maintain fallback."""
    veh = world.vehicles[agent_id]
    return a if is_valid_action(world, veh, a) else FALLBACK


# ---------------------------------------------------------------------------
# reward components (pure formulas)


def efficiency_reward(v_ego: float, v_mean: float, v_avg_max: float = 32.0, v_avg_min: float = 0.0,
                      v_max: float = 32.0, v_min: float = 0.0) -> float:
    e_g = -abs(v_mean - v_avg_max) / (v_avg_max - v_avg_min)
    e_l = -abs(v_ego - v_max) / (v_max - v_min)
    return e_g + e_l


def safety_reward(collided: bool, ttc_s: float, lane_changed: bool, clearance: float,
                  ttc_star: float = 1.2, delta: float = 12.0) -> float:
    if collided:
        return -1.0
    if ttc_s <= ttc_star:
        return -math.exp(-ttc_s)
    if lane_changed and clearance <= delta:
        return -delta / max(clearance, 1e-6)
    return 0.0


def queue_reward(q_premerge: int, q_accel: int) -> float:
    return -math.log10(1 + q_premerge + q_accel)


def comfort_reward(accel: float, alpha_max: float = 2.6) -> float:
    mag = abs(accel)
    if mag > alpha_max:
        return -(mag - alpha_max) / mag
    return 0.0


def deadlock_reward(on_accel_lane: bool, x: float, lane_len: float) -> float:
    if not on_accel_lane:
        return 0.0
    return -math.exp(-((x - lane_len) ** 2) / (10.0 * lane_len))


def lane_change_reward(changed: bool) -> float:
    return -1.0 if changed else 0.0


@dataclass(frozen=True)
class RewardBreakdown:
    raw: tuple[float, ...]
    squashed: tuple[float, ...]
    total: float

    def row(self) -> list[float]:
        return [*self.raw, *self.squashed, self.total]


def combine_rewards(parts, weights) -> RewardBreakdown:
    """Squash each component with tanh and take the weighted sum."""
    raw = tuple(float(p) for p in parts)
    if len(raw) != len(REWARD_NAMES) or len(weights) != len(REWARD_NAMES):
        raise ValueError("expected six reward components and six weights")
    squashed = tuple(math.tanh(r) for r in raw)
    total = math.fsum(w * s for w, s in zip(weights, squashed))
    return RewardBreakdown(raw, squashed, total)


# ---------------------------------------------------------------------------
# reward components bound to the world


def reward_efficiency(world: World, veh: Vehicle) -> float:
    v = world.cfg.v_max
    return efficiency_reward(veh.speed, mean_speed(world), v, 0.0, v, 0.0)


def leader_ttc(world: World, veh: Vehicle) -> float:
    leader, gap = world.leader_of(veh)
    if leader is None:
        return math.inf
    return ttc(gap, veh.speed, leader.speed)


def reward_safety(world: World, veh: Vehicle, collided: bool = False) -> float:
    c = world.cfg
    ttc_s = math.inf if collided else leader_ttc(world, veh)
    return safety_reward(collided, ttc_s, veh.lane_changed, veh.lc_clearance,
                         c.ttc_threshold, c.lateral_safety)


def reward_queue(world: World) -> float:
    return queue_reward(*queue_lengths(world))


def reward_comfort(world: World, veh: Vehicle) -> float:
    return comfort_reward(veh.accel, world.cfg.comfort_accel)


def reward_deadlock(world: World, veh: Vehicle) -> float:
    net = world.net
    return deadlock_reward(veh.lane == ACCEL, veh.pos - net.merge_start, net.accel_len)


def reward_lane_change(veh: Vehicle) -> float:
    return lane_change_reward(veh.lane_changed)


def agent_reward(world: World, veh: Vehicle, collided: bool, queue_r: float | None = None) -> RewardBreakdown:
    parts = (
        reward_efficiency(world, veh),
        reward_safety(world, veh, collided),
        reward_comfort(world, veh),
        reward_queue(world) if queue_r is None else queue_r,
        reward_deadlock(world, veh),
        reward_lane_change(veh),
    )
    return combine_rewards(parts, world.cfg.weights)


# ---------------------------------------------------------------------------
# episode driver


@dataclass
class StepResult:
    events: list[SimEvent]
    rewards: dict[int, RewardBreakdown]
    terminal: dict[int, bool]
    next_obs: dict[int, np.ndarray]
    executed: dict[int, HybridAction]
    summary: GlobalSummary
    n_invalid: int = 0


@dataclass
class MergeEnv:
    """Decision loop around one :class:`~zmerge.sim.World`.

    ``observe()`` returns the current observation of every AV; ``step()``
    validates and applies a joint action, advances the simulator and returns
    per-agent rewards, terminal flags and next observations.
    """

    cfg: SimConfig
    seed: int | None = None
    av_lateral_autopilot: bool = False
    world: World = field(init=False)
    status: dict[int, AgentStatus] = field(init=False)

    def __post_init__(self):
        self.reset(self.seed)

    def reset(self, seed: int | None = None) -> None:
        self.world = World(self.cfg, seed=seed)
        self.world.av_lateral_autopilot = self.av_lateral_autopilot
        self.rsu = Rsu(self.world)
        self.status = {}

    def agents(self) -> list[int]:
        return [v.id for v in self.world.sorted_vehicles() if v.is_av]

    def broadcast(self) -> GlobalSummary:
        return self.rsu.broadcast()

    def observe(self) -> dict[int, np.ndarray]:
        summary = self.broadcast()
        return {aid: build_observation(self.world, summary, aid) for aid in self.agents()}

    def agent_status(self, agent_id: int) -> AgentStatus:
        return self.status.get(agent_id, AgentStatus.ACTIVE)

    def _update_status(self, events: list[SimEvent]) -> None:
        world = self.world
        for ev in events:
            if ev.kind is EventKind.COLLISION:
                new = AgentStatus.COLLIDED
            elif ev.kind is EventKind.DEADLOCK:
                new = AgentStatus.DEADLOCKED
            elif ev.kind is EventKind.MERGE:
                new = AgentStatus.MERGED_OK
            elif ev.kind is EventKind.EXIT:
                new = AgentStatus.EXITED
            else:
                continue
            for vid in ev.ids:
                veh = world.vehicles.get(vid) or world.removed.get(vid, (None,))[0]
                if veh is None or not veh.is_av:
                    continue
                if self.status.get(vid, AgentStatus.ACTIVE).terminal:
                    continue  # absorbing
                self.status[vid] = new

    def step(self, actions: dict[int, HybridAction]) -> StepResult:
        world = self.world
        acting = self.agents()
        executed = {}
        n_invalid = 0
        for aid in acting:
            a = actions.get(aid, FALLBACK)
            v = validate_action(world, aid, a)
            n_invalid += v is not a
            executed[aid] = v
        events = world.step(executed)
        self._update_status(events)
        collided = {vid for ev in events if ev.kind is EventKind.COLLISION for vid in ev.ids}
        summary = self.broadcast()
        q_r = queue_reward(summary.queue_premerge, summary.queue_accel)
        rewards, terminal, next_obs = {}, {}, {}
        for aid in acting:
            if aid in world.vehicles:
                veh = world.vehicles[aid]
                terminal[aid] = False
                next_obs[aid] = build_observation(world, summary, aid)
            else:
                veh = world.removed[aid][0]
                terminal[aid] = True
            rewards[aid] = agent_reward(world, veh, aid in collided, q_r)
        return StepResult(events, rewards, terminal, next_obs, executed, summary, n_invalid)

