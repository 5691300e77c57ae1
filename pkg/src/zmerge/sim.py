"""Discrete-time on-ramp traffic microsimulator.

Human-driven vehicles follow IDM longitudinally and MOBIL laterally. Automated
vehicles execute whatever the agent layer loaded into their controller (see
:mod:`zmerge.actions`). The world is stepped by a single writer; observation
and metric code only reads it between ticks.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from zmerge import _kernels as K
from zmerge.actions import apply_action
from zmerge.config import SimConfig
from zmerge.road import ACCEL, RAMP, RoadNetwork, ZoneId, build_network

INF = math.inf


class Role(str, enum.Enum):
    AV = "AV"
    HV = "HV"


class Route(str, enum.Enum):
    MAINLINE = "mainline"
    RAMP = "ramp"


class EventKind(str, enum.Enum):
    SPAWN = "spawn"
    COLLISION = "collision"
    EXIT = "exit"
    DEADLOCK = "deadlock"
    LANE_CHANGE = "lane_change"
    MERGE = "merge"


@dataclass(frozen=True)
class SimEvent:
    kind: EventKind
    tick: int
    ids: tuple[int, ...]

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "tick": self.tick, "ids": list(self.ids)}


@dataclass(eq=False)
class Vehicle:
    id: int
    role: Role
    lane: int
    pos: float
    speed: float
    route: Route
    spawn_time: float = 0.0
    accel: float = 0.0
    length: float = 5.0
    desired_gap: float = 10.0
    # controller state (AVs)
    control: str = "gap"
    cmd_accel: float | None = None
    lc_intent: int = 0
    lateral_autopilot: bool = False
    # bookkeeping
    last_lc_time: float = -INF
    stopped_ticks: int = 0
    merged: bool = False
    lane_changed: bool = False
    lc_clearance: float = INF

    @property
    def is_av(self) -> bool:
        return self.role is Role.AV

    def to_dict(self) -> dict:
        return {
            "id": self.id, "role": self.role.value, "route": self.route.value, "lane": self.lane,
            "pos": self.pos, "speed": self.speed, "accel": self.accel,
            "desired_gap": self.desired_gap, "merged": self.merged,
        }


def lane_key(lane: int) -> int:
    """Ramp and acceleration lane form one continuous carriageway for car following."""
    return ACCEL if lane == RAMP else lane


class World:
    """Mutable simulation state plus the per-tick update."""

    def __init__(self, cfg: SimConfig, seed: int | None = None, network: RoadNetwork | None = None):
        self.cfg = cfg
        self.net = network if network is not None else build_network(cfg)
        self.rng = np.random.default_rng(cfg.seed if seed is None else seed)
        self.vehicles: dict[int, Vehicle] = {}
        self.tick = 0
        self.next_id = 0
        # entry point -> deferred arrivals
        self.entries = [lane for lane in range(self.net.mainline_lanes)] + [RAMP]
        self.pending = {lane: 0 for lane in self.entries}
        self.arrivals = {lane: 0 for lane in self.entries}
        self.counts = {"spawned": 0, "exited": 0, "collided": 0, "deadlocked": 0}
        # vehicles removed during the last step, with the reason
        self.removed: dict[int, tuple[Vehicle, EventKind]] = {}
        self.av_lateral_autopilot = False

    @property
    def time(self) -> float:
        return self.tick * self.cfg.dt

    def sorted_vehicles(self) -> list[Vehicle]:
        return [self.vehicles[i] for i in sorted(self.vehicles)]

    def add_vehicle(self, veh: Vehicle) -> Vehicle:
        if veh.id in self.vehicles:
            raise ValueError(f"duplicate vehicle id {veh.id}")
        self.vehicles[veh.id] = veh
        self.next_id = max(self.next_id, veh.id + 1)
        return veh

    def snapshot_arrays(self, vehicles: list[Vehicle] | None = None):
        vs = self.sorted_vehicles() if vehicles is None else vehicles
        keys = np.fromiter((lane_key(v.lane) for v in vs), dtype=np.int64, count=len(vs))
        pos = np.fromiter((v.pos for v in vs), dtype=np.float64, count=len(vs))
        return vs, keys, pos

    # -- queries ----------------------------------------------------------------

    def leader_of(self, veh: Vehicle, lane: int | None = None, pos: float | None = None):
        """Nearest vehicle ahead on ``lane`` (default: the vehicle's own) and its bumper gap."""
        vs, keys, p = self.snapshot_arrays()
        lane = veh.lane if lane is None else lane
        x = veh.pos if pos is None else pos
        slot = vs.index(veh) if veh.id in self.vehicles else -1
        lead, _ = K.leader_follower_at(keys, p, lane_key(lane), x, slot)
        if lead < 0:
            return None, INF
        ld = vs[lead]
        return ld, ld.pos - ld.length - x

    def neighbors_in_lane(self, veh: Vehicle, lane: int):
        """(leader, follower) around ``veh``'s position on ``lane``, excluding ``veh``."""
        vs, keys, p = self.snapshot_arrays()
        slot = vs.index(veh) if veh.id in self.vehicles else -1
        lead, foll = K.leader_follower_at(keys, p, lane_key(lane), veh.pos, slot)
        return (vs[lead] if lead >= 0 else None), (vs[foll] if foll >= 0 else None)

    def clearance(self, veh: Vehicle, lane: int) -> float:
        """Smallest bumper clearance to the leader/follower on ``lane`` (inf if none)."""
        lead, foll = self.neighbors_in_lane(veh, lane)
        d = INF
        if lead is not None:
            d = min(d, lead.pos - lead.length - veh.pos)
        if foll is not None:
            d = min(d, veh.pos - veh.length - foll.pos)
        return d

    # -- models -----------------------------------------------------------------

    def idm(self, v: float, gap: float, v_lead: float) -> float:
        c = self.cfg
        return K.idm_scalar(v, gap, v_lead, c.v_max, c.tau, c.idm_a, c.idm_b, c.idm_s0,
                            c.idm_delta, c.a_min, c.a_max)

    def idm_for(self, veh: Vehicle) -> float:
        """IDM acceleration of ``veh`` in the current state, lane end included."""
        leader, gap = self.leader_of(veh)
        if leader is None and lane_key(veh.lane) == ACCEL:
            return self.idm(veh.speed, self.net.merge_point - veh.pos, 0.0)
        return self.idm(veh.speed, gap, leader.speed if leader is not None else 0.0)

    def gap_control(self, veh: Vehicle, gap: float, v_lead: float | None) -> float:
        c = self.cfg
        if v_lead is None or gap > c.v2v_range:
            acc = c.gap_kv * (c.v_max - veh.speed)
        else:
            acc = c.gap_kp * (gap - veh.desired_gap) + c.gap_kv * (v_lead - veh.speed)
        return min(c.a_max, max(c.a_min, acc))

    # -- the tick ---------------------------------------------------------------

    def step(self, joint_actions=None) -> list[SimEvent]:
        """Advance the world by one tick and return the events of that tick."""
        self.tick += 1
        self.removed = {}
        events: list[SimEvent] = []
        for v in self.vehicles.values():
            v.lane_changed = False
            v.lc_clearance = INF
        if joint_actions:
            for vid in sorted(joint_actions):
                apply_action(self, vid, joint_actions[vid])

        self._lane_changes(events)
        self._longitudinal()
        self._post_move(events)
        self._spawn(events)
        return events

    def _lane_changes(self, events: list[SimEvent]) -> None:
        c = self.cfg
        for veh in self.sorted_vehicles():
            target = None
            if veh.is_av and veh.lc_intent:
                target = veh.lane + veh.lc_intent
                veh.lc_intent = 0
            elif not veh.is_av or (veh.lateral_autopilot and veh.lane == ACCEL):
                if self.time - veh.last_lc_time >= c.lane_change_cooldown - 1e-9:
                    target = hv_lane_change(self, veh)
            if target is None or not self.net.lane_exists(target, veh.pos):
                continue
            veh.lc_clearance = self.clearance(veh, target)
            veh.lane = target
            veh.lane_changed = True
            veh.last_lc_time = self.time
            events.append(SimEvent(EventKind.LANE_CHANGE, self.tick, (veh.id,)))

    def _longitudinal(self) -> None:
        c = self.cfg
        vs, keys, pos = self.snapshot_arrays()
        if not vs:
            return
        leader, _ = K.lane_neighbors(keys, pos)
        acc = np.empty(len(vs))
        for i, veh in enumerate(vs):
            li = leader[i]
            if li >= 0:
                ld = vs[li]
                gap, v_lead = ld.pos - ld.length - veh.pos, ld.speed
            elif keys[i] == ACCEL:
                # end of the acceleration lane acts as a standing obstacle
                gap, v_lead = self.net.merge_point - veh.pos, 0.0
            else:
                gap, v_lead = INF, None
            if not veh.is_av:
                a = self.idm(veh.speed, gap, 0.0 if v_lead is None else v_lead)
            elif veh.cmd_accel is not None:
                a = min(c.a_max, max(c.a_min, veh.cmd_accel))
                veh.cmd_accel = None
            else:
                a = self.gap_control(veh, gap, v_lead)
            acc[i] = a
            veh.accel = a
        speed = np.fromiter((v.speed for v in vs), dtype=np.float64, count=len(vs))
        K.euler_step(pos, speed, acc, c.dt, c.v_max)
        for i, veh in enumerate(vs):
            veh.pos = float(pos[i])
            veh.speed = float(speed[i])

    def _post_move(self, events: list[SimEvent]) -> None:
        c, net = self.cfg, self.net
        for veh in self.sorted_vehicles():
            if veh.lane == RAMP and veh.pos >= net.merge_start:
                veh.lane = ACCEL
            if veh.lane == ACCEL and veh.pos > net.merge_point:
                veh.pos = net.merge_point
                veh.speed = 0.0
            if veh.route is Route.RAMP and not veh.merged and veh.lane >= 0 and veh.pos >= net.merge_point:
                veh.merged = True
                events.append(SimEvent(EventKind.MERGE, self.tick, (veh.id,)))

        for fid, lid in detect_collisions(self):
            events.append(SimEvent(EventKind.COLLISION, self.tick, (fid, lid)))
            for vid in (fid, lid):
                if vid in self.vehicles:
                    self._remove(vid, EventKind.COLLISION)
                    self.counts["collided"] += 1

        limit = int(round(c.deadlock_time / c.dt))
        for veh in self.sorted_vehicles():
            if (veh.lane == ACCEL and veh.pos >= net.merge_point - c.deadlock_zone
                    and veh.speed < c.deadlock_speed):
                veh.stopped_ticks += 1
            else:
                veh.stopped_ticks = 0
            if veh.stopped_ticks > limit:
                events.append(SimEvent(EventKind.DEADLOCK, self.tick, (veh.id,)))
                self._remove(veh.id, EventKind.DEADLOCK)
                self.counts["deadlocked"] += 1
            elif veh.pos >= net.segment_len:
                events.append(SimEvent(EventKind.EXIT, self.tick, (veh.id,)))
                self._remove(veh.id, EventKind.EXIT)
                self.counts["exited"] += 1

    def _remove(self, vid: int, why: EventKind) -> None:
        self.removed[vid] = (self.vehicles.pop(vid), why)

    def _spawn(self, events: list[SimEvent]) -> None:
        for veh in spawn_arrivals(self.rng, self.cfg, self.tick, world=self):
            self.add_vehicle(veh)
            self.counts["spawned"] += 1
            events.append(SimEvent(EventKind.SPAWN, self.tick, (veh.id,)))

    # -- trace --------------------------------------------------------------------

    def trace_record(self, events: list[SimEvent], summary=None) -> dict:
        rec = {
            "tick": self.tick,
            "vehicles": [v.to_dict() for v in self.sorted_vehicles()],
            "removed": [dict(v.to_dict(), reason=why.value) for v, why in
                        (self.removed[i] for i in sorted(self.removed))],
            "events": [e.to_dict() for e in events],
        }
        if summary is not None:
            rec["summary"] = summary.to_dict()
        return rec


# ---------------------------------------------------------------------------
# arrivals


def arrival_rates(cfg: SimConfig) -> dict[str, float]:
    """Per-entry Poisson rates in veh/s."""
    return {"mainline": cfg.mainline_flow / 3600.0, "ramp": cfg.ramp_flow / 3600.0}


def spawn_probability(rate_per_s: float, dt: float) -> float:
    """Probability of at least one arrival in a tick."""
    return 1.0 - math.exp(-rate_per_s * dt)


def draw_arrivals(rng: np.random.Generator, cfg: SimConfig, n_mainline: int) -> list[int]:
    """Poisson arrival counts for one tick: one per mainline lane, then the ramp."""
    rates = arrival_rates(cfg)
    lam = [rates["mainline"] * cfg.dt] * n_mainline + [rates["ramp"] * cfg.dt]
    return [int(rng.poisson(x)) if x > 0 else 0 for x in lam]


def spawn_arrivals(rng: np.random.Generator, cfg: SimConfig, tick: int, world: World) -> list[Vehicle]:
    """Draw this tick's arrivals and release deferred vehicles whose entry is clear.

    At most one vehicle per entry per tick; the rest stay pending so the
    long-run rate is preserved.
    """
    net = world.net
    counts = draw_arrivals(rng, cfg, net.mainline_lanes)
    out = []
    vs, keys, pos = world.snapshot_arrays()
    for entry, n in zip(world.entries, counts):
        world.arrivals[entry] += n
        world.pending[entry] += n
        if world.pending[entry] == 0:
            continue
        x0 = net.ramp_start if entry == RAMP else 0.0
        lead, _ = K.leader_follower_at(keys, pos, lane_key(entry), x0, -1)
        v0 = cfg.ramp_entry_speed if entry == RAMP else cfg.mainline_entry_speed
        if lead >= 0:
            ld = vs[lead]
            clear = ld.pos - ld.length - x0
            if clear < cfg.spawn_headway:
                continue
            if clear < 50.0:
                v0 = min(v0, ld.speed)
        world.pending[entry] -= 1
        role = Role.AV if rng.random() < cfg.penetration_rate else Role.HV
        veh = Vehicle(
            id=world.next_id + len(out), role=role, lane=entry, pos=x0, speed=v0,
            route=Route.RAMP if entry == RAMP else Route.MAINLINE,
            spawn_time=tick * cfg.dt, length=cfg.vehicle_length,
            desired_gap=cfg.default_desired_gap,
            lateral_autopilot=world.av_lateral_autopilot and role is Role.AV,
        )
        out.append(veh)
    return out


# ---------------------------------------------------------------------------
# human driver models


def hv_longitudinal_accel(world: World, veh: Vehicle, leader: Vehicle | None) -> float:
    """IDM acceleration towards ``leader`` (free road if None)."""
    if leader is None:
        return world.idm(veh.speed, INF, 0.0)
    return world.idm(veh.speed, leader.pos - leader.length - veh.pos, leader.speed)


def mobil_accept(a_c: float, a_c_new: float, a_o: float, a_o_new: float, a_n: float, a_n_new: float,
                 politeness: float, b_safe: float, threshold: float, mandatory: bool = False) -> bool:
    """MOBIL incentive and safety test.

    ``c`` is the changing vehicle, ``o`` its current follower and ``n`` the
    follower in the target lane; ``*_new`` are accelerations after the change.
    A mandatory change skips the incentive test but not the safety veto.
    """
    if a_n_new < -b_safe or a_c_new < -b_safe:
        return False
    if mandatory:
        return True
    gain = a_c_new - a_c + politeness * ((a_n_new - a_n) + (a_o_new - a_o))
    return gain > threshold


def _mobil_gain(world: World, veh: Vehicle, target: int, mandatory: bool) -> float | None:
    c = world.cfg
    lead_t, foll_t = world.neighbors_in_lane(veh, target)
    gap_lead = lead_t.pos - lead_t.length - veh.pos if lead_t is not None else INF
    gap_foll = veh.pos - veh.length - foll_t.pos if foll_t is not None else INF
    if gap_lead < c.min_lane_change_gap or gap_foll < c.min_lane_change_gap:
        return None
    lead_c, foll_c = world.neighbors_in_lane(veh, veh.lane)
    if veh.lane == ACCEL and lead_c is None:
        a_c = world.idm(veh.speed, world.net.merge_point - veh.pos, 0.0)
    else:
        a_c = hv_longitudinal_accel(world, veh, lead_c)
    a_c_new = hv_longitudinal_accel(world, veh, lead_t)
    a_o = a_o_new = a_n = a_n_new = 0.0
    if foll_c is not None:
        a_o = hv_longitudinal_accel(world, foll_c, veh)
        a_o_new = hv_longitudinal_accel(world, foll_c, lead_c)
    if foll_t is not None:
        a_n = hv_longitudinal_accel(world, foll_t, lead_t)
        a_n_new = hv_longitudinal_accel(world, foll_t, veh)
    if not mobil_accept(a_c, a_c_new, a_o, a_o_new, a_n, a_n_new, c.mobil_politeness,
                        c.mobil_b_safe, c.mobil_threshold, mandatory):
        return None
    return a_c_new - a_c + c.mobil_politeness * ((a_n_new - a_n) + (a_o_new - a_o))


def hv_lane_change(world: World, veh: Vehicle) -> int | None:
    """Target lane chosen by MOBIL, or None to stay.

    Vehicles on the acceleration lane must merge into lane 0 (mandatory);
    mainline vehicles choose between adjacent mainline lanes and never enter
    the acceleration lane.
    """
    n = world.net.mainline_lanes
    if veh.lane == RAMP:
        return None
    if veh.lane == ACCEL:
        return 0 if _mobil_gain(world, veh, 0, mandatory=True) is not None else None
    best, best_gain = None, -INF
    for target in (veh.lane + 1, veh.lane - 1):
        if not 0 <= target < n:
            continue
        gain = _mobil_gain(world, veh, target, mandatory=False)
        if gain is not None and gain > best_gain:
            best, best_gain = target, gain
    return best


# ---------------------------------------------------------------------------
# measurements


def detect_collisions(world: World) -> list[tuple[int, int]]:
    """``(follower_id, leader_id)`` pairs on the same lane with negative bumper gap."""
    vs = world.sorted_vehicles()
    if len(vs) < 2:
        return []
    keys = np.fromiter((lane_key(v.lane) for v in vs), dtype=np.int64, count=len(vs))
    pos = np.fromiter((v.pos for v in vs), dtype=np.float64, count=len(vs))
    length = np.fromiter((v.length for v in vs), dtype=np.float64, count=len(vs))
    return [(vs[i].id, vs[j].id) for i, j in K.collision_pairs(keys, pos, length)]


def _slow_run(vs: list[Vehicle], cfg: SimConfig) -> int:
    if not vs:
        return 0
    pos = np.fromiter((v.pos for v in vs), dtype=np.float64, count=len(vs))
    speed = np.fromiter((v.speed for v in vs), dtype=np.float64, count=len(vs))
    return int(K.longest_slow_run(pos, speed, cfg.queue_speed, cfg.queue_headway))


def queue_lengths(world: World) -> tuple[int, int]:
    """(pre-merging mainline queue, acceleration-lane queue) in vehicles."""
    net, cfg = world.net, world.cfg
    q_p = 0
    vs = world.sorted_vehicles()
    for lane in range(net.mainline_lanes):
        in_zone = [v for v in vs if v.lane == lane and net.premerge_start <= v.pos < net.merge_start]
        q_p = max(q_p, _slow_run(in_zone, cfg))
    q_a = _slow_run([v for v in vs if v.lane == ACCEL], cfg)
    return q_p, q_a


@dataclass(frozen=True)
class ZoneStats:
    avg_speed: float
    density: float


def zone_summary(world: World, zone: ZoneId) -> ZoneStats:
    """Mean speed (m/s) and density (veh/km/lane) of one zone."""
    net = world.net
    speeds = [v.speed for v in world.sorted_vehicles() if net.zone_of(v.pos, v.lane) == zone]
    if not speeds:
        empty = world.cfg.v_max if world.cfg.empty_zone_speed == "vmax" else 0.0
        return ZoneStats(empty, 0.0)
    density = len(speeds) / (net.zone_length(zone) / 1000.0 * net.lanes_in_zone(zone))
    return ZoneStats(math.fsum(speeds) / len(speeds), density)


def mean_speed(world: World) -> float:
    speeds = [v.speed for v in world.sorted_vehicles()]
    return math.fsum(speeds) / len(speeds) if speeds else 0.0
