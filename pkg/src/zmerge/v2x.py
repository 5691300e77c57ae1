"""Communication-limited information layer: V2V neighbor discovery and the
roadside unit's zone summaries."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from zmerge import _kernels as K
from zmerge.geo import time_to_point
from zmerge.road import ZoneId
from zmerge.sim import Vehicle, World, queue_lengths, zone_summary


@dataclass(frozen=True)
class NeighborRecord:
    vehicle_id: int
    speed: float
    accel: float
    lane: int
    time_to_merge: float
    distance_to_ego: float

    def features(self) -> tuple[float, float, int, float, float]:
        return (self.speed, self.accel, self.lane, self.time_to_merge, self.distance_to_ego)


@dataclass(frozen=True)
class GlobalSummary:
    premerge_speed: float
    premerge_density: float
    merge_speed: float
    merge_density: float
    ramp_speed: float
    ramp_density: float
    queue_premerge: int
    queue_accel: int
    tick: int

    def payload(self) -> tuple[float, ...]:
        return (self.premerge_speed, self.premerge_density, self.merge_speed, self.merge_density,
                self.ramp_speed, self.ramp_density, float(self.queue_premerge), float(self.queue_accel))

    def to_dict(self) -> dict:
        return asdict(self)


def time_to_merge(world: World, veh: Vehicle) -> float:
    return time_to_point(world.net.distance_to_merge_point(veh.pos), veh.speed)


def visible_neighbors(world: World, ego: Vehicle, range_m: float | None = None,
                      max_count: int | None = None) -> list[NeighborRecord]:
    """Up to ``max_count`` other vehicles within ``range_m`` of ``ego``, nearest first.

    Ties in distance are broken by vehicle id.
    """
    cfg, net = world.cfg, world.net
    range_m = cfg.v2v_range if range_m is None else range_m
    max_count = cfg.max_neighbors if max_count is None else max_count
    vs = world.sorted_vehicles()
    ego_slot = next(i for i, v in enumerate(vs) if v.id == ego.id)
    if net.geo_origin is None:
        xs = np.fromiter((v.pos for v in vs), dtype=np.float64, count=len(vs))
        ys = np.fromiter((net.lateral_offset(v.lane) for v in vs), dtype=np.float64, count=len(vs))
        ids = np.fromiter((v.id for v in vs), dtype=np.int64, count=len(vs))
        slots, dists = K.nearest_within(xs, ys, ids, ego_slot, range_m, max_count)
    else:
        cand = sorted(
            (d, v.id, j)
            for j, v in enumerate(vs)
            if j != ego_slot and (d := net.distance(ego.pos, ego.lane, v.pos, v.lane)) <= range_m
        )[:max_count]
        slots, dists = [c[2] for c in cand], [c[0] for c in cand]
    return [
        NeighborRecord(vs[j].id, vs[j].speed, vs[j].accel, vs[j].lane, time_to_merge(world, vs[j]), d)
        for j, d in zip(slots, dists)
    ]


def build_summary(world: World) -> GlobalSummary:
    pre = zone_summary(world, ZoneId.PREMERGING)
    mer = zone_summary(world, ZoneId.MERGING)
    ramp = zone_summary(world, ZoneId.RAMP)
    q_p, q_a = queue_lengths(world)
    return GlobalSummary(pre.avg_speed, pre.density, mer.avg_speed, mer.density,
                         ramp.avg_speed, ramp.density, q_p, q_a, world.tick)


class Rsu:
    """Roadside unit covering the whole segment.

    One summary per tick; repeated requests within a tick get the same object,
    so every AV sees an identical payload.
    """

    def __init__(self, world: World):
        if world.cfg.v2x_range < world.net.segment_len:
            raise ValueError("RSU range does not cover the segment")
        self.world = world
        self._last: GlobalSummary | None = None

    def broadcast(self) -> GlobalSummary:
        if self._last is None or self._last.tick != self.world.tick:
            self._last = build_summary(self.world)
        return self._last


def rsu_broadcast(world: World) -> GlobalSummary:
    return build_summary(world)
