"""Static segment geometry: zones, lanes, merge point and acceleration lane.

Everything shares one longitudinal coordinate measured from the upstream end
of the mainline. The ramp runs parallel to the pre-merging zone and feeds the
acceleration lane, which spans the merging zone and ends at the merge point.

Lane ids: mainline lanes are ``0..n-1`` with 0 the rightmost (next to the
acceleration lane); :data:`ACCEL` is the acceleration lane and :data:`RAMP` the
on-ramp. A "left" change increases the lane id.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from zmerge.geo import EARTH_RADIUS_M, GeoPoint, haversine_distance

RAMP = -2
ACCEL = -1


class ZoneId(enum.IntEnum):
    WARMUP = 0
    PREMERGING = 1
    MERGING = 2
    RAMP = 3
    EXIT = 4  # buffer downstream of the merge point


class OffSegmentError(ValueError):
    pass


@dataclass(frozen=True)
class RoadNetwork:
    warmup_len: float = 50.0
    premerge_len: float = 150.0
    merge_len: float = 100.0
    ramp_len: float = 100.0
    mainline_lanes: int = 2
    segment_len: float = 320.0
    lane_width: float = 3.5
    geo_origin: GeoPoint | None = None

    def __post_init__(self):
        for name in ("warmup_len", "premerge_len", "merge_len", "ramp_len", "segment_len", "lane_width"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.mainline_lanes < 1:
            raise ValueError("need at least one mainline lane")
        if self.segment_len < self.merge_point:
            raise ValueError("segment ends before the merge point")

    # zone boundaries ----------------------------------------------------------

    @property
    def premerge_start(self) -> float:
        return self.warmup_len

    @property
    def merge_start(self) -> float:
        return self.warmup_len + self.premerge_len

    @property
    def merge_point(self) -> float:
        return self.warmup_len + self.premerge_len + self.merge_len

    @property
    def ramp_start(self) -> float:
        return self.merge_start - self.ramp_len

    @property
    def accel_len(self) -> float:
        return self.merge_len

    @property
    def lanes(self) -> list[int]:
        return [RAMP, ACCEL, *range(self.mainline_lanes)]

    @property
    def max_lane_ordinal(self) -> int:
        return self.mainline_lanes + 1

    def lane_ordinal(self, lane: int) -> int:
        """0 for the ramp, 1 for the acceleration lane, 2.. for mainline lanes."""
        return lane + 2

    def zone_length(self, zone: ZoneId) -> float:
        return {
            ZoneId.WARMUP: self.warmup_len,
            ZoneId.PREMERGING: self.premerge_len,
            ZoneId.MERGING: self.merge_len,
            ZoneId.RAMP: self.ramp_len,
            ZoneId.EXIT: self.segment_len - self.merge_point,
        }[zone]

    def lanes_in_zone(self, zone: ZoneId) -> int:
        if zone == ZoneId.RAMP:
            return 1
        if zone == ZoneId.MERGING:
            return self.mainline_lanes + 1
        return self.mainline_lanes

    # classification -----------------------------------------------------------

    def lane_exists(self, lane: int, pos: float) -> bool:
        if 0 <= lane < self.mainline_lanes:
            return 0.0 <= pos <= self.segment_len
        if lane == ACCEL:
            return self.merge_start <= pos <= self.merge_point
        if lane == RAMP:
            return self.ramp_start <= pos < self.merge_start
        return False

    def zone_of(self, pos: float, lane: int) -> ZoneId:
        if not self.lane_exists(lane, pos):
            raise OffSegmentError(f"position {pos} is not on lane {lane}")
        if lane == RAMP:
            return ZoneId.RAMP
        if lane == ACCEL:
            return ZoneId.MERGING
        if pos < self.premerge_start:
            return ZoneId.WARMUP
        if pos < self.merge_start:
            return ZoneId.PREMERGING
        if pos < self.merge_point:
            return ZoneId.MERGING
        return ZoneId.EXIT

    def distance_to_merge_point(self, pos: float) -> float:
        # ramp -> acceleration lane -> merge point is a straight path in this frame
        return max(0.0, self.merge_point - pos)

    # metric ---------------------------------------------------------------------

    def lateral_offset(self, lane: int) -> float:
        """Lateral coordinate of the lane center (acceleration lane at -w/2)."""
        return (lane + 0.5) * self.lane_width

    def to_geo(self, pos: float, lane: int) -> GeoPoint:
        if self.geo_origin is None:
            raise ValueError("network has no geo origin")
        o = self.geo_origin
        lat = o.lat + self.lateral_offset(lane) / EARTH_RADIUS_M
        lon = o.lon + pos / (EARTH_RADIUS_M * math.cos(o.lat))
        return GeoPoint(lat, lon)

    def distance(self, pos_a: float, lane_a: int, pos_b: float, lane_b: int) -> float:
        if self.geo_origin is not None:
            return haversine_distance(self.to_geo(pos_a, lane_a), self.to_geo(pos_b, lane_b))
        return math.hypot(pos_a - pos_b, self.lateral_offset(lane_a) - self.lateral_offset(lane_b))


def build_network(cfg) -> RoadNetwork:
    """Build the segment from a :class:`~zmerge.config.SimConfig`-like object."""
    origin = None
    if getattr(cfg, "geo_origin_deg", None) is not None:
        origin = GeoPoint.from_degrees(*cfg.geo_origin_deg)
    return RoadNetwork(
        warmup_len=cfg.warmup_len,
        premerge_len=cfg.premerge_len,
        merge_len=cfg.merge_len,
        ramp_len=cfg.ramp_len,
        mainline_lanes=cfg.mainline_lanes,
        segment_len=cfg.segment_len,
        lane_width=cfg.lane_width,
        geo_origin=origin,
    )
