"""Geodesic distance and time-to-collision helpers."""

from __future__ import annotations

import math
from dataclasses import dataclass

EARTH_RADIUS_M = 6_371_000.0
EPS_SPEED = 0.1
INF = math.inf


@dataclass(frozen=True)
class GeoPoint:
    """Latitude/longitude pair in radians."""

    lat: float
    lon: float

    def __post_init__(self):
        if not (-math.pi / 2 <= self.lat <= math.pi / 2):
            raise ValueError(f"latitude out of range: {self.lat}")
        if not (-math.pi <= self.lon <= math.pi):
            raise ValueError(f"longitude out of range: {self.lon}")

    @classmethod
    def from_degrees(cls, lat_deg: float, lon_deg: float) -> "GeoPoint":
        return cls(math.radians(lat_deg), math.radians(lon_deg))


@dataclass(frozen=True)
class KinematicPair:
    leader_pos: float
    leader_len: float
    leader_speed: float
    follower_pos: float
    follower_speed: float

    def __post_init__(self):
        if self.leader_len <= 0:
            raise ValueError("leader_len must be positive")
        if self.leader_speed < 0 or self.follower_speed < 0:
            raise ValueError("speeds must be non-negative")

    @property
    def bumper_gap(self) -> float:
        return self.leader_pos - self.follower_pos - self.leader_len


class CollisionCondition(float):
    """Marker returned by :func:`time_to_collision` when the bumper gap is negative.

    It is a float (the negative gap) so callers can still inspect the overlap,
    but ``isinstance(ttc, CollisionCondition)`` distinguishes it from a TTC.
    """


def haversine_distance(a: GeoPoint, b: GeoPoint, radius: float = EARTH_RADIUS_M) -> float:
    """Great-circle distance in meters between two points."""
    dlat = a.lat - b.lat
    dlon = a.lon - b.lon
    h = math.sin(dlat / 2) ** 2 + math.cos(a.lat) * math.cos(b.lat) * math.sin(dlon / 2) ** 2
    # rounding can push h a hair above 1 for antipodal points
    h = min(1.0, max(0.0, h))
    return 2.0 * radius * math.asin(math.sqrt(h))


def ttc(gap: float, follower_speed: float, leader_speed: float) -> float:
    """TTC from a precomputed bumper gap; ``inf`` unless the follower closes in."""
    closing = follower_speed - leader_speed
    if closing > 0:
        return gap / closing
    return INF


def time_to_collision(p: KinematicPair) -> float:
    """Time until the follower's front bumper reaches the leader's rear bumper.

    Returns ``math.inf`` when the follower is not faster than the leader and a
    :class:`CollisionCondition` (carrying the negative gap) when the vehicles
    already overlap.
    """
    gap = p.bumper_gap
    if gap < 0:
        return CollisionCondition(gap)
    return ttc(gap, p.follower_speed, p.leader_speed)


def time_to_point(distance: float, speed: float) -> float:
    if distance < 0:
        raise ValueError("distance must be non-negative")
    return distance / max(speed, EPS_SPEED)
