import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import place, quiet_config
from zmerge.config import SimConfig
from zmerge.road import ACCEL, ZoneId
from zmerge.sim import World, queue_lengths, zone_summary
from zmerge.v2x import Rsu, build_summary, rsu_broadcast, time_to_merge, visible_neighbors


def test_no_neighbors_in_range(quiet_world):
    w = quiet_world
    ego = place(w, 0, 10.0)
    place(w, 0, 150.0)
    assert visible_neighbors(w, ego) == []


def test_six_nearest_sorted(quiet_world):
    w = quiet_world
    ego = place(w, 0, 150.0)
    others = [place(w, i % 2, 150.0 + d) for i, d in enumerate([30, -5, 12, 50, -40, 8, 70, -90])]
    got = visible_neighbors(w, ego)
    net = w.net
    oracle = sorted((math.hypot(o.pos - ego.pos, net.lateral_offset(o.lane) - net.lateral_offset(ego.lane)), o.id)
                    for o in others)
    assert [r.vehicle_id for r in got] == [i for _, i in oracle[:6]]
    dists = [r.distance_to_ego for r in got]
    assert dists == sorted(dists)


def test_boundary_is_closed(quiet_world):
    w = quiet_world
    ego = place(w, 0, 100.0)
    place(w, 0, 200.0)
    assert len(visible_neighbors(w, ego)) == 1


def test_ties_broken_by_id(quiet_world):
    w = quiet_world
    ego = place(w, 0, 100.0)
    a = place(w, 0, 110.0)
    b = place(w, 0, 90.0)
    assert [r.vehicle_id for r in visible_neighbors(w, ego)] == [a.id, b.id]


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(-1, 1), st.floats(200, 300)), min_size=1, max_size=15))
def test_neighbor_lists_exclude_ego_and_far_vehicles(rows):
    w = World(quiet_config(), seed=0)
    vs = [place(w, lane, pos) for lane, pos in rows]
    for ego in vs:
        recs = visible_neighbors(w, ego)
        assert len(recs) <= 6
        assert all(r.vehicle_id != ego.id and r.distance_to_ego <= 100.0 for r in recs)


def test_geo_mapped_neighbors_use_haversine():
    w = World(quiet_config(geo_origin_deg=[40.0, -3.7]), seed=0)
    ego = place(w, 0, 150.0)
    near = place(w, 1, 160.0)
    place(w, 0, 260.0)
    recs = visible_neighbors(w, ego)
    assert [r.vehicle_id for r in recs] == [near.id]
    assert recs[0].distance_to_ego == pytest.approx(math.hypot(10.0, 3.5), rel=1e-6)


def test_empty_world_summary_is_zero(quiet_world):
    s = rsu_broadcast(quiet_world)
    assert s.payload() == (0.0,) * 8


def test_summary_matches_zone_summary():
    w = World(SimConfig(), seed=4)
    for _ in range(300):
        w.step()
    s = build_summary(w)
    pre, mer, ramp = (zone_summary(w, z) for z in (ZoneId.PREMERGING, ZoneId.MERGING, ZoneId.RAMP))
    assert s.payload()[:6] == (pre.avg_speed, pre.density, mer.avg_speed, mer.density, ramp.avg_speed, ramp.density)
    assert (s.queue_premerge, s.queue_accel) == queue_lengths(w)
    assert len(s.payload()) == 8 and min(s.payload()) >= 0


def test_rsu_same_payload_within_tick_and_increasing_ticks():
    w = World(SimConfig(), seed=1)
    rsu = Rsu(w)
    ticks = []
    for _ in range(5):
        w.step()
        a, b = rsu.broadcast(), rsu.broadcast()
        assert a is b
        ticks.append(a.tick)
    assert ticks == sorted(set(ticks))


def test_rsu_range_must_cover_segment():
    w = World(quiet_config(v2x_range=100.0), seed=0)
    with pytest.raises(ValueError):
        Rsu(w)


def test_time_to_merge(quiet_world):
    w = quiet_world
    v = place(w, ACCEL, 250.0, speed=10.0)
    assert time_to_merge(w, v) == pytest.approx(5.0)
