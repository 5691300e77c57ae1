import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from zmerge.geo import (
    EARTH_RADIUS_M,
    CollisionCondition,
    GeoPoint,
    KinematicPair,
    haversine_distance,
    time_to_collision,
    time_to_point,
    ttc,
)

lats = st.floats(-math.pi / 2, math.pi / 2)
lons = st.floats(-math.pi, math.pi)
points = st.builds(GeoPoint, lats, lons)


def test_coincident_points_are_zero_apart():
    p = GeoPoint.from_degrees(48.1, 11.5)
    assert haversine_distance(p, p) == 0.0


def test_one_degree_of_longitude_on_the_equator():
    d = haversine_distance(GeoPoint.from_degrees(0, 0), GeoPoint.from_degrees(0, 1))
    assert d == pytest.approx(EARTH_RADIUS_M * math.radians(1), abs=1e-6)
    assert d == pytest.approx(111_194.9, abs=0.1)


def test_antipodes_are_half_the_circumference():
    d = haversine_distance(GeoPoint(0.0, 0.0), GeoPoint(0.0, math.pi))
    assert d == pytest.approx(math.pi * EARTH_RADIUS_M)


@pytest.mark.parametrize("lat,lon", [(2.0, 0.0), (0.0, -3.2), (math.nan, 0.0)])
def test_geopoint_rejects_out_of_range(lat, lon):
    with pytest.raises(ValueError):
        GeoPoint(lat, lon)


@given(points, points)
def test_haversine_symmetric_and_nonnegative(a, b):
    d = haversine_distance(a, b)
    assert d >= 0.0
    assert d == haversine_distance(b, a)
    assert d <= math.pi * EARTH_RADIUS_M + 1e-6


def test_ttc_hand_example():
    p = KinematicPair(leader_pos=100, leader_len=5, leader_speed=10, follower_pos=50, follower_speed=20)
    assert time_to_collision(p) == pytest.approx(4.5)


def test_ttc_equal_speeds_is_infinite():
    p = KinematicPair(100, 5, 10, 50, 10)
    assert time_to_collision(p) == math.inf


def test_ttc_zero_gap_closing_is_zero():
    p = KinematicPair(100, 5, 10, 95, 12)
    assert time_to_collision(p) == 0.0


def test_overlap_is_a_collision_condition_not_a_ttc():
    p = KinematicPair(100, 5, 10, 96, 12)
    out = time_to_collision(p)
    assert isinstance(out, CollisionCondition)
    assert out == pytest.approx(-1.0)


def test_kinematic_pair_validation():
    with pytest.raises(ValueError):
        KinematicPair(100, 0, 10, 50, 10)
    with pytest.raises(ValueError):
        KinematicPair(100, 5, -1, 50, 10)


@given(st.floats(0.1, 500), st.floats(0, 30), st.floats(0.01, 20), st.floats(0.01, 20))
def test_ttc_strictly_decreasing_in_closing_speed(gap, v_lead, d1, d2):
    lo, hi = sorted((d1, d2))
    if hi - lo < 1e-6:
        return
    assert ttc(gap, v_lead + hi, v_lead) < ttc(gap, v_lead + lo, v_lead)


@given(st.floats(0, 500), st.floats(0, 40), st.floats(0, 40))
def test_ttc_infinite_iff_not_closing(gap, vf, vl):
    assert (ttc(gap, vf, vl) == math.inf) == (vf <= vl)


@pytest.mark.parametrize("d,v,expected", [(100, 10, 10.0), (0, 7, 0.0), (50, 0, 500.0)])
def test_time_to_point(d, v, expected):
    assert time_to_point(d, v) == pytest.approx(expected)


def test_time_to_point_rejects_negative_distance():
    with pytest.raises(ValueError):
        time_to_point(-1.0, 5.0)
