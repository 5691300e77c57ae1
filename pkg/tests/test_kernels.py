"""The compiled kernels and their pure-Python twin must agree bit for bit."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zmerge import _kernels as K

py = K.pykernels
cy = K.ckernels
needs_ext = pytest.mark.skipif(cy is None, reason="compiled extension not built")

IDM_ARGS = (32.0, 1.0, 2.6, 4.5, 2.0, 4.0, -4.5, 2.8)


def random_lanes(rng, n):
    lane = rng.integers(-1, 2, n).astype(np.int64)
    pos = rng.uniform(0, 320, n)
    # force some exact ties
    if n > 3:
        pos[1] = pos[0]
    return lane, pos


def test_backend_is_reported():
    assert K.BACKEND in ("cython", "python")


@needs_ext
@pytest.mark.parametrize("seed", range(20))
def test_lane_queries_match(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(0, 40))
    lane, pos = random_lanes(rng, n)
    assert list(cy.lane_neighbors(lane, pos)[0]) == list(py.lane_neighbors(lane, pos)[0])
    assert list(cy.lane_neighbors(lane, pos)[1]) == list(py.lane_neighbors(lane, pos)[1])
    for _ in range(10):
        x = float(rng.uniform(0, 320))
        tl = int(rng.integers(-1, 2))
        ex = int(rng.integers(-1, max(n, 1)))
        assert tuple(cy.leader_follower_at(lane, pos, tl, x, ex)) == tuple(py.leader_follower_at(lane, pos, tl, x, ex))
    length = rng.uniform(3, 8, n)
    assert [tuple(p) for p in cy.collision_pairs(lane, pos, length)] == \
        [tuple(p) for p in py.collision_pairs(lane, pos, length)]


@needs_ext
@given(st.floats(0, 32), st.one_of(st.just(math.inf), st.floats(-5, 300)), st.floats(0, 32))
def test_idm_matches(v, gap, vl):
    assert cy.idm_scalar(v, gap, vl, *IDM_ARGS) == py.idm_scalar(v, gap, vl, *IDM_ARGS)


@needs_ext
@given(st.lists(st.tuples(st.floats(0, 320), st.floats(0, 32), st.floats(-4.5, 2.8)), max_size=30))
def test_euler_matches(rows):
    a = np.array(rows, dtype=np.float64).reshape(-1, 3)
    p1, v1 = a[:, 0].copy(), a[:, 1].copy()
    p2, v2 = a[:, 0].copy(), a[:, 1].copy()
    cy.euler_step(p1, v1, a[:, 2].copy(), 0.1, 32.0)
    py.euler_step(p2, v2, a[:, 2].copy(), 0.1, 32.0)
    assert p1.tobytes() == p2.tobytes()
    assert v1.tobytes() == v2.tobytes()


@needs_ext
@settings(max_examples=200)
@given(st.lists(st.tuples(st.floats(0, 300), st.floats(0, 5)), max_size=25), st.floats(0.5, 5), st.floats(5, 30))
def test_slow_run_matches(rows, vt, hw):
    a = np.array(rows, dtype=np.float64).reshape(-1, 2)
    assert cy.longest_slow_run(a[:, 0], a[:, 1], vt, hw) == py.longest_slow_run(a[:, 0], a[:, 1], vt, hw)


@needs_ext
@pytest.mark.parametrize("seed", range(20))
def test_nearest_matches(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 30))
    xs = np.round(rng.uniform(0, 320, n), 0)  # rounding creates distance ties
    ys = rng.integers(-2, 2, n) * 3.5 + 1.75
    ids = rng.permutation(n).astype(np.int64)
    ego = int(rng.integers(n))
    s1, d1 = cy.nearest_within(xs, ys, ids, ego, 100.0, 6)
    s2, d2 = py.nearest_within(xs, ys, ids, ego, 100.0, 6)
    assert list(s1) == list(s2)
    assert [float(d) for d in d1] == [float(d) for d in d2]


# -- behaviour (checked against the reference implementation only) ---------------


def test_euler_update_arithmetic():
    pos, speed = np.array([0.0]), np.array([10.0])
    K.euler_step(pos, speed, np.array([1.0]), 0.1, 32.0)
    assert pos[0] == pytest.approx(1.005)
    assert speed[0] == pytest.approx(10.1)


def test_euler_clamps_speed_and_never_reverses():
    pos, speed = np.array([0.0, 0.0]), np.array([31.9, 0.2])
    K.euler_step(pos, speed, np.array([2.6, -4.5]), 0.1, 32.0)
    assert speed[0] == 32.0
    assert speed[1] == 0.0
    assert pos[1] == pytest.approx(0.2 ** 2 / 9.0)


def test_idm_free_road_equilibrium_and_start():
    assert K.idm_scalar(32.0, math.inf, 0.0, *IDM_ARGS) == pytest.approx(0.0, abs=1e-9)
    assert K.idm_scalar(0.0, math.inf, 0.0, *IDM_ARGS) == pytest.approx(2.6)
    assert K.idm_scalar(10.0, 2.0, 10.0, *IDM_ARGS) < -2.0


def test_collision_pairs_strict_inequality():
    lane = np.array([0, 0], dtype=np.int64)
    length = np.array([5.0, 5.0])
    assert list(K.collision_pairs(lane, np.array([94.99, 100.0]), length)) == []
    assert [tuple(p) for p in K.collision_pairs(lane, np.array([96.0, 100.0]), length)] == [(0, 1)]
    assert list(K.collision_pairs(np.array([0, 1], dtype=np.int64), np.array([100.0, 100.0]), length)) == []


def test_queue_example_accel_lane():
    # downstream -> upstream speeds with 8 m spacing
    pos = np.array([300.0, 292.0, 284.0, 276.0])
    speed = np.array([0.5, 1.0, 3.0, 0.1])
    assert K.longest_slow_run(pos, speed, 2.0, 20.0) == 2
