import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import place, quiet_config
from zmerge.actions import ACCELERATE, FALLBACK, GAP, LEFT, MAINTAIN, RIGHT, HybridAction
from zmerge.config import SimConfig
from zmerge.env import (
    OBS_DIM,
    AgentStatus,
    MergeEnv,
    UnknownAgentError,
    build_observation,
    combine_rewards,
    comfort_reward,
    deadlock_reward,
    efficiency_reward,
    is_valid_action,
    lane_change_reward,
    mask_global_block,
    queue_reward,
    safety_reward,
    validate_action,
)
from zmerge.road import ACCEL, RAMP
from zmerge.sim import EventKind, Route, World
from zmerge.v2x import rsu_broadcast


# -- actions --------------------------------------------------------------------


@pytest.mark.parametrize("k,x", [(0, 1.0), (2, None), (2, 3.0), (3, 4.9), (4, 10.0), (5, None), (2, math.nan)])
def test_malformed_actions_rejected(k, x):
    with pytest.raises(ValueError):
        HybridAction(k, x)


# -- observation ------------------------------------------------------------------


def test_lonely_agent_observation(quiet_world):
    w = quiet_world
    ego = place(w, 0, 100.0, speed=32.0, av=True)
    obs = build_observation(w, rsu_broadcast(w), ego.id)
    assert obs.shape == (OBS_DIM,) == (8 + 4 + 6 * 5,)
    assert np.all(obs[12:] == -1.0)
    assert obs[8] == 1.0


def test_observation_unknown_or_hv(quiet_world):
    w = quiet_world
    hv = place(w, 0, 100.0)
    with pytest.raises(UnknownAgentError):
        build_observation(w, rsu_broadcast(w), hv.id)
    with pytest.raises(UnknownAgentError):
        build_observation(w, rsu_broadcast(w), 999)


def test_global_block_identical_for_all_agents():
    env = MergeEnv(SimConfig(), seed=2)
    for _ in range(150):
        env.step({})
    obs = env.observe()
    assert len(obs) > 1
    blocks = {tuple(o[:8]) for o in obs.values()}
    assert len(blocks) == 1


def test_mask_global_block():
    o = np.linspace(-1, 1, OBS_DIM)
    m = mask_global_block(o)
    assert np.all(m[:8] == 0.0) and np.array_equal(m[8:], o[8:])
    assert o[0] == -1.0  # input untouched


# -- profiler -------------------------------------------------------------------------


def test_left_on_leftmost_lane_falls_back(quiet_world):
    w = quiet_world
    v = place(w, 1, 100.0, av=True)
    assert validate_action(w, v.id, HybridAction(LEFT)) == FALLBACK


def test_in_range_accel_is_unchanged(quiet_world):
    w = quiet_world
    v = place(w, 0, 100.0, av=True)
    a = HybridAction(ACCELERATE, -4.5)
    assert validate_action(w, v.id, a) is a


def test_merge_into_occupied_slot_falls_back(quiet_world):
    # left (into lane 0) from the acceleration lane is the merge in this geometry
    w = quiet_world
    v = place(w, ACCEL, 250.0, av=True)
    place(w, 0, 256.0)  # leader in the target lane, 1 m bumper gap
    assert validate_action(w, v.id, HybridAction(LEFT)) == FALLBACK
    w2 = World(quiet_config(), seed=0)
    v2 = place(w2, ACCEL, 250.0, av=True)
    place(w2, 0, 270.0)
    assert validate_action(w2, v2.id, HybridAction(LEFT)) == HybridAction(LEFT)


def test_lane_change_from_ramp_invalid(quiet_world):
    w = quiet_world
    v = place(w, RAMP, 150.0, av=True)
    assert validate_action(w, v.id, HybridAction(LEFT)) == FALLBACK
    assert validate_action(w, v.id, HybridAction(RIGHT)) == FALLBACK


def test_right_into_accel_lane_only_along_merging_zone(quiet_world):
    w = quiet_world
    a = place(w, 0, 120.0, av=True)
    b = place(w, 0, 250.0, av=True)
    assert validate_action(w, a.id, HybridAction(RIGHT)) == FALLBACK
    assert validate_action(w, b.id, HybridAction(RIGHT)) == HybridAction(RIGHT)


actions = st.one_of(
    st.sampled_from([HybridAction(LEFT), HybridAction(RIGHT), HybridAction(MAINTAIN)]),
    st.floats(-4.5, 2.6).map(lambda x: HybridAction(ACCELERATE, x)),
    st.floats(5, 20).map(lambda x: HybridAction(GAP, x)),
)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.sampled_from([RAMP, ACCEL, 0, 1]), st.floats(100, 299)), min_size=1, max_size=12),
       actions)
def test_validate_is_idempotent_and_sound(rows, a):
    w = World(quiet_config(), seed=0)
    vs = []
    for lane, pos in rows:
        if lane == RAMP:
            pos = min(pos, 199.0)
        if lane == ACCEL:
            pos = max(pos, 200.0)
        vs.append(place(w, lane, pos, av=True))
    for v in vs:
        once = validate_action(w, v.id, a)
        assert validate_action(w, v.id, once) == once
        assert is_valid_action(w, v, once)


# -- reward formulas --------------------------------------------------------------------


def test_efficiency_examples():
    assert efficiency_reward(32, 32) == 0.0
    assert efficiency_reward(0, 16) == pytest.approx(-1.5)


@given(st.floats(0, 32), st.floats(0, 32))
def test_efficiency_range(v, vm):
    assert -2.0 <= efficiency_reward(v, vm) <= 0.0


def test_safety_examples_and_precedence():
    assert safety_reward(True, 0.5, True, 1.0) == -1.0
    assert safety_reward(False, 1.0, False, math.inf) == pytest.approx(-math.exp(-1.0))
    assert safety_reward(False, 1.0, False, math.inf) == pytest.approx(-0.3679, abs=1e-4)
    assert safety_reward(False, math.inf, True, 6.0) == pytest.approx(-2.0)
    assert safety_reward(False, 1.2, True, 6.0) == pytest.approx(-math.exp(-1.2))  # TTC before lateral
    assert safety_reward(False, 5.0, False, 6.0) == 0.0  # no lane change, no lateral penalty
    assert safety_reward(False, 5.0, True, 12.5) == 0.0


def test_queue_examples():
    assert queue_reward(0, 0) == 0.0
    assert queue_reward(4, 5) == pytest.approx(-1.0)
    assert queue_reward(3, 3) < queue_reward(2, 3)


def test_comfort_examples():
    assert comfort_reward(2.0) == 0.0
    assert comfort_reward(-3.0) == pytest.approx(-0.4 / 3.0)
    assert comfort_reward(1e9) == pytest.approx(-1.0, abs=1e-8)


def test_deadlock_examples():
    assert deadlock_reward(True, 100.0, 100.0) == -1.0
    assert deadlock_reward(True, 0.0, 100.0) == pytest.approx(-math.exp(-10.0))
    assert deadlock_reward(False, 100.0, 100.0) == 0.0


def test_lane_change_reward():
    assert lane_change_reward(True) == -1.0
    assert lane_change_reward(False) == 0.0


def test_combine_examples():
    w = SimConfig().weights
    assert combine_rewards([0.0] * 6, w).total == 0.0
    rb = combine_rewards([0.0, -1.0, 0.0, 0.0, 0.0, 0.0], w)
    assert rb.total == pytest.approx(2 * math.tanh(-1.0))
    assert rb.total == pytest.approx(-1.5232, abs=1e-4)
    with pytest.raises(ValueError):
        combine_rewards([0.0] * 5, w)


@given(st.lists(st.floats(-1e6, 1e6), min_size=6, max_size=6))
def test_combine_bounded(parts):
    w = SimConfig().weights
    rb = combine_rewards(parts, w)
    assert abs(rb.total) <= sum(map(abs, w)) + 1e-12
    assert all(-1.0 <= s <= 1.0 for s in rb.squashed)


# -- environment loop ---------------------------------------------------------------------


def test_rejected_lane_change_is_not_penalised():
    env = MergeEnv(quiet_config(), seed=0)
    v = place(env.world, 1, 100.0, av=True)
    res = env.step({v.id: HybridAction(LEFT)})
    assert res.executed[v.id] == FALLBACK
    assert res.n_invalid == 1
    assert res.rewards[v.id].raw[5] == 0.0


def test_executed_lane_change_is_penalised():
    env = MergeEnv(quiet_config(), seed=0)
    v = place(env.world, 0, 100.0, av=True)
    place(env.world, 1, 108.0, speed=10.0)  # 3 m ahead in the target lane
    res = env.step({v.id: HybridAction(LEFT)})
    rb = res.rewards[v.id]
    assert v.lane == 1
    assert rb.raw[5] == -1.0
    assert rb.raw[1] < 0  # close lateral clearance


def test_collision_status_and_terminal():
    env = MergeEnv(quiet_config(mainline_lanes=1), seed=0)
    a = place(env.world, 0, 90.0, speed=30.0, av=True)
    place(env.world, 0, 96.0, speed=0.0)
    res = env.step({a.id: HybridAction(ACCELERATE, 2.6)})
    assert res.terminal[a.id]
    assert a.id not in res.next_obs
    assert env.agent_status(a.id) is AgentStatus.COLLIDED
    assert res.rewards[a.id].raw[1] == -1.0


def test_merge_status_is_absorbing():
    env = MergeEnv(quiet_config(mainline_lanes=1), seed=0)
    a = place(env.world, 0, 299.5, speed=10.0, av=True, route=Route.RAMP)
    env.step({a.id: HybridAction(MAINTAIN)})
    assert env.agent_status(a.id) is AgentStatus.MERGED_OK
    for _ in range(30):
        if a.id not in env.world.vehicles:
            break
        env.step({a.id: HybridAction(MAINTAIN)})
    assert env.agent_status(a.id) is AgentStatus.MERGED_OK


def test_mainline_agent_exits():
    env = MergeEnv(quiet_config(), seed=0)
    a = place(env.world, 1, 318.0, speed=30.0, av=True)
    res = env.step({a.id: HybridAction(MAINTAIN)})
    assert any(e.kind is EventKind.EXIT for e in res.events)
    assert env.agent_status(a.id) is AgentStatus.EXITED


def test_rewards_invariant_to_agent_order():
    def run(reverse):
        env = MergeEnv(SimConfig(), seed=9)
        rng = np.random.default_rng(1)
        out = []
        for _ in range(200):
            ids = env.agents()
            order = ids[::-1] if reverse else ids
            acts = {i: HybridAction(ACCELERATE, float(rng.uniform(-2, 2))) for i in ids}
            acts = {i: acts[i] for i in order}
            res = env.step(acts)
            out.append(sorted((i, rb.total) for i, rb in res.rewards.items()))
        return out

    assert run(False) == run(True)


def test_random_rollout_observations_in_bounds():
    env = MergeEnv(SimConfig(), seed=3)
    rng = np.random.default_rng(0)
    from zmerge.pdqn import random_action

    for _ in range(300):
        obs = env.observe()
        for o in obs.values():
            assert o.shape == (42,)
            assert np.all(o >= -1.0) and np.all(o <= 1.0)
        env.step({i: random_action(rng) for i in obs})
