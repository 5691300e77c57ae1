import numpy as np
import pytest

from conftest import place, quiet_config
from zmerge.actions import ACCELERATE, GAP, LEFT, RIGHT
from zmerge.config import SimConfig
from zmerge.env import MergeEnv
from zmerge.pdqn import PdqnAgent, PdqnConfig
from zmerge.policies import baseline1_action, baseline2_action, make_policy
from zmerge.road import ACCEL, RAMP


def rollout_actions(policy_name, ticks=400, seed=0, **kw):
    policy = make_policy(policy_name)
    env = MergeEnv(SimConfig(**kw), seed=seed, av_lateral_autopilot=policy.lateral_autopilot)
    rng = np.random.default_rng(0)
    seen = []
    for _ in range(ticks):
        acts = policy.act(env, env.observe(), rng)
        seen += list(acts.values())
        env.step(acts)
    return seen


def test_baseline2_never_changes_lanes():
    ks = {a.k for a in rollout_actions("baseline2")}
    assert not ks & {LEFT, RIGHT}
    assert GAP in ks


def test_baseline1_never_sets_gap():
    ks = {a.k for a in rollout_actions("baseline1")}
    assert GAP not in ks
    assert LEFT in ks


def test_baseline1_merges_into_clear_gap(quiet_world):
    w = quiet_world
    v = place(w, ACCEL, 250.0, av=True)
    assert baseline1_action(w, v).k == LEFT
    place(w, 0, 262.0)  # 7 m clearance, below the 12 m rule
    assert baseline1_action(w, v).k == ACCELERATE


def test_baseline1_courtesy_change(quiet_world):
    w = quiet_world
    v = place(w, 0, 240.0, av=True)
    assert baseline1_action(w, v).k == ACCELERATE
    place(w, ACCEL, 270.0, speed=5.0)
    assert baseline1_action(w, v).k == LEFT


def test_baseline2_opens_gap_only_in_merging_zone(quiet_world):
    w = quiet_world
    a = place(w, 0, 230.0, av=True)
    b = place(w, 0, 150.0, av=True)
    place(w, ACCEL, 280.0, speed=3.0)
    assert baseline2_action(w, a).k == GAP and baseline2_action(w, a).x == 20.0
    assert baseline2_action(w, b).k == ACCELERATE


def test_idm_command_clipped_to_action_range(quiet_world):
    w = quiet_world
    v = place(w, 0, 100.0, speed=0.0, av=True)
    a = baseline2_action(w, v)
    assert a.k == ACCELERATE and a.x == pytest.approx(2.6)


def test_ramp_vehicles_cannot_change_before_accel_lane(quiet_world):
    w = quiet_world
    v = place(w, RAMP, 150.0, av=True)
    assert baseline1_action(w, v).k == ACCELERATE


def test_agent_policies_need_agent_and_matching_mask():
    with pytest.raises(ValueError):
        make_policy("zmerge")
    agent = PdqnAgent(PdqnConfig(hidden=[8]), np.random.default_rng(0), mask_global=False)
    assert make_policy("zmerge", agent).eps == 0.0
    with pytest.raises(ValueError):
        make_policy("baseline3", agent)
    masked = PdqnAgent(PdqnConfig(hidden=[8]), np.random.default_rng(0), mask_global=True)
    assert make_policy("baseline3", masked).agent is masked
    with pytest.raises(ValueError):
        make_policy("ppo")


def test_random_policy_covers_all_actions():
    ks = {a.k for a in rollout_actions("random", ticks=100)}
    assert ks == {0, 1, 2, 3, 4}
