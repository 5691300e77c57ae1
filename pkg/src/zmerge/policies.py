"""Decision policies for automated vehicles: the learned agent, the rule-based
comparison policies, a local-information variant and uniform random actions.

Every policy maps the environment's current AV observations to one
:class:`HybridAction` per agent via ``act(env, obs, rng)``.
"""

from __future__ import annotations

import numpy as np

from zmerge.actions import ACCEL_RANGE, ACCELERATE, GAP, LEFT, HybridAction
from zmerge.env import MergeEnv
from zmerge.pdqn import PdqnAgent, random_action
from zmerge.road import ACCEL, RAMP
from zmerge.sim import Route, Vehicle, World

COURTESY_GAP = 12.0  # m, minimum target-lane clearance for rule-based lane changes
RAMP_WATCH = 50.0  # m, how close to the merge point a ramp vehicle must be to trigger yielding
YIELD_GAP = 20.0  # m, desired gap while yielding


def idm_command(world: World, veh: Vehicle) -> HybridAction:
    """``accel`` action carrying the vehicle's IDM acceleration."""
    lo, hi = ACCEL_RANGE
    return HybridAction(ACCELERATE, min(hi, max(lo, world.idm_for(veh))))


def ramp_vehicle_near_merge(world: World, radius: float = RAMP_WATCH) -> bool:
    mp = world.net.merge_point
    return any(v.lane in (RAMP, ACCEL) and v.route is Route.RAMP and mp - v.pos <= radius
               for v in world.vehicles.values())


def baseline1_action(world: World, veh: Vehicle) -> HybridAction:
    """Lane-change rules: ramp AVs merge into a gap over 12 m, lane-0 AVs near the
    merge move left when a ramp vehicle is close; IDM otherwise."""
    net = world.net
    if veh.lane == ACCEL and world.clearance(veh, 0) > COURTESY_GAP:
        return HybridAction(LEFT)
    if (veh.lane == 0 and net.mainline_lanes > 1 and net.premerge_start <= veh.pos < net.merge_point
            and ramp_vehicle_near_merge(world) and world.clearance(veh, 1) > COURTESY_GAP):
        return HybridAction(LEFT)
    return idm_command(world, veh)


def baseline2_action(world: World, veh: Vehicle) -> HybridAction:
    """Gap adjustment only: mainline AVs in the merging zone open a 20 m gap while a
    ramp vehicle is near the merge point; IDM otherwise. Never changes lanes."""
    net = world.net
    if veh.lane >= 0 and net.merge_start <= veh.pos < net.merge_point and ramp_vehicle_near_merge(world):
        return HybridAction(GAP, YIELD_GAP)
    return idm_command(world, veh)


class Policy:
    name = "policy"
    #: ramp AVs hand lateral control to the simulator's merge model
    lateral_autopilot = False

    def act(self, env: MergeEnv, obs: dict[int, np.ndarray], rng: np.random.Generator) -> dict[int, HybridAction]:
        raise NotImplementedError


class RandomPolicy(Policy):
    name = "random"

    def act(self, env, obs, rng):
        return {aid: random_action(rng) for aid in sorted(obs)}


class RulePolicy(Policy):
    def __init__(self, name: str, rule, lateral_autopilot: bool = False):
        self.name = name
        self.rule = rule
        self.lateral_autopilot = lateral_autopilot

    def act(self, env, obs, rng):
        world = env.world
        return {aid: self.rule(world, world.vehicles[aid]) for aid in sorted(obs)}


class AgentPolicy(Policy):
    """Epsilon-greedy (``eps=0``: greedy) actions from a trained agent."""

    def __init__(self, agent: PdqnAgent, eps: float = 0.0, name: str = "zmerge"):
        self.agent = agent
        self.eps = eps
        self.name = name

    def act(self, env, obs, rng):
        ids = sorted(obs)
        if not ids:
            return {}
        acts = self.agent.act(np.stack([obs[i] for i in ids]), rng, self.eps)
        return dict(zip(ids, acts))


def make_policy(name: str, agent: PdqnAgent | None = None) -> Policy:
    if name == "random":
        return RandomPolicy()
    if name == "baseline1":
        return RulePolicy(name, baseline1_action)
    if name == "baseline2":
        return RulePolicy(name, baseline2_action, lateral_autopilot=True)
    if name in ("zmerge", "baseline3"):
        if agent is None:
            raise ValueError(f"policy {name!r} needs a trained agent checkpoint")
        if agent.mask_global != (name == "baseline3"):
            raise ValueError(f"checkpoint global-block masking does not match policy {name!r}")
        return AgentPolicy(agent, 0.0, name)
    raise ValueError(f"unknown policy {name!r}")
