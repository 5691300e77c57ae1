"""Hybrid (discrete + continuous) agent actions and their effect on a vehicle."""

from __future__ import annotations

import math
from dataclasses import dataclass

LEFT, RIGHT, ACCELERATE, GAP, MAINTAIN = range(5)
N_ACTIONS = 5
ACTION_NAMES = ("lane_left", "lane_right", "accel", "gap", "maintain")

ACCEL_RANGE = (-4.5, 2.6)
GAP_RANGE = (5.0, 20.0)
PARAM_RANGES = {ACCELERATE: ACCEL_RANGE, GAP: GAP_RANGE}
# slot of each discrete action in the joint continuous vector, -1 if none
PARAM_SLOT = (-1, -1, 0, 1, -1)


@dataclass(frozen=True)
class HybridAction:
    k: int
    x: float | None = None

    def __post_init__(self):
        if self.k not in range(N_ACTIONS):
            raise ValueError(f"discrete action must be in 0..4, got {self.k}")
        if self.k in PARAM_RANGES:
            if self.x is None or not math.isfinite(self.x):
                raise ValueError(f"action {self.k} needs a finite continuous argument")
            lo, hi = PARAM_RANGES[self.k]
            if not lo <= self.x <= hi:
                raise ValueError(f"argument {self.x} outside [{lo}, {hi}] for action {self.k}")
        elif self.x is not None:
            raise ValueError(f"action {self.k} takes no continuous argument")

    @property
    def is_lane_change(self) -> bool:
        return self.k in (LEFT, RIGHT)

    @property
    def lane_delta(self) -> int:
        return {LEFT: 1, RIGHT: -1}.get(self.k, 0)


FALLBACK = HybridAction(MAINTAIN)


def apply_action(world, agent_id: int, a: HybridAction) -> None:
    """Load a (validated) action into the vehicle's controller for the next tick.

    Lane changes are queued as an intent, ``accel`` commands last one tick and
    ``gap`` switches the persistent controller to gap keeping.
    """
    veh = world.vehicles[agent_id]
    if a.is_lane_change:
        veh.lc_intent = a.lane_delta
    elif a.k == ACCELERATE:
        veh.cmd_accel = float(a.x)
    elif a.k == GAP:
        veh.desired_gap = float(a.x)
        veh.control = "gap"
