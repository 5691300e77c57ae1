import numpy as np
import pytest

from zmerge.config import SimConfig
from zmerge.sim import Role, Route, Vehicle, World


def quiet_config(**kw) -> SimConfig:
    """Defaults with no arrivals, so tests control every vehicle."""
    base = dict(mainline_flow=0.0, ramp_flow=0.0)
    base.update(kw)
    return SimConfig(**base)


def place(world: World, lane: int, pos: float, speed: float = 10.0, av: bool = False,
          route: Route | None = None, **kw) -> Vehicle:
    if route is None:
        route = Route.RAMP if lane < 0 else Route.MAINLINE
    veh = Vehicle(id=world.next_id, role=Role.AV if av else Role.HV, lane=lane, pos=pos,
                  speed=speed, route=route, **kw)
    return world.add_vehicle(veh)


@pytest.fixture
def quiet_world() -> World:
    return World(quiet_config(), seed=0)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one pass/fail line for an acceptance criterion, then assert it."""

    def record(number: int, name: str, passed: bool, detail: str) -> None:
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
