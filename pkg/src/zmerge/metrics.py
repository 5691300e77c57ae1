"""Per-episode evaluation metrics and their aggregation across episodes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from zmerge.env import AgentStatus, MergeEnv, StepResult
from zmerge.road import ACCEL
from zmerge.sim import EventKind, Route, mean_speed

CELL_M = 10.0
BIN_S = 1.0

SCALARS = ("mean_speed", "collision_rate", "success_rate", "mean_queue", "harsh_accel_share")


@dataclass
class EpisodeMetrics:
    avg_speed_series: list[float] = field(default_factory=list)
    queue_series: list[int] = field(default_factory=list)
    collision_rate: float | None = None
    success_rate: float | None = None
    # vehicle id -> [(tick, accel)] for automated vehicles
    comfort_series: dict[int, list[tuple[int, float]]] = field(default_factory=dict)
    # mean speed per (space cell, time bin); NaN where no vehicle was seen
    space_time_grid: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    grid_x0: float = 0.0  # position of the first cell's rear edge
    inference_latency_samples: list[float] = field(default_factory=list)
    av_spawned: int = 0
    av_collided: int = 0
    ramp_av_merged: int = 0
    ramp_av_resolved: int = 0

    @property
    def mean_speed(self) -> float | None:
        s = self.avg_speed_series
        return math.fsum(s) / len(s) if s else None

    @property
    def mean_queue(self) -> float | None:
        q = self.queue_series
        return sum(q) / len(q) if q else None

    @property
    def harsh_accel_share(self) -> float | None:
        """Fraction of AV ticks whose acceleration magnitude exceeds 2.6 m/s^2."""
        n = harsh = 0
        for trace in self.comfort_series.values():
            n += len(trace)
            harsh += sum(abs(a) > 2.6 for _, a in trace)
        return harsh / n if n else None

    def scalars(self) -> dict[str, float | None]:
        return {name: getattr(self, name) for name in SCALARS}


class MetricsRecorder:
    """Accumulates one episode's metrics while the environment is stepped."""

    def __init__(self, env: MergeEnv):
        self.env = env
        cfg, net = env.cfg, env.world.net
        self.x0 = net.premerge_start
        self.n_cells = int(round((net.merge_point - net.premerge_start) / CELL_M))
        self.ticks_per_bin = int(round(BIN_S / cfg.dt))
        n_bins = -(-cfg.ticks_per_episode // self.ticks_per_bin)
        self.grid_sum = np.zeros((self.n_cells, n_bins))
        self.grid_n = np.zeros((self.n_cells, n_bins), dtype=np.int64)
        self.m = EpisodeMetrics(grid_x0=self.x0)
        self.av_ids: set[int] = set()
        self.ramp_av_ids: set[int] = set()
        self.collided_avs: set[int] = set()
        self._note_spawns(env.world.vehicles.values())

    def _note_spawns(self, vehicles) -> None:
        for v in vehicles:
            if v.is_av:
                self.av_ids.add(v.id)
                if v.route is Route.RAMP:
                    self.ramp_av_ids.add(v.id)

    def record(self, result: StepResult) -> None:
        world = self.env.world
        m = self.m
        spawned = {vid for ev in result.events if ev.kind is EventKind.SPAWN for vid in ev.ids}
        self._note_spawns(world.vehicles[i] for i in sorted(spawned))
        for ev in result.events:
            if ev.kind is EventKind.COLLISION:
                self.collided_avs.update(i for i in ev.ids if i in self.av_ids)
        m.avg_speed_series.append(mean_speed(world))
        m.queue_series.append(result.summary.queue_premerge + result.summary.queue_accel)
        b = (world.tick - 1) // self.ticks_per_bin
        for v in world.sorted_vehicles():
            if v.is_av:
                m.comfort_series.setdefault(v.id, []).append((world.tick, v.accel))
            if (v.lane >= 0 or v.lane == ACCEL) and b < self.grid_sum.shape[1]:
                c = math.floor((v.pos - self.x0) / CELL_M)
                if 0 <= c < self.n_cells:
                    self.grid_sum[c, b] += v.speed
                    self.grid_n[c, b] += 1

    def finish(self) -> EpisodeMetrics:
        m = self.m
        env = self.env
        m.av_spawned = len(self.av_ids)
        m.av_collided = len(self.collided_avs)
        m.collision_rate = m.av_collided / m.av_spawned if m.av_spawned else None
        resolved = merged = 0
        for vid in self.ramp_av_ids:
            st = env.agent_status(vid)
            if st is AgentStatus.MERGED_OK:
                merged += 1
                resolved += 1
            elif st in (AgentStatus.COLLIDED, AgentStatus.DEADLOCKED):
                resolved += 1
        m.ramp_av_merged, m.ramp_av_resolved = merged, resolved
        m.success_rate = merged / resolved if resolved else None
        with np.errstate(invalid="ignore", divide="ignore"):
            m.space_time_grid = np.where(self.grid_n > 0, self.grid_sum / np.maximum(self.grid_n, 1), np.nan)
        return m


# ---------------------------------------------------------------------------
# aggregation


@dataclass(frozen=True)
class Stat:
    mean: float | None
    std: float | None
    n: int


def mean_std(values) -> Stat:
    """Mean and population std over the defined (non-None) values."""
    xs = [float(v) for v in values if v is not None]
    if not xs:
        return Stat(None, None, 0)
    mu = math.fsum(xs) / len(xs)
    var = math.fsum((x - mu) ** 2 for x in xs) / len(xs)
    return Stat(mu, math.sqrt(var), len(xs))


def aggregate(episodes: list[EpisodeMetrics]) -> dict[str, Stat]:
    return {name: mean_std(getattr(e, name) for e in episodes) for name in SCALARS}


def mean_series(series: list[list[float]]) -> list[float]:
    """Tick-wise mean of series that may differ in length."""
    n = max((len(s) for s in series), default=0)
    out = []
    for t in range(n):
        vals = [s[t] for s in series if t < len(s)]
        out.append(math.fsum(vals) / len(vals))
    return out


def mean_grid(grids: list[np.ndarray]) -> np.ndarray:
    """Cell-wise mean over episodes, ignoring empty (NaN) cells."""
    if not grids:
        return np.zeros((0, 0))
    stack = np.stack(grids)
    n = np.sum(~np.isnan(stack), axis=0)
    total = np.nansum(stack, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(n > 0, total / np.maximum(n, 1), np.nan)


def latency_summary(samples: list[float]) -> dict[str, float | None]:
    if not samples:
        return {"n": 0, "mean_ms": None, "p90_ms": None}
    a = np.asarray(samples)
    return {"n": len(samples), "mean_ms": float(a.mean()), "p90_ms": float(np.percentile(a, 90))}
