"""Simulation and run configuration.

Both configs serialize to a single flat JSON object: every :class:`SimConfig`
and :class:`RunConfig` field is a top-level key. Any field can also be set from
the environment as ``ZMERGE_<FIELD_NAME_UPPER>`` (JSON-decoded when possible,
otherwise taken as a string).
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

ENV_PREFIX = "ZMERGE_"

POLICIES = ("zmerge", "baseline1", "baseline2", "baseline3", "random")


@dataclass
class SimConfig:
    # geometry
    warmup_len: float = 50.0
    premerge_len: float = 150.0
    merge_len: float = 100.0
    ramp_len: float = 100.0
    segment_len: float = 320.0
    mainline_lanes: int = 2
    lane_width: float = 3.5
    geo_origin_deg: list[float] | None = None
    # demand
    mainline_flow: float = 3600.0  # veh/h/lane
    ramp_flow: float = 900.0  # veh/h
    penetration_rate: float = 0.60
    spawn_headway: float = 10.0
    mainline_entry_speed: float = 20.0
    ramp_entry_speed: float = 15.0
    vehicle_length: float = 5.0
    # dynamics
    dt: float = 0.1
    v_max: float = 32.0
    a_min: float = -4.5
    a_max: float = 2.8
    action_accel_max: float = 2.6
    tau: float = 1.0
    idm_a: float = 2.6
    idm_b: float = 4.5
    idm_s0: float = 2.0
    idm_delta: float = 4.0
    mobil_politeness: float = 0.3
    mobil_b_safe: float = 4.0
    mobil_threshold: float = 0.2
    lane_change_cooldown: float = 1.0
    default_desired_gap: float = 10.0
    gap_kp: float = 0.5
    gap_kv: float = 1.0
    min_lane_change_gap: float = 2.0
    deadlock_speed: float = 0.5
    deadlock_time: float = 3.0
    deadlock_zone: float = 25.0
    # measurement / communication
    queue_speed: float = 2.0
    queue_headway: float = 20.0
    empty_zone_speed: str = "zero"  # "zero" or "vmax"
    v2v_range: float = 100.0
    v2x_range: float = 500.0
    max_neighbors: int = 6
    # reward
    ttc_threshold: float = 1.2
    lateral_safety: float = 12.0
    comfort_accel: float = 2.6
    w_e: float = 1.0
    w_s: float = 2.0
    w_c: float = 0.5
    w_q: float = 0.5
    w_d: float = 1.0
    w_l: float = 0.2
    # episode
    seed: int = 0
    episode_len: float = 400.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        positive = (
            "warmup_len", "premerge_len", "merge_len", "ramp_len", "segment_len",
            "lane_width", "spawn_headway", "vehicle_length", "dt", "v_max",
            "action_accel_max", "a_max", "tau", "idm_a", "idm_b", "idm_s0",
            "episode_len", "ttc_threshold", "lateral_safety", "comfort_accel",
            "queue_headway", "v2v_range", "v2x_range",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.mainline_lanes < 1:
            raise ValueError("mainline_lanes must be >= 1")
        if self.mainline_flow < 0 or self.ramp_flow < 0:
            raise ValueError("flows must be non-negative")
        if not 0.0 <= self.penetration_rate <= 1.0:
            raise ValueError("penetration_rate must lie in [0, 1]")
        if self.a_min >= 0:
            raise ValueError("a_min must be negative")
        if self.segment_len < self.warmup_len + self.premerge_len + self.merge_len:
            raise ValueError("segment_len shorter than the modeled zones")
        if self.empty_zone_speed not in ("zero", "vmax"):
            raise ValueError("empty_zone_speed must be 'zero' or 'vmax'")

    @property
    def weights(self) -> tuple[float, ...]:
        return (self.w_e, self.w_s, self.w_c, self.w_q, self.w_d, self.w_l)

    @property
    def ticks_per_episode(self) -> int:
        return int(round(self.episode_len / self.dt))


@dataclass
class RunConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    # learner
    hidden: list[int] = field(default_factory=lambda: [256, 512, 512, 128])
    lr_actor: float = 1e-4
    lr_critic: float = 1e-4
    gamma: float = 0.995
    batch_size: int = 64
    buffer_size: int = 100_000
    warmup: int = 1_000
    eps_init: float = 1.0
    eps_final: float = 0.01
    eps_decay: float = 0.999985
    sync_period: int = 35_000
    huber_delta: float = 1.0
    grad_clip: float = 10.0
    # orchestration
    mode: str = "train"
    policy: str = "zmerge"
    episodes: int = 100
    eval_episodes: int = 20
    out: str = "runs/default"
    checkpoint: str | None = None
    baseline3_checkpoint: str | None = None
    checkpoint_every: int = 10
    trace: bool = False
    log_rewards: bool = False
    pr_sweep: list[float] = field(default_factory=lambda: [0.05, 0.10, 0.20, 0.40, 0.60])
    latency_iterations: int = 6000

    def __post_init__(self):
        if self.mode not in ("train", "eval"):
            raise ValueError(f"mode must be train or eval, got {self.mode!r}")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}; expected one of {POLICIES}")
        if self.episodes < 0:
            raise ValueError("episodes must be >= 0")
        if self.batch_size < 1 or self.buffer_size < self.batch_size:
            raise ValueError("buffer_size must be >= batch_size >= 1")
        if self.sync_period < 1:
            raise ValueError("sync_period must be >= 1")

    # -- flat (de)serialization ------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self.sim)
        for f in fields(self):
            if f.name != "sim":
                out[f.name] = getattr(self, f.name)
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        sim_names = {f.name for f in fields(SimConfig)}
        run_names = {f.name for f in fields(cls)} - {"sim"}
        unknown = set(data) - sim_names - run_names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        sim = SimConfig(**{k: v for k, v in data.items() if k in sim_names})
        return cls(sim=sim, **{k: v for k, v in data.items() if k in run_names})

    def replace(self, **changes: Any) -> "RunConfig":
        data = self.to_dict()
        data.update(changes)
        return RunConfig.from_dict(data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _coerce(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def env_overrides(environ: dict[str, str] | None = None) -> dict[str, Any]:
    environ = os.environ if environ is None else environ
    names = {f.name for f in fields(SimConfig)} | {f.name for f in fields(RunConfig)} - {"sim"}
    out = {}
    for name in sorted(names):
        key = ENV_PREFIX + name.upper()
        if key in environ:
            out[name] = _coerce(environ[key])
    return out


def load_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None,
                environ: dict[str, str] | None = None) -> RunConfig:
    """Defaults <- JSON file <- environment <- explicit overrides."""
    data: dict[str, Any] = RunConfig().to_dict()
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise ValueError("config file must hold a JSON object")
        data.update(loaded)
    data.update(env_overrides(environ))
    if overrides:
        data.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.from_dict(data)
