"""Training and evaluation orchestration.

Random streams are derived from the run seed with ``numpy.random.SeedSequence``
so a (config, seed) pair fixes every output byte: network initialisation,
exploration, replay sampling and each episode's traffic are separate streams.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from zmerge.actions import HybridAction
from zmerge.config import RunConfig
from zmerge.env import REWARD_NAMES, MergeEnv
from zmerge.metrics import EpisodeMetrics, MetricsRecorder, aggregate, latency_summary, mean_grid, mean_series
from zmerge.pdqn import PdqnAgent, PdqnConfig, ReplayBuffer
from zmerge.policies import AgentPolicy, Policy, make_policy
from zmerge.reports import emit_reports

TRAIN_LOG_HEADER = ["episode", "env_steps", "grad_steps", "epsilon", "critic_loss", "actor_loss",
                    "mean_episode_reward", "transitions", "invalid_actions", "collisions", "merges"]
REWARD_LOG_HEADER = (["episode", "tick", "agent"] + [f"raw_{n}" for n in REWARD_NAMES]
                     + [f"tanh_{n}" for n in REWARD_NAMES] + ["total"])

# stream tags for SeedSequence
_INIT, _ACT, _REPLAY, _TRAIN_EP, _EVAL_EP, _LATENCY = range(6)


class TrainingDiverged(RuntimeError):
    pass


def _rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *tags]))


def episode_seed(seed: int, tag: int, episode: int) -> int:
    return int(np.random.SeedSequence([seed, tag, episode]).generate_state(1)[0])


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(x) if isinstance(x, float) else str(x)


class CsvLog:
    def __init__(self, path: Path, header: list[str]):
        self.fh = open(path, "w", newline="", encoding="utf-8")
        self.w = csv.writer(self.fh, lineterminator="\r\n")
        self.w.writerow(header)

    def row(self, values) -> None:
        self.w.writerow([_fmt(v) for v in values])

    def close(self) -> None:
        self.fh.close()


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(type(o).__name__)


def write_json(path: Path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n",
                          encoding="utf-8")


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    out: Path
    agent: PdqnAgent
    episodes: int
    final_checkpoint: Path | None


def _dump_divergence(out: Path, episode: int, tick: int, agent: PdqnAgent, err: Exception) -> None:
    def stats(p):
        return [{"max_abs": float(np.max(np.abs(a))), "finite": bool(np.all(np.isfinite(a)))}
                for a in p.arrays()]

    write_json(out / "diagnostic.json", {
        "error": str(err), "episode": episode, "tick": tick,
        "grad_steps": agent.grad_steps, "env_steps": agent.env_steps,
        "critic": stats(agent.critic), "actor": stats(agent.actor),
    })


def run_training(cfg: RunConfig, mask_global: bool | None = None) -> TrainResult:
    """Train one shared agent for ``cfg.episodes`` episodes and write logs/checkpoints to ``cfg.out``.

    ``mask_global`` defaults to True for ``policy == "baseline3"`` (agents see
    only local information).
    """
    if cfg.mode != "train":
        raise ValueError("run_training needs mode 'train'")
    if mask_global is None:
        mask_global = cfg.policy == "baseline3"
    out = Path(cfg.out)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json() + "\n", encoding="utf-8")
    seed = cfg.sim.seed
    agent = PdqnAgent(PdqnConfig.from_run(cfg), _rng(seed, _INIT), mask_global=mask_global)
    replay = ReplayBuffer(cfg.buffer_size)
    act_rng, replay_rng = _rng(seed, _ACT), _rng(seed, _REPLAY)

    train_log = CsvLog(out / "train_log.csv", TRAIN_LOG_HEADER)
    reward_log = CsvLog(out / "rewards.csv", REWARD_LOG_HEADER) if cfg.log_rewards else None
    trace = open(out / "trace.jsonl", "w", encoding="utf-8") if cfg.trace else None
    final = None
    try:
        for ep in range(cfg.episodes):
            env = MergeEnv(cfg.sim, seed=episode_seed(seed, _TRAIN_EP, ep))
            c_losses, a_losses = [], []
            reward_sum, agents_seen, n_trans, n_invalid, n_coll, n_merge = 0.0, set(), 0, 0, 0, 0
            obs = env.observe()
            for _ in range(cfg.sim.ticks_per_episode):
                ids = sorted(obs)
                eps = agent.epsilon_now()
                acts: list[HybridAction] = agent.act(np.stack([obs[i] for i in ids]), act_rng, eps) if ids else []
                chosen = dict(zip(ids, acts))
                res = env.step(chosen)
                agent.env_steps += 1
                n_invalid += res.n_invalid
                n_coll += sum(e.kind.value == "collision" for e in res.events)
                n_merge += sum(e.kind.value == "merge" for e in res.events)
                for aid in ids:
                    a = chosen[aid]
                    rb = res.rewards[aid]
                    replay.push(obs[aid], a.k, a.x, rb.total, res.next_obs.get(aid), res.terminal[aid])
                    reward_sum += rb.total
                    agents_seen.add(aid)
                    n_trans += 1
                    if reward_log is not None:
                        reward_log.row([ep, env.world.tick, aid, *rb.row()])
                if trace is not None:
                    trace.write(json.dumps(env.world.trace_record(res.events, res.summary), sort_keys=True) + "\n")
                if len(replay) >= max(cfg.warmup, cfg.batch_size):
                    try:
                        cl, al = agent.update(replay, replay_rng)
                        if not (math.isfinite(cl) and math.isfinite(al)):
                            raise FloatingPointError(f"non-finite loss: critic={cl} actor={al}")
                    except FloatingPointError as exc:
                        _dump_divergence(out, ep, env.world.tick, agent, exc)
                        raise TrainingDiverged(f"training diverged at episode {ep}: {exc}") from exc
                    c_losses.append(cl)
                    a_losses.append(al)
                obs = env.observe()
            train_log.row([
                ep, agent.env_steps, agent.grad_steps, agent.epsilon_now(),
                math.fsum(c_losses) / len(c_losses) if c_losses else None,
                math.fsum(a_losses) / len(a_losses) if a_losses else None,
                reward_sum / len(agents_seen) if agents_seen else None,
                n_trans, n_invalid, n_coll, n_merge,
            ])
            if cfg.checkpoint_every > 0 and (ep + 1) % cfg.checkpoint_every == 0:
                agent.save(out / "checkpoints" / f"ep{ep + 1:05d}.zmck", {"episode": ep + 1})
        final = out / "final.zmck"
        agent.save(final, {"episode": cfg.episodes})
    finally:
        train_log.close()
        if reward_log is not None:
            reward_log.close()
        if trace is not None:
            trace.close()
    return TrainResult(out, agent, cfg.episodes, final)


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class EvalResult:
    policy: str
    penetration_rate: float
    episodes: list[EpisodeMetrics]
    latency_ms: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        eps = self.episodes
        agg = aggregate(eps)
        grid = mean_grid([e.space_time_grid for e in eps])
        return {
            "policy": self.policy,
            "penetration_rate": self.penetration_rate,
            "episodes": len(eps),
            "aggregate": {k: {"mean": s.mean, "std": s.std, "n": s.n} for k, s in agg.items()},
            "per_episode": [e.scalars() for e in eps],
            "speed_series": mean_series([e.avg_speed_series for e in eps]),
            "queue_series": mean_series([e.queue_series for e in eps]),
            "space_time_grid": [[None if math.isnan(v) else float(v) for v in row] for row in grid],
            "grid_x0": eps[0].grid_x0 if eps else 0.0,
            # traces of the first episode only, to keep files small
            "comfort_traces": {str(k): v for k, v in (eps[0].comfort_series.items() if eps else [])},
            "latency_ms": list(self.latency_ms),
            "latency": latency_summary(self.latency_ms),
        }

    def stat(self, name: str):
        return aggregate(self.episodes)[name]


def load_agent(path) -> PdqnAgent:
    if path is None or not Path(path).is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return PdqnAgent.load(path)


def policy_for(cfg: RunConfig, name: str | None = None, agent: PdqnAgent | None = None) -> Policy:
    name = name or cfg.policy
    if name in ("zmerge", "baseline3") and agent is None:
        ckpt = cfg.checkpoint if name == "zmerge" else cfg.baseline3_checkpoint
        agent = load_agent(ckpt)
    return make_policy(name, agent)


def run_episode(env: MergeEnv, policy: Policy, rng: np.random.Generator, trace=None) -> EpisodeMetrics:
    rec = MetricsRecorder(env)
    for _ in range(env.cfg.ticks_per_episode):
        obs = env.observe()
        res = env.step(policy.act(env, obs, rng))
        rec.record(res)
        if trace is not None:
            trace.write(json.dumps(env.world.trace_record(res.events, res.summary), sort_keys=True) + "\n")
    return rec.finish()


def run_evaluation(cfg: RunConfig, policy: Policy | None = None, episodes: int | None = None,
                   trace_path=None) -> EvalResult:
    """Evaluate ``policy`` (default: ``cfg.policy``) greedily on fresh traffic."""
    policy = policy or policy_for(cfg)
    if isinstance(policy, AgentPolicy):
        policy.eps = 0.0
    n = cfg.eval_episodes if episodes is None else episodes
    seed = cfg.sim.seed
    rng = _rng(seed, _EVAL_EP, 1 << 20)
    trace = None
    if trace_path:
        Path(trace_path).parent.mkdir(parents=True, exist_ok=True)
        trace = open(trace_path, "w", encoding="utf-8")
    try:
        eps = []
        for ep in range(n):
            env = MergeEnv(cfg.sim, seed=episode_seed(seed, _EVAL_EP, ep),
                           av_lateral_autopilot=policy.lateral_autopilot)
            eps.append(run_episode(env, policy, rng, trace))
    finally:
        if trace is not None:
            trace.close()
    return EvalResult(policy.name, cfg.sim.penetration_rate, eps)


def measure_inference_latency(agent: PdqnAgent, cfg: RunConfig, n: int | None = None) -> list[float]:
    """Wall-clock milliseconds per decision cycle: stack observations, compute actions,
    dispatch them to the simulator and receive the next observations."""
    n = cfg.latency_iterations if n is None else n
    if n <= 0:
        return []
    seed = cfg.sim.seed
    rng = _rng(seed, _LATENCY)
    env = MergeEnv(cfg.sim, seed=episode_seed(seed, _LATENCY, 0))
    obs = env.observe()
    samples = []
    for i in range(n):
        t0 = time.perf_counter()
        ids = sorted(obs)
        acts = agent.act(np.stack([obs[j] for j in ids]), rng, 0.0) if ids else []
        env.step(dict(zip(ids, acts)))
        obs = env.observe()
        samples.append((time.perf_counter() - t0) * 1e3)
        if env.world.tick >= cfg.sim.ticks_per_episode:
            env.reset(episode_seed(seed, _LATENCY, i + 1))
            obs = env.observe()
    return samples


def write_eval_outputs(results: list[EvalResult], outdir) -> list[Path]:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    records = [r.to_dict() for r in results]
    write_json(out / "metrics.json", {"results": records})
    return emit_reports(records, out)


def run_sweep(cfg: RunConfig, policies: list[str]) -> list[EvalResult]:
    """Evaluate each policy at each penetration rate of ``cfg.pr_sweep``."""
    agents: dict[str, PdqnAgent] = {}
    results = []
    for pr in cfg.pr_sweep:
        sub = cfg.replace(penetration_rate=pr)
        for name in policies:
            if name in ("zmerge", "baseline3") and name not in agents:
                agents[name] = load_agent(cfg.checkpoint if name == "zmerge" else cfg.baseline3_checkpoint)
            results.append(run_evaluation(sub, make_policy(name, agents.get(name))))
    return results
