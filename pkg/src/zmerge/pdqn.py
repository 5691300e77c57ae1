"""Multi-agent parameterized Double DQN with parameter sharing.

One critic and one actor serve every automated vehicle. The actor maps an
observation to the joint continuous vector (acceleration, desired gap); the
critic scores all five discrete actions given the observation and that vector.
Internally the critic sees the continuous vector in tanh units (each entry in
[-1, 1]); physical values only appear at the action interface.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from zmerge.actions import ACCEL_RANGE, GAP_RANGE, N_ACTIONS, PARAM_RANGES, PARAM_SLOT, HybridAction
from zmerge.neural import (
    AdamState,
    Gradients,
    MlpParams,
    adam_from_arrays,
    adam_step,
    adam_to_arrays,
    clip_global_norm,
    init_mlp,
    load_checkpoint,
    mlp_backward,
    mlp_forward,
    params_from_arrays,
    params_to_arrays,
    save_checkpoint,
)

OBS_DIM = 42
N_PARAMS = 2
_RANGES = np.array([ACCEL_RANGE, GAP_RANGE])
PARAM_MID = _RANGES.mean(axis=1)  # (-0.95, 12.5)
PARAM_HALF = (_RANGES[:, 1] - _RANGES[:, 0]) / 2.0  # (3.55, 7.5)


class InsufficientReplay(RuntimeError):
    pass


def scale_params(t: np.ndarray) -> np.ndarray:
    """tanh units -> physical (acceleration m/s^2, gap m), clipped to the action ranges."""
    x = PARAM_MID + PARAM_HALF * np.asarray(t, dtype=np.float64)
    return np.clip(x, _RANGES[:, 0], _RANGES[:, 1])


def unscale_param(k: int, x: float) -> float:
    slot = PARAM_SLOT[k]
    return (x - PARAM_MID[slot]) / PARAM_HALF[slot]


@dataclass
class PdqnConfig:
    obs_dim: int = OBS_DIM
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

    @classmethod
    def from_run(cls, run) -> "PdqnConfig":
        return cls(hidden=list(run.hidden), lr_actor=run.lr_actor, lr_critic=run.lr_critic,
                   gamma=run.gamma, batch_size=run.batch_size, buffer_size=run.buffer_size,
                   warmup=run.warmup, eps_init=run.eps_init, eps_final=run.eps_final,
                   eps_decay=run.eps_decay, sync_period=run.sync_period,
                   huber_delta=run.huber_delta, grad_clip=run.grad_clip)


# ---------------------------------------------------------------------------
# replay


@dataclass
class Batch:
    s: np.ndarray
    k: np.ndarray
    x: np.ndarray  # physical argument, NaN when the action takes none
    r: np.ndarray
    s2: np.ndarray
    terminal: np.ndarray

    def __len__(self) -> int:
        return len(self.k)


class ReplayBuffer:
    """Fixed-capacity FIFO ring shared by all agents."""

    def __init__(self, capacity: int, obs_dim: int = OBS_DIM):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.s = np.zeros((capacity, obs_dim))
        self.s2 = np.zeros((capacity, obs_dim))
        self.k = np.zeros(capacity, dtype=np.int64)
        self.x = np.full(capacity, np.nan)
        self.r = np.zeros(capacity)
        self.terminal = np.zeros(capacity, dtype=bool)
        self.size = 0
        self.head = 0

    def __len__(self) -> int:
        return self.size

    def push(self, s, k: int, x: float | None, r: float, s2, terminal: bool) -> None:
        i = self.head
        self.s[i] = s
        self.k[i] = k
        self.x[i] = np.nan if x is None else x
        self.r[i] = r
        if terminal or s2 is None:
            self.s2[i] = 0.0
        else:
            self.s2[i] = s2
        self.terminal[i] = terminal
        self.head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def get(self, idx) -> Batch:
        idx = np.asarray(idx)
        return Batch(self.s[idx], self.k[idx], self.x[idx], self.r[idx], self.s2[idx], self.terminal[idx])

    def sample(self, rng: np.random.Generator, batch_size: int) -> Batch:
        if batch_size > self.size:
            raise InsufficientReplay(f"{self.size} transitions < batch {batch_size}")
        return self.get(rng.choice(self.size, size=batch_size, replace=False))


# ---------------------------------------------------------------------------
# agent


def huber(e: np.ndarray, delta: float) -> np.ndarray:
    a = np.abs(e)
    return np.where(a <= delta, 0.5 * e * e, delta * (a - 0.5 * delta))


def huber_grad(e: np.ndarray, delta: float) -> np.ndarray:
    return np.clip(e, -delta, delta)


class PdqnAgent:
    """Shared critic/actor pair with target copies and two Adam optimizers."""

    def __init__(self, cfg: PdqnConfig | None = None, rng: np.random.Generator | None = None,
                 mask_global: bool = False):
        self.cfg = cfg or PdqnConfig()
        rng = rng if rng is not None else np.random.default_rng(0)
        c = self.cfg
        self.critic = init_mlp([c.obs_dim + N_PARAMS, *c.hidden, N_ACTIONS], rng)
        self.actor = init_mlp([c.obs_dim, *c.hidden, N_PARAMS], rng)
        self.critic_target = self.critic.copy()
        self.actor_target = self.actor.copy()
        self.opt_critic = AdamState.for_params(self.critic, c.lr_critic)
        self.opt_actor = AdamState.for_params(self.actor, c.lr_actor)
        self.grad_steps = 0
        self.env_steps = 0
        self.mask_global = mask_global
        self.sync_history: list[int] = []

    # -- networks ------------------------------------------------------------------

    def prepare(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        if self.mask_global:
            s = s.copy()
            s[..., :8] = 0.0
        return s

    def actor_tanh(self, s: np.ndarray, target: bool = False) -> np.ndarray:
        return np.tanh(mlp_forward(self.actor_target if target else self.actor, s))

    def q_values(self, s: np.ndarray, t: np.ndarray, target: bool = False) -> np.ndarray:
        net = self.critic_target if target else self.critic
        return mlp_forward(net, np.concatenate([s, t], axis=-1))

    def continuous_params(self, s: np.ndarray) -> np.ndarray:
        """Joint physical continuous vector (accel, gap) for one or many observations."""
        return scale_params(self.actor_tanh(self.prepare(s)))

    # -- acting ------------------------------------------------------------------------

    def epsilon_now(self, env_step: int | None = None) -> float:
        n = self.env_steps if env_step is None else env_step
        if n < 0:
            raise ValueError("env_step must be non-negative")
        c = self.cfg
        return max(c.eps_final, c.eps_init * c.eps_decay ** n)

    def greedy(self, S: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Greedy discrete indices and physical continuous vectors for a batch."""
        S = self.prepare(np.atleast_2d(S))
        t = self.actor_tanh(S)
        q = self.q_values(S, t)
        return np.argmax(q, axis=1), scale_params(t)

    def act(self, S: np.ndarray, rng: np.random.Generator, eps: float) -> list[HybridAction]:
        """Epsilon-greedy hybrid actions for a batch of observations (one per row).

        Random numbers are drawn in a fixed order: one exploration coin per row,
        then, row by row, the random action of every exploring row.
        """
        S = np.atleast_2d(S)
        n = S.shape[0]
        if n == 0:
            return []
        explore = rng.random(n) < eps
        out: list[HybridAction | None] = [None] * n
        for i in np.flatnonzero(explore):
            out[i] = random_action(rng)
        greedy_rows = np.flatnonzero(~explore)
        if len(greedy_rows):
            ks, xs = self.greedy(S[greedy_rows])
            for row, k, x in zip(greedy_rows, ks, xs):
                out[row] = make_action(int(k), x)
        return out  # type: ignore[return-value]

    def select_action(self, s: np.ndarray, rng: np.random.Generator, eps: float | None = None) -> HybridAction:
        return self.act(s[None, :], rng, self.epsilon_now() if eps is None else eps)[0]

    # -- learning ------------------------------------------------------------------------

    def double_q_target(self, batch: Batch) -> np.ndarray:
        """Online nets choose the next discrete action, target nets evaluate it."""
        s2 = self.prepare(batch.s2)
        k_star = np.argmax(self.q_values(s2, self.actor_tanh(s2)), axis=1)
        q_tgt = self.q_values(s2, self.actor_tanh(s2, target=True), target=True)
        boot = q_tgt[np.arange(len(batch)), k_star]
        return batch.r + np.where(batch.terminal, 0.0, self.cfg.gamma * boot)

    def critic_inputs(self, batch: Batch) -> np.ndarray:
        s = self.prepare(batch.s)
        t = self.actor_tanh(s)
        for k, slot in enumerate(PARAM_SLOT):
            if slot < 0:
                continue
            rows = batch.k == k
            if rows.any():
                t[rows, slot] = (batch.x[rows] - PARAM_MID[slot]) / PARAM_HALF[slot]
        return np.concatenate([s, t], axis=1)

    def critic_loss(self, batch: Batch, y: np.ndarray | None = None) -> float:
        y = self.double_q_target(batch) if y is None else y
        q = mlp_forward(self.critic, self.critic_inputs(batch))
        e = q[np.arange(len(batch)), batch.k] - y
        return float(np.mean(huber(e, self.cfg.huber_delta)))

    def actor_objective(self, s: np.ndarray) -> float:
        """Mean over the batch of the summed Q-values at the actor's parameters."""
        s = self.prepare(s)
        return float(np.mean(np.sum(self.q_values(s, self.actor_tanh(s)), axis=1)))

    def critic_grads(self, batch: Batch) -> tuple[float, Gradients]:
        """Huber TD loss and its gradient w.r.t. the online critic."""
        y = self.double_q_target(batch)  # constant w.r.t. the critic
        q, cache = mlp_forward(self.critic, self.critic_inputs(batch), cache=True)
        rows = np.arange(len(batch))
        e = q[rows, batch.k] - y
        loss = float(np.mean(huber(e, self.cfg.huber_delta)))
        upstream = np.zeros_like(q)
        upstream[rows, batch.k] = huber_grad(e, self.cfg.huber_delta) / len(batch)
        return loss, mlp_backward(self.critic, cache, upstream)

    def actor_grads(self, s: np.ndarray) -> tuple[float, Gradients]:
        """Actor loss (negated objective) and its gradient w.r.t. the actor, critic frozen."""
        s = self.prepare(s)
        z, a_cache = mlp_forward(self.actor, s, cache=True)
        t = np.tanh(z)
        q, c_cache = mlp_forward(self.critic, np.concatenate([s, t], axis=1), cache=True)
        loss = -float(np.mean(np.sum(q, axis=1)))
        upstream = np.full_like(q, -1.0 / len(s))
        g_in = mlp_backward(self.critic, c_cache, upstream, param_grads=False).inputs
        g_z = g_in[:, -N_PARAMS:] * (1.0 - t * t)
        return loss, mlp_backward(self.actor, a_cache, g_z)

    def critic_update(self, batch: Batch) -> float:
        loss, grads = self.critic_grads(batch)
        clip_global_norm(grads, self.cfg.grad_clip)
        adam_step(self.opt_critic, self.critic, grads)
        return loss

    def actor_update(self, s: np.ndarray) -> float:
        loss, grads = self.actor_grads(s)
        clip_global_norm(grads, self.cfg.grad_clip)
        adam_step(self.opt_actor, self.actor, grads)
        return loss

    def update(self, replay: ReplayBuffer, rng: np.random.Generator) -> tuple[float, float]:
        """One critic step and one actor step on a sampled batch; hard sync on schedule."""
        c = self.cfg
        if len(replay) < max(c.warmup, c.batch_size):
            raise InsufficientReplay(f"replay holds {len(replay)} < warm-up {c.warmup}")
        batch = replay.sample(rng, c.batch_size)
        critic_loss = self.critic_update(batch)
        actor_loss = self.actor_update(batch.s)
        self.grad_steps += 1
        if self.grad_steps % c.sync_period == 0:
            self.sync_targets()
            self.sync_history.append(self.grad_steps)
        return critic_loss, actor_loss

    def sync_targets(self) -> None:
        self.critic_target.assign(self.critic)
        self.actor_target.assign(self.actor)

    def targets_synced(self) -> bool:
        return self.critic_target.equals(self.critic) and self.actor_target.equals(self.actor)

    # -- persistence ---------------------------------------------------------------------

    def save(self, path, extra_meta: dict | None = None) -> None:
        arrays = {}
        arrays.update(params_to_arrays("critic", self.critic))
        arrays.update(params_to_arrays("actor", self.actor))
        arrays.update(params_to_arrays("critic_target", self.critic_target))
        arrays.update(params_to_arrays("actor_target", self.actor_target))
        arrays.update(adam_to_arrays("adam_critic", self.opt_critic))
        arrays.update(adam_to_arrays("adam_actor", self.opt_actor))
        meta = {
            "grad_steps": self.grad_steps,
            "env_steps": self.env_steps,
            "mask_global": self.mask_global,
            "config": vars(self.cfg),
            "sync_history": self.sync_history,
        }
        meta.update(extra_meta or {})
        save_checkpoint(path, arrays, meta)

    @classmethod
    def load(cls, path) -> "PdqnAgent":
        arrays, meta = load_checkpoint(path)
        agent = cls.__new__(cls)
        agent.cfg = PdqnConfig(**meta["config"])
        agent.critic = params_from_arrays("critic", arrays)
        agent.actor = params_from_arrays("actor", arrays)
        agent.critic_target = params_from_arrays("critic_target", arrays)
        agent.actor_target = params_from_arrays("actor_target", arrays)
        agent.opt_critic = adam_from_arrays("adam_critic", arrays, agent.cfg.lr_critic)
        agent.opt_actor = adam_from_arrays("adam_actor", arrays, agent.cfg.lr_actor)
        agent.grad_steps = int(meta["grad_steps"])
        agent.env_steps = int(meta["env_steps"])
        agent.mask_global = bool(meta["mask_global"])
        agent.sync_history = list(meta.get("sync_history", []))
        return agent


def make_action(k: int, x_joint) -> HybridAction:
    slot = PARAM_SLOT[k]
    return HybridAction(k, float(x_joint[slot]) if slot >= 0 else None)


def random_action(rng: np.random.Generator) -> HybridAction:
    k = int(rng.integers(N_ACTIONS))
    if k in PARAM_RANGES:
        lo, hi = PARAM_RANGES[k]
        return HybridAction(k, float(rng.uniform(lo, hi)))
    return HybridAction(k)
