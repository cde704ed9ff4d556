"""Wolpertinger-style actor-critic over the quantized phase grid.

The actor emits a continuous proto phase vector; a deterministic projection
expands it into a few nearby grid vectors; the critic ranks them and the
best one becomes the action. Exploration adds Gaussian noise to the proto
phases (noise_target="proto"), with the scale decaying linearly over the
iteration budget.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, replace

import numpy as np

from ..codebook import PhaseGrid
from ..errors import ConfigurationError, DatasetFormatError, TrainingError
from ..utils import wrap_phase
from .nets import MLP, Adam, soft_update


@dataclass(frozen=True)
class AgentConfig:
    """Hyperparameters for one learning task."""

    hidden: tuple[int, ...] = (64, 32)
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    gamma: float = 0.99
    tau: float = 0.01
    noise_scale: float = 1.0
    noise_final: float = 0.05
    noise_target: str = "proto"
    buffer_capacity: int = 10_000
    batch_size: int = 64
    k: int = 8
    budget: int = 1000
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.k < 1:
            raise ConfigurationError("candidate count k must be >= 1")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigurationError("discount must lie in [0, 1)")
        if self.batch_size < 1:
            raise ConfigurationError("batch size must be >= 1")
        if self.buffer_capacity < self.batch_size:
            raise ConfigurationError("replay capacity must be >= batch size")
        if self.budget < 1:
            raise ConfigurationError("iteration budget must be >= 1")
        if self.noise_scale < 0 or self.noise_final < 0:
            raise ConfigurationError("noise scales must be non-negative")
        if self.noise_target != "proto":
            raise ConfigurationError("only proto-action exploration noise is supported")


@dataclass(frozen=True)
class RLTransition:
    """One logged step; the action doubles as the next state."""

    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray

    def __post_init__(self):
        if self.reward not in (-1.0, 1.0):
            raise ConfigurationError("reward must be +1 or -1")
        if not np.array_equal(self.action, self.next_state):
            raise ConfigurationError("the action is defined to be the next state")


class ReplayBuffer:
    """Fixed-capacity transition store; overwrites oldest entries first."""

    def __init__(self, capacity: int, state_dim: int):
        self.capacity = int(capacity)
        self.states = np.zeros((self.capacity, state_dim), dtype=np.int64)
        self.actions = np.zeros((self.capacity, state_dim), dtype=np.int64)
        self.rewards = np.zeros(self.capacity)
        self.next_states = np.zeros((self.capacity, state_dim), dtype=np.int64)
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def add(self, state, action, reward, next_state) -> None:
        i = self._next
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, rng: np.random.Generator, batch_size: int) -> dict:
        idx = rng.integers(0, self._size, batch_size)
        return {
            "states": self.states[idx],
            "actions": self.actions[idx],
            "rewards": self.rewards[idx],
            "next_states": self.next_states[idx],
        }

    def contents(self) -> dict:
        """Stored transitions in insertion order (oldest first)."""
        if self._size < self.capacity:
            order = np.arange(self._size)
        else:
            order = np.arange(self._next, self._next + self.capacity) % self.capacity
        return {
            "states": self.states[order],
            "actions": self.actions[order],
            "rewards": self.rewards[order],
            "next_states": self.next_states[order],
        }


def encode_phases(phases: np.ndarray) -> np.ndarray:
    """(cos, sin) feature map; sidesteps the wrap discontinuity at +-pi."""
    phases = np.atleast_2d(phases)
    return np.concatenate([np.cos(phases), np.sin(phases)], axis=-1)


def knn_project(proto, grid: PhaseGrid, k: int) -> np.ndarray:
    """Deterministic projection of proto phases onto k nearby grid vectors.

    Candidate 1 rounds every element to its nearest grid value. Candidate
    j+1 additionally flips the rounding direction of the j elements with
    the largest rounding error (stable order), so every candidate stays
    within one grid step per element of candidate 1. k is clamped to
    M' + 1, the number of distinct vectors this scheme can produce.
    """
    proto = np.asarray(proto, dtype=float).reshape(-1)
    if k < 1:
        raise ConfigurationError("candidate count k must be >= 1")
    m = proto.shape[0]
    if k > m + 1:
        warnings.warn(
            f"candidate count {k} clamped to {m + 1} (one flip per element)",
            stacklevel=2,
        )
        k = m + 1
    near, flip, err = grid._bracket(proto)
    order = np.argsort(-err, kind="stable")
    candidates = np.empty((k, m), dtype=np.int64)
    candidates[0] = near
    current = near.copy()
    for j in range(1, k):
        current = current.copy()
        current[order[j - 1]] = flip[order[j - 1]]
        candidates[j] = current
    return candidates


def select_action(score_fn, state, candidates) -> np.ndarray:
    """Pick the candidate the critic scores highest (ties: first candidate)."""
    candidates = np.asarray(candidates)
    if candidates.shape[0] < 1:
        raise ConfigurationError("need at least one candidate action")
    scores = np.asarray(score_fn(state, candidates)).reshape(-1)
    return candidates[int(np.argmax(scores))].copy()


class WolpertingerAgent:
    """Deterministic-policy actor-critic with replay and target networks."""

    def __init__(self, state_dim: int, grid: PhaseGrid, config: AgentConfig):
        self.state_dim = int(state_dim)
        self.grid = grid
        self.config = config
        seq = np.random.SeedSequence(config.seed)
        init_rng, noise_rng, sample_rng = [np.random.default_rng(s) for s in seq.spawn(3)]
        m = self.state_dim
        self.actor = MLP((2 * m, *config.hidden, m), output="tanh_pi", rng=init_rng)
        self.critic = MLP((4 * m, *config.hidden, 1), output="linear", rng=init_rng)
        self.target_actor = self.actor.clone()
        self.target_critic = self.critic.clone()
        self.actor_opt = Adam(self.actor.size, config.actor_lr)
        self.critic_opt = Adam(self.critic.size, config.critic_lr)
        self.buffer = ReplayBuffer(config.buffer_capacity, m)
        self.noise_rng = noise_rng
        self.sample_rng = sample_rng
        # the projection can produce at most m+1 distinct candidates
        self.k = min(config.k, m + 1)

    # -- acting -------------------------------------------------------

    def proto_action(self, state) -> np.ndarray:
        """Continuous phase vector in (-pi, pi] proposed by the actor."""
        phases = self.grid.values[np.asarray(state)]
        proto = self.actor.forward(encode_phases(phases))[0]
        # saturated tanh can land exactly on -pi; -pi and +pi are the same angle
        return np.where(proto <= -np.pi, np.pi, proto)

    def exploration_sigma(self, iteration: int) -> float:
        cfg = self.config
        if cfg.budget <= 1:
            return cfg.noise_scale
        frac = min(max(iteration - 1, 0) / (cfg.budget - 1), 1.0)
        return cfg.noise_scale + (cfg.noise_final - cfg.noise_scale) * frac

    def act(self, state, iteration: int, explore: bool = True) -> np.ndarray:
        proto = self.proto_action(state)
        if explore:
            sigma = self.exploration_sigma(iteration)
            if sigma > 0:
                proto = wrap_phase(proto + sigma * self.noise_rng.standard_normal(self.state_dim))
        candidates = knn_project(proto, self.grid, self.k)
        return select_action(self.critic_scores, state, candidates)

    def critic_scores(self, state, candidates) -> np.ndarray:
        candidates = np.asarray(candidates)
        state_enc = encode_phases(self.grid.values[np.asarray(state)])
        state_tile = np.repeat(state_enc, candidates.shape[0], axis=0)
        action_enc = encode_phases(self.grid.values[candidates])
        return self.critic.forward(np.concatenate([state_tile, action_enc], axis=1)).reshape(-1)

    # -- learning -----------------------------------------------------

    def observe(self, state, action, reward, next_state) -> None:
        self.buffer.add(state, action, reward, next_state)

    def maybe_train(self) -> tuple[float, float]:
        if len(self.buffer) < self.config.batch_size:
            return (float("nan"), float("nan"))
        batch = self.buffer.sample(self.sample_rng, self.config.batch_size)
        return self.train_step(batch)

    def train_step(self, batch: dict) -> tuple[float, float]:
        """One critic regression + actor ascent + soft target update."""
        cfg = self.config
        values = self.grid.values
        s_enc = encode_phases(values[batch["states"]])
        a_enc = encode_phases(values[batch["actions"]])
        ns_enc = encode_phases(values[batch["next_states"]])
        rewards = np.asarray(batch["rewards"], dtype=float).reshape(-1)
        n = rewards.shape[0]

        # critic target: r + gamma * Q_target(s', actor_target(s'))
        next_actions = self.target_actor.forward(ns_enc)
        q_next = self.target_critic.forward(
            np.concatenate([ns_enc, encode_phases(next_actions)], axis=1)
        ).reshape(-1)
        target = rewards + cfg.gamma * q_next

        critic_in = np.concatenate([s_enc, a_enc], axis=1)
        q, critic_cache = self.critic.forward(critic_in, want_cache=True)
        residual = q.reshape(-1) - target
        critic_loss = float(np.mean(residual**2))
        dq = (2.0 / n) * residual.reshape(-1, 1)
        critic_grad, _ = self.critic.backward(critic_cache, dq)
        self.critic_opt.step(self.critic.theta, critic_grad)

        # actor ascends the freshly updated critic
        proto, actor_cache = self.actor.forward(s_enc, want_cache=True)
        proto_enc = encode_phases(proto)
        q_in = np.concatenate([s_enc, proto_enc], axis=1)
        q_pi, q_cache = self.critic.forward(q_in, want_cache=True)
        actor_loss = float(-np.mean(q_pi))
        _, dinput = self.critic.backward(q_cache, np.full((n, 1), -1.0 / n))
        denc = dinput[:, 2 * self.state_dim:]
        dcos, dsin = denc[:, : self.state_dim], denc[:, self.state_dim:]
        dproto = -np.sin(proto) * dcos + np.cos(proto) * dsin
        actor_grad, _ = self.actor.backward(actor_cache, dproto)
        self.actor_opt.step(self.actor.theta, actor_grad)

        if not (np.isfinite(critic_loss) and np.isfinite(actor_loss)):
            raise TrainingError(
                f"non-finite loss (critic={critic_loss}, actor={actor_loss})"
            )

        soft_update(self.target_actor, self.actor, cfg.tau)
        soft_update(self.target_critic, self.critic, cfg.tau)
        return critic_loss, actor_loss


def transfer_init(source: WolpertingerAgent, target: WolpertingerAgent | None = None,
                  seed: int | None = None,
                  config: AgentConfig | None = None) -> WolpertingerAgent:
    """Seed a new task's agent with a trained agent's parameters.

    Copies online and target networks; the replay buffer is not copied and
    optimizer state starts fresh. Pass `target` to transfer into an
    existing agent, or `config` to give the new agent its own schedule;
    architectures must match either way.
    """
    if target is None:
        config = config or source.config
        if seed is not None:
            config = replace(config, seed=seed)
        target = WolpertingerAgent(source.state_dim, source.grid, config)
    if (target.state_dim != source.state_dim
            or target.actor.dims != source.actor.dims
            or target.critic.dims != source.critic.dims):
        raise ConfigurationError(
            "transfer requires matching actor/critic architectures"
        )
    target.actor.copy_params_from(source.actor)
    target.critic.copy_params_from(source.critic)
    target.target_actor.copy_params_from(source.target_actor)
    target.target_critic.copy_params_from(source.target_critic)
    target.actor_opt.reset()
    target.critic_opt.reset()
    return target


CHECKPOINT_FORMAT_VERSION = 1


def save_agent(path, agent: WolpertingerAgent) -> None:
    """Checkpoint the agent: architecture, parameters, config, and seed.

    Text JSON with repr-precision floats, so a load reproduces every
    parameter bit for bit. The replay buffer is not part of a checkpoint.
    """
    body = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "state_dim": agent.state_dim,
        "q": agent.grid.bits,
        "config": asdict(agent.config),
        "actor": agent.actor.theta.tolist(),
        "critic": agent.critic.theta.tolist(),
        "target_actor": agent.target_actor.theta.tolist(),
        "target_critic": agent.target_critic.theta.tolist(),
    }
    body["config"]["hidden"] = list(agent.config.hidden)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(body, fh, indent=1)
        fh.write("\n")


def load_agent(path) -> WolpertingerAgent:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as e:
        raise DatasetFormatError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from e
    if raw.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise DatasetFormatError(f"{path}: unsupported format_version")
    try:
        cfg_raw = dict(raw["config"])
        cfg_raw["hidden"] = tuple(cfg_raw["hidden"])
        config = AgentConfig(**cfg_raw)
        agent = WolpertingerAgent(int(raw["state_dim"]), PhaseGrid(int(raw["q"])), config)
        for name, net in (("actor", agent.actor), ("critic", agent.critic),
                          ("target_actor", agent.target_actor),
                          ("target_critic", agent.target_critic)):
            theta = np.asarray(raw[name], dtype=float)
            if theta.shape != net.theta.shape:
                raise DatasetFormatError(
                    f"{path}: {name} has {theta.shape[0]} parameters, "
                    f"expected {net.theta.shape[0]}"
                )
            net.theta[...] = theta
    except (KeyError, TypeError) as e:
        raise DatasetFormatError(f"{path}: missing or malformed field: {e}") from e
    return agent
