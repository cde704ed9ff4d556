"""Environments and the per-level learning loop.

A task is: a set of composite channels (one row per user), a phase grid,
and an agent configuration. The environment evaluates the mean beamforming
gain of the chosen phase vector and hands back the binary reward, +1 only
on a strict improvement over the previous gain.

Multi-level learning runs the same loop level by level: level 1 learns one
phase vector per sub-array (sibling sub-arrays can be transfer-initialized
from the first one), the frozen result folds the channels into effective
group channels, and the next level learns the combining phases.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ..codebook import InteractionVector, PhaseGrid, _as_matrix
from ..errors import TrainingError
from ..multilevel import LevelPhases, LevelSpec, _effective_matrix, synthesize_phases
from ..utils import derive_seed
from .agent import AgentConfig, WolpertingerAgent, transfer_init


class GainEnvironment:
    """Mean-gain evaluator with the binary improvement reward."""

    def __init__(self, channels, grid: PhaseGrid, norm: int | None = None):
        self.channels = _as_matrix(channels)
        self.grid = grid
        self.norm = int(norm) if norm is not None else self.channels.shape[1]
        self.prev_gain: float | None = None

    @property
    def state_dim(self) -> int:
        return self.channels.shape[1]

    def gain(self, indices) -> float:
        steering = np.exp(1j * self.grid.values[np.asarray(indices)])
        # elementwise product + pairwise sum keeps this bitwise identical
        # to the scalar gain() evaluator on single-user tasks
        s = (self.channels * steering).sum(axis=1)
        return float((np.abs(s) ** 2).mean() / self.norm)

    def reset(self, state) -> float:
        self.prev_gain = self.gain(state)
        return self.prev_gain

    def step(self, state, action):
        """Apply `action`; the next state is the action itself."""
        if self.prev_gain is None:
            self.reset(state)
        g = self.gain(action)
        reward = 1.0 if g > self.prev_gain else -1.0
        self.prev_gain = g
        return np.asarray(action).copy(), reward, g


def env_step(channels, state, action, grid: PhaseGrid, norm: int | None = None):
    """Stateless single step: (next_state, reward, gain).

    The previous gain is the gain of `state`, which by construction is the
    previous action. Ties yield -1.
    """
    env = GainEnvironment(channels, grid, norm)
    g_prev = env.gain(state)
    g = env.gain(action)
    reward = 1.0 if g > g_prev else -1.0
    return np.asarray(action).copy(), reward, g


@dataclass
class TaskTrace:
    """Per-iteration log of one learning task."""

    level: int
    group: int
    initial_gain: float
    iterations: np.ndarray
    prev_gain: np.ndarray
    gain: np.ndarray
    best_gain: np.ndarray
    reward: np.ndarray
    critic_loss: np.ndarray
    actor_loss: np.ndarray

    def scaled(self, factor: float) -> "TaskTrace":
        return replace(
            self,
            initial_gain=self.initial_gain * factor,
            prev_gain=self.prev_gain * factor,
            gain=self.gain * factor,
            best_gain=self.best_gain * factor,
        )


@dataclass
class LearnedResult:
    """Outcome of learn_vector: the synthesized beam plus diagnostics."""

    vector: InteractionVector
    gain: float
    trace: TaskTrace
    level_phases: LevelPhases
    task_traces: list[TaskTrace]


def run_task(agent: WolpertingerAgent, channels, grid: PhaseGrid,
             norm: int | None = None, level: int = 1, group: int = 0):
    """Run one learning task to its budget; returns (best indices, trace)."""
    env = GainEnvironment(channels, grid, norm)
    m = env.state_dim
    state = np.full(m, grid.zero_index, dtype=np.int64)
    g0 = env.reset(state)
    best = state.copy()
    best_gain = g0
    budget = agent.config.budget
    rows = np.zeros((budget, 6))
    prev = g0
    for t in range(1, budget + 1):
        action = agent.act(state, t)
        next_state, reward, g = env.step(state, action)
        agent.observe(state, action, reward, next_state)
        try:
            critic_loss, actor_loss = agent.maybe_train()
        except TrainingError as e:
            raise TrainingError(f"iteration {t}: {e}") from e
        if g > best_gain:
            best_gain = g
            best = action.copy()
        rows[t - 1] = (prev, g, best_gain, reward, critic_loss, actor_loss)
        prev = g
        state = next_state
    trace = TaskTrace(
        level=level,
        group=group,
        initial_gain=g0,
        iterations=np.arange(1, budget + 1),
        prev_gain=rows[:, 0].copy(),
        gain=rows[:, 1].copy(),
        best_gain=rows[:, 2].copy(),
        reward=rows[:, 3].copy(),
        critic_loss=rows[:, 4].copy(),
        actor_loss=rows[:, 5].copy(),
    )
    return best, trace


def learn_vector(channels, spec: LevelSpec, grid: PhaseGrid, config: AgentConfig,
                 master_seed: int | None = None, transfer: bool = True,
                 max_workers: int = 1) -> LearnedResult:
    """Learn one full-surface reflection vector level by level.

    Lower-level results are frozen before the next level runs. Within a
    level, the first group trains from scratch and the remaining groups
    start from its trained parameters when `transfer` is set. Deterministic
    given the seed: every task draws from a named substream.
    """
    matrix = _as_matrix(channels)
    spec.require_elements(matrix.shape[1])
    seed = config.seed if master_seed is None else master_seed
    sizes = spec.sizes
    v = spec.num_levels
    lower: list[np.ndarray] = []
    task_traces: list[TaskTrace] = []
    top_trace: TaskTrace | None = None

    for level in range(1, v + 1):
        p = sizes[level - 1]
        effective = _effective_matrix(matrix, spec, grid, lower)
        groups = effective.shape[1] // p
        best_per_group: list[np.ndarray | None] = [None] * groups
        traces: list[TaskTrace | None] = [None] * groups

        def task_config(g):
            return replace(config, seed=derive_seed(seed, "level", level, "group", g))

        source = WolpertingerAgent(p, grid, task_config(0))
        best_per_group[0], traces[0] = run_task(
            source, effective[:, 0:p], grid, level=level, group=0,
        )

        def run_group(g):
            if transfer:
                agent = transfer_init(source, seed=task_config(g).seed)
            else:
                agent = WolpertingerAgent(p, grid, task_config(g))
            return run_task(
                agent, effective[:, g * p:(g + 1) * p], grid, level=level, group=g,
            )

        rest = range(1, groups)
        if max_workers > 1 and groups > 2:
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                for g, out in zip(rest, pool.map(run_group, rest)):
                    best_per_group[g], traces[g] = out
        else:
            for g in rest:
                best_per_group[g], traces[g] = run_group(g)

        task_traces.extend(traces)
        level_array = np.concatenate(best_per_group).reshape(spec.level_shape(level))
        lower.append(level_array)
        if level == v:
            top_trace = traces[0]

    level_phases = LevelPhases(grid, spec, tuple(lower))
    vector = synthesize_phases(level_phases)
    # the top-level environment normalizes by P_v; rescale its trace so the
    # reported gains are in full-array units (the sums are identical)
    scale = sizes[-1] / spec.num_elements
    trace = top_trace.scaled(scale)
    return LearnedResult(
        vector=vector,
        gain=float(trace.best_gain[-1]),
        trace=trace,
        level_phases=level_phases,
        task_traces=task_traces,
    )
