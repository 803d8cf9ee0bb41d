"""Small discrete-action MDPs with one-hot observations and a synchronous vector wrapper.

Environments share a tiny interface: ``reset(seed)``, ``step(action)``,
``encode_observation(state)`` and an :class:`EnvSpec`. States are integer cell
indices; observations are one-hot float vectors in ``[0, 1]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, PomeError


@dataclass(frozen=True)
class EnvSpec:
    observation_dim: int
    action_count: int
    observation_bounds: tuple[tuple[float, float], ...] = field(repr=False, default=())

    def __post_init__(self):
        if self.observation_dim < 1 or self.action_count < 1:
            raise ValueError("observation_dim and action_count must be positive")
        if not self.observation_bounds:
            object.__setattr__(self, "observation_bounds", ((0.0, 1.0),) * self.observation_dim)
        if len(self.observation_bounds) != self.observation_dim:
            raise ValueError("one (low, high) pair per observation dimension")
        for low, high in self.observation_bounds:
            if not (np.isfinite(low) and np.isfinite(high) and low < high):
                raise ValueError(f"invalid observation bounds ({low}, {high})")


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    episode_return: float | None = None
    truncated: bool = False
    # observation reached before an auto-reset replaced ``observation``
    final_observation: np.ndarray | None = None


class ActionError(PomeError, IndexError):
    pass


class WorkerError(PomeError, RuntimeError):
    def __init__(self, worker: int, cause: Exception):
        super().__init__(f"worker {worker}: {cause}")
        self.worker = worker
        self.cause = cause


def make_rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def worker_seed(base_seed: int, worker_index: int) -> np.random.SeedSequence:
    """Independent stream for one worker; unaffected by how many workers exist."""
    return np.random.SeedSequence(entropy=base_seed, spawn_key=(worker_index,))


class DiscreteEnv:
    """Base class for tabular environments with a fixed start state and step cap."""

    n_states: int
    n_actions: int
    start_state: int

    def __init__(self, max_steps: int):
        if max_steps < 1:
            raise ValueError("max_steps must be positive")
        self.max_steps = max_steps
        self.state = self.start_state
        self.steps = 0
        self.episode_return = 0.0
        self._done = True
        self._rng = make_rng(0)

    @property
    def spec(self) -> EnvSpec:
        return EnvSpec(self.n_states, self.n_actions)

    def encode_observation(self, state: int) -> np.ndarray:
        if not 0 <= state < self.n_states:
            raise ContractError(f"invalid state {state}")
        obs = np.zeros(self.n_states)
        obs[state] = 1.0
        return obs

    def reset(self, seed=None) -> np.ndarray:
        if seed is not None:
            self._rng = make_rng(seed)
        self.state = self.start_state
        self.steps = 0
        self.episode_return = 0.0
        self._done = False
        return self.encode_observation(self.state)

    def set_state(self, state: int) -> np.ndarray:
        """Place the agent in ``state`` mid-episode (used for model datasets and tests)."""
        self.encode_observation(state)
        self.state = state
        self._done = False
        return self.encode_observation(state)

    def step(self, action) -> StepResult:
        if self._done:
            raise ContractError("step called on a finished episode; call reset first")
        if isinstance(action, (bool, np.bool_)) or int(action) != action or not 0 <= int(action) < self.n_actions:
            raise ActionError(f"action {action!r} outside [0, {self.n_actions})")
        next_state, reward, terminal = self._transition(self.state, int(action))
        self.state = next_state
        self.steps += 1
        self.episode_return += reward
        truncated = not terminal and self.steps >= self.max_steps
        done = terminal or truncated
        self._done = done
        return StepResult(
            observation=self.encode_observation(next_state),
            reward=float(reward),
            done=done,
            episode_return=self.episode_return if done else None,
            truncated=truncated,
        )

    def _transition(self, state: int, action: int) -> tuple[int, float, bool]:
        raise NotImplementedError


class ChainMDP(DiscreteEnv):
    """Corridor of ``length`` cells; start at cell 0.

    RIGHT (action 1) moves one cell right; arriving at the last cell pays +1
    and ends the episode. LEFT (action 0) moves one cell left, except at cell
    0 where it ends the episode with a small ``trap_reward``. With
    ``sparse=True`` the trap pays nothing.
    """

    LEFT, RIGHT = 0, 1
    n_actions = 2
    start_state = 0

    def __init__(self, length: int = 20, max_steps: int = 100, sparse: bool = False, trap_reward: float = 0.001):
        if length < 2:
            raise ValueError("chain length must be at least 2")
        self.length = length
        self.n_states = length
        self.trap_reward = 0.0 if sparse else trap_reward
        super().__init__(max_steps)

    def _transition(self, state, action):
        if action == self.RIGHT:
            nxt = state + 1
            if nxt == self.length - 1:
                return nxt, 1.0, True
            return nxt, 0.0, False
        if state == 0:
            return 0, self.trap_reward, True
        return state - 1, 0.0, False


GRID_MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))  # up, right, down, left


class DetGrid(DiscreteEnv):
    """Deterministic gridworld: start top-left, goal bottom-right.

    Each step costs 0.01; entering the goal adds +1 and ends the episode.
    Moves into a wall leave the agent in place.
    """

    n_actions = 4
    step_cost = 0.01

    def __init__(self, rows: int = 5, cols: int = 5, max_steps: int = 100, start=None, goal=None):
        self.rows, self.cols = rows, cols
        self.n_states = rows * cols
        self.start_state = self.cell(*(start or (0, 0)))
        self.goal_state = self.cell(*(goal or (rows - 1, cols - 1)))
        super().__init__(max_steps)

    def cell(self, row: int, col: int) -> int:
        if not (0 <= row < self.rows and 0 <= col < self.cols):
            raise ValueError(f"cell ({row}, {col}) outside {self.rows}x{self.cols} grid")
        return row * self.cols + col

    def coords(self, state: int) -> tuple[int, int]:
        return divmod(state, self.cols)

    def move(self, state: int, action: int) -> int:
        row, col = self.coords(state)
        dr, dc = GRID_MOVES[action]
        r, c = row + dr, col + dc
        if 0 <= r < self.rows and 0 <= c < self.cols:
            return self.cell(r, c)
        return state

    def neighbors(self, state: int) -> list[int]:
        row, col = self.coords(state)
        out = []
        for dr, dc in GRID_MOVES:
            r, c = row + dr, col + dc
            if 0 <= r < self.rows and 0 <= c < self.cols:
                out.append(self.cell(r, c))
        return out

    def _next_state(self, state: int, action: int) -> int:
        return self.move(state, action)

    def _transition(self, state, action):
        nxt = self._next_state(state, action)
        if nxt == self.goal_state:
            return nxt, 1.0 - self.step_cost, True
        return nxt, -self.step_cost, False


class NoisyCorridor(DetGrid):
    """Gridworld whose middle columns scramble the agent's moves.

    Inside the noisy zone (``zone`` is a half-open column range) every action
    lands on a uniformly random in-grid neighbour of the current cell.
    Elsewhere moves are deterministic. The agent starts on the left edge of
    the middle row and the goal sits on the right edge, past the zone.
    """

    def __init__(self, rows: int = 5, cols: int = 9, max_steps: int = 100, zone: tuple[int, int] = (3, 6)):
        if not 0 < zone[0] < zone[1] < cols - 1:
            raise ValueError(f"noisy zone {zone} must sit strictly between the start and goal columns")
        self.zone = tuple(zone)
        mid = rows // 2
        super().__init__(rows, cols, max_steps, start=(mid, 0), goal=(mid, cols - 1))

    def in_zone(self, state: int) -> bool:
        return self.zone[0] <= self.coords(state)[1] < self.zone[1]

    def _next_state(self, state, action):
        if self.in_zone(state):
            options = self.neighbors(state)
            return options[int(self._rng.integers(len(options)))]
        return self.move(state, action)


ENV_REGISTRY: dict[str, Callable[..., DiscreteEnv]] = {
    "chain20": lambda **kw: ChainMDP(**{"length": 20, **kw}),
    "chain": ChainMDP,
    "detgrid5": lambda **kw: DetGrid(**{"rows": 5, "cols": 5, **kw}),
    "detgrid": DetGrid,
    "noisycorridor": NoisyCorridor,
}


def make_env(env_id: str, **params) -> DiscreteEnv:
    try:
        factory = ENV_REGISTRY[env_id]
    except KeyError:
        raise ValueError(f"unknown env id {env_id!r}; choose from {sorted(ENV_REGISTRY)}") from None
    return factory(**params)


class VecEnv:
    """Steps ``n_workers`` environments in lock-step with auto-reset.

    Worker ``i`` is seeded from ``(seed, i)`` unless explicit ``worker_seeds``
    are given. Results always come back in worker order.
    """

    def __init__(self, envs: Sequence[DiscreteEnv], seed: int = 0, worker_seeds=None):
        if not envs:
            raise ValueError("need at least one worker")
        self.envs = list(envs)
        if worker_seeds is None:
            worker_seeds = [worker_seed(seed, i) for i in range(len(self.envs))]
        if len(worker_seeds) != len(self.envs):
            raise ValueError("one seed per worker")
        self.worker_seeds = list(worker_seeds)

    @property
    def n_workers(self) -> int:
        return len(self.envs)

    @property
    def spec(self) -> EnvSpec:
        return self.envs[0].spec

    def reset(self) -> np.ndarray:
        return np.stack([env.reset(s) for env, s in zip(self.envs, self.worker_seeds)])

    def step(self, actions) -> list[StepResult]:
        actions = list(np.asarray(actions).reshape(-1))
        if len(actions) != self.n_workers:
            raise ContractError(f"expected {self.n_workers} actions, got {len(actions)}")
        results = []
        for i, (env, action) in enumerate(zip(self.envs, actions)):
            try:
                res = env.step(action)
            except PomeError as exc:
                raise WorkerError(i, exc) from exc
            if res.done:
                res.final_observation = res.observation
                res.observation = env.reset()
            results.append(res)
        return results


def vec_step(venv: VecEnv, actions) -> list[StepResult]:
    return venv.step(actions)


def make_vec_env(env_id: str, n_workers: int, seed: int, **params) -> VecEnv:
    return VecEnv([make_env(env_id, **params) for _ in range(n_workers)], seed=seed)
