"""PPO / POME training: config, networks, surrogate and unified losses, schedules, the iteration loop."""

from __future__ import annotations

import dataclasses
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dynamics import DynamicsModel, model_input, model_losses, reward_forward, transition_forward
from .envs import DiscreteEnv, VecEnv, make_env
from .errors import ConfigError, ContractError, NonFiniteError, PomeError
from .numkit import (
    AdamState,
    MLPSpec,
    ParamSet,
    Tensor,
    adam_step,
    backward,
    categorical_entropy,
    categorical_kl,
    categorical_logprob,
    clip,
    exp,
    forward_mlp,
    init_mlp,
    minimum,
    sample_categorical,
    square,
    track,
)
from .targets import MODES, Segment, TargetTable, compute_target_table, model_based_target

SCHEDULES = ("linear_to_zero", "constant")
MEDIAN_SCOPES = ("worker", "batch")


@dataclass
class TrainConfig:
    env: str = "chain20"
    env_params: dict = field(default_factory=dict)
    mode: str = "pome"
    gamma: float = 0.99
    lam: float = 0.95
    k: int = 128
    n_workers: int = 8
    clip_ratio: float = 0.2
    clip_schedule: str = "constant"
    alpha0: float = 0.1
    alpha_schedule: str = "linear_to_zero"
    clip_bonus: bool = True
    median_scope: str = "worker"
    beta: float = 0.0
    c_v: float = 1.0
    c_t: float = 2.0
    c_r: float = 2.0
    entropy_coef: float = 0.0
    lr0: float = 2.5e-4
    lr_schedule: str = "linear_to_zero"
    # constant learning rate for the dynamics model; None shares the policy schedule
    model_lr: float | None = None
    epochs: int = 4
    minibatch_count: int = 1
    adv_norm: bool = True
    total_timesteps: int = 300_000
    seed: int = 0
    hidden: tuple[int, ...] = (64, 64)
    model_hidden: int = 128
    record_wall_time: bool = False

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.validate()

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError("mode", f"must be one of {MODES}, got {self.mode!r}")
        for name in ("gamma", "lam"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ConfigError(name, f"must lie in (0, 1], got {value}")
        if self.alpha0 < 0:
            raise ConfigError("alpha0", "must be non-negative")
        if self.clip_ratio <= 0:
            raise ConfigError("clip_ratio", "must be positive")
        for name in ("alpha_schedule", "lr_schedule", "clip_schedule"):
            if getattr(self, name) not in SCHEDULES:
                raise ConfigError(name, f"must be one of {SCHEDULES}")
        if self.median_scope not in MEDIAN_SCOPES:
            raise ConfigError("median_scope", f"must be one of {MEDIAN_SCOPES}")
        for name in ("k", "n_workers", "epochs", "minibatch_count", "model_hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(name, "must be a positive integer")
        if (self.k * self.n_workers) % self.minibatch_count:
            raise ConfigError("minibatch_count", "must divide k * n_workers")
        if self.total_timesteps < 0:
            raise ConfigError("total_timesteps", "must be non-negative")
        if self.model_lr is not None and self.model_lr <= 0:
            raise ConfigError("model_lr", "must be positive when set")
        for name in ("beta", "c_v", "c_t", "c_r", "entropy_coef", "lr0"):
            if getattr(self, name) < 0:
                raise ConfigError(name, "must be non-negative")
        if not self.hidden or min(self.hidden) < 1:
            raise ConfigError("hidden", "needs at least one positive layer width")

    @property
    def batch_size(self) -> int:
        return self.k * self.n_workers

    @property
    def n_iterations(self) -> int:
        return max(1, self.total_timesteps // self.batch_size)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["hidden"] = list(self.hidden)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(unknown[0], "unknown configuration key")
        return cls(**data)


def schedule(value0: float, progress: float, kind: str) -> float:
    """Linear decay to zero as ``progress`` runs from 1 to 0, or a constant."""
    if not 0.0 <= progress <= 1.0:
        raise ContractError(f"progress fraction must lie in [0, 1], got {progress}")
    if kind == "linear_to_zero":
        return value0 * progress
    if kind == "constant":
        return value0
    raise ValueError(f"unknown schedule {kind!r}")


# networks ---------------------------------------------------------------------
@dataclass(frozen=True)
class Networks:
    """Shared-trunk actor-critic plus the separate dynamics model."""

    obs_dim: int
    n_actions: int
    hidden: tuple[int, ...] = (64, 64)
    model_hidden: int = 128

    @property
    def trunk(self) -> MLPSpec:
        sizes = (self.obs_dim,) + tuple(self.hidden)
        return MLPSpec(sizes, ("tanh",) * len(self.hidden))

    @property
    def policy_head(self) -> MLPSpec:
        return MLPSpec((self.hidden[-1], self.n_actions), ("identity",))

    @property
    def value_head(self) -> MLPSpec:
        return MLPSpec((self.hidden[-1], 1), ("identity",))

    @property
    def model(self) -> DynamicsModel:
        return DynamicsModel(self.obs_dim, self.n_actions, self.model_hidden)

    def init_params(self, rng: np.random.Generator) -> ParamSet:
        params = ParamSet()
        init_mlp(params, "pv.trunk.", self.trunk, rng, output_gain=np.sqrt(2.0))
        init_mlp(params, "pv.pi.", self.policy_head, rng, output_gain=0.01)
        init_mlp(params, "pv.v.", self.value_head, rng, output_gain=1.0)
        self.model.init_params(params, rng)
        return params

    def policy_value(self, params, obs) -> tuple[Tensor, Tensor]:
        h = forward_mlp(params, obs, self.trunk, "pv.trunk.")
        logits = forward_mlp(params, h, self.policy_head, "pv.pi.")
        value = forward_mlp(params, h, self.value_head, "pv.v.")
        return logits, value.reshape(value.shape[:-1])

    def values(self, params, obs) -> np.ndarray:
        return self.policy_value(params, np.asarray(obs))[1].data

    def logits(self, params, obs) -> np.ndarray:
        return self.policy_value(params, np.asarray(obs))[0].data

    def predict(self, params, obs, actions) -> tuple[np.ndarray, np.ndarray]:
        x = model_input(obs, actions, self.n_actions)
        return reward_forward(params, self.model, x).data, transition_forward(params, self.model, x).data


def networks_for(env: DiscreteEnv, cfg: TrainConfig) -> Networks:
    spec = env.spec
    return Networks(spec.observation_dim, spec.action_count, cfg.hidden, cfg.model_hidden)


# losses -----------------------------------------------------------------------
def clipped_surrogate(new_logp: Tensor, old_logp, advantages, clip_ratio: float) -> tuple[Tensor, float]:
    """Mean of min(ratio·A, clip(ratio, 1±ε)·A) and the fraction of clipped ratios."""
    with np.errstate(over="ignore"):
        ratio = exp(new_logp - np.asarray(old_logp))
    if not np.all(np.isfinite(ratio.data)):
        raise NonFiniteError("probability ratio is not finite")
    adv = np.asarray(advantages, dtype=np.float64)
    objective = minimum(ratio * adv, clip(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio) * adv).mean()
    clip_frac = float(np.mean(np.abs(ratio.data - 1.0) > clip_ratio))
    return objective, clip_frac


@dataclass
class Batch:
    obs: np.ndarray
    actions: np.ndarray
    old_logp: np.ndarray
    old_logits: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    model_mask: np.ndarray

    def __len__(self) -> int:
        return len(self.actions)

    def take(self, idx) -> "Batch":
        return Batch(**{f.name: getattr(self, f.name)[idx] for f in dataclasses.fields(self)})


def surrogate_loss(params, nets: Networks, batch: Batch, clip_ratio: float) -> Tensor:
    logits, _ = nets.policy_value(params, batch.obs)
    return clipped_surrogate(categorical_logprob(logits, batch.actions), batch.old_logp, batch.advantages, clip_ratio)[0]


def value_loss(values: Tensor, returns) -> Tensor:
    return square(values - np.asarray(returns)).mean()


@dataclass(frozen=True)
class LossWeights:
    clip_ratio: float = 0.2
    beta: float = 0.0
    entropy_coef: float = 0.0
    c_v: float = 1.0
    c_t: float = 2.0
    c_r: float = 2.0


def unified_loss(params, nets: Networks, batch: Batch, w: LossWeights) -> tuple[Tensor, dict[str, float]]:
    """−(surrogate − β·KL + c_H·entropy) + c_v·L_v + c_T·L_T + c_r·L_r, plus the component values."""
    logits, values = nets.policy_value(params, batch.obs)
    surr, clip_frac = clipped_surrogate(
        categorical_logprob(logits, batch.actions), batch.old_logp, batch.advantages, w.clip_ratio
    )
    kl = categorical_kl(batch.old_logits, logits).mean()
    ent = categorical_entropy(logits).mean()
    l_v = value_loss(values, batch.returns)
    l_r, l_t = model_losses(params, nets.model, batch.obs, batch.actions, batch.rewards, batch.next_obs, batch.model_mask)
    total = -(surr - w.beta * kl + w.entropy_coef * ent) + w.c_v * l_v + w.c_t * l_t + w.c_r * l_r
    parts = {
        "surrogate": surr.item(),
        "kl": kl.item(),
        "entropy": ent.item(),
        "value_loss": l_v.item(),
        "reward_loss": l_r.item(),
        "transition_loss": l_t.item(),
        "clip_frac": clip_frac,
    }
    if not np.isfinite(total.item()):
        raise NonFiniteError(f"unified loss is not finite; components: {parts}")
    return total, parts


# training ---------------------------------------------------------------------
@dataclass
class IterationReport:
    iteration: int
    total_steps: int
    mean_return: float
    median_return: float
    surrogate: float
    value_loss: float
    reward_loss: float
    transition_loss: float
    mean_eps: float
    eps_bar_mean: float
    mean_abs_bonus: float
    approx_kl: float
    clip_frac: float
    alpha: float
    lr: float
    wall_seconds: float
    completed_episodes: int = 0


class TrainingError(PomeError, RuntimeError):
    def __init__(self, iteration: int, cause: Exception):
        super().__init__(f"iteration {iteration}: {cause}")
        self.iteration = iteration
        self.cause = cause


def agent_rng(seed: int, stream: int) -> np.random.Generator:
    # worker env streams use spawn keys; agent streams use a two-word entropy
    return np.random.default_rng(np.random.SeedSequence([seed, stream]))


class Trainer:
    """Runs Algorithm-style iterations: collect, compute targets, optimise, anneal."""

    INIT_STREAM, ACTION_STREAM, MINIBATCH_STREAM = 1, 2, 3

    def __init__(self, cfg: TrainConfig, params: ParamSet | None = None):
        self.cfg = cfg
        self.venv = VecEnv([make_env(cfg.env, **cfg.env_params) for _ in range(cfg.n_workers)], seed=cfg.seed)
        self.nets = networks_for(self.venv.envs[0], cfg)
        self.params = params if params is not None else self.nets.init_params(agent_rng(cfg.seed, self.INIT_STREAM))
        self.adam = AdamState()
        self.action_rng = agent_rng(cfg.seed, self.ACTION_STREAM)
        self.minibatch_rng = agent_rng(cfg.seed, self.MINIBATCH_STREAM)
        self.obs = self.venv.reset()
        self.episode_returns: deque[float] = deque(maxlen=100)
        self.completed_episodes = 0
        self.total_steps = 0
        self.iteration = 0
        self.last_segment: Segment | None = None
        self.last_table: TargetTable | None = None

    # schedules ------------------------------------------------------------
    @property
    def progress(self) -> float:
        return max(0.0, 1.0 - self.total_steps / max(self.cfg.total_timesteps, 1))

    @property
    def alpha(self) -> float:
        if self.cfg.mode != "pome":
            return 0.0
        return schedule(self.cfg.alpha0, self.progress, self.cfg.alpha_schedule)

    @property
    def lr(self) -> float:
        return schedule(self.cfg.lr0, self.progress, self.cfg.lr_schedule)

    @property
    def clip_ratio(self) -> float:
        return schedule(self.cfg.clip_ratio, self.progress, self.cfg.clip_schedule)

    # phases ---------------------------------------------------------------
    def collect(self) -> Segment:
        k, n = self.cfg.k, self.cfg.n_workers
        d, A = self.nets.obs_dim, self.nets.n_actions
        obs = np.empty((k, n, d))
        next_obs = np.empty((k, n, d))
        logits = np.empty((k, n, A))
        actions = np.empty((k, n), dtype=np.int64)
        states = np.empty((k, n), dtype=np.int64)
        rewards, dones, values, logp = (np.empty((k, n)) for _ in range(4))
        for t in range(k):
            lg, v = self.nets.policy_value(self.params, self.obs)
            act = sample_categorical(lg.data, self.action_rng)
            obs[t], logits[t], values[t], actions[t] = self.obs, lg.data, v.data, act
            logp[t] = categorical_logprob(lg.data, act).data
            states[t] = [env.state for env in self.venv.envs]
            results = self.venv.step(act)
            for i, res in enumerate(results):
                rewards[t, i] = res.reward
                dones[t, i] = res.done
                next_obs[t, i] = res.final_observation if res.done else res.observation
                self.obs[i] = res.observation
                if res.done:
                    self.episode_returns.append(res.episode_return)
                    self.completed_episodes += 1
        self.total_steps += k * n
        bootstrap = self.nets.values(self.params, self.obs)
        return Segment(obs, actions, rewards, dones, values, logp, logits, next_obs, bootstrap, states)

    def target_table(self, segment: Segment, alpha: float) -> TargetTable:
        q_b = model_based_target(
            segment,
            lambda o, a: self.nets.predict(self.params, o, a),
            lambda o: self.nets.values(self.params, o),
            self.cfg.gamma,
        )
        return compute_target_table(
            segment, q_b, self.cfg.gamma, self.cfg.lam, alpha,
            mode=self.cfg.mode, median_scope=self.cfg.median_scope, clip_bonus=self.cfg.clip_bonus,
        )

    def make_batch(self, segment: Segment, table: TargetTable) -> Batch:
        adv = table.advantages.reshape(-1)
        if self.cfg.adv_norm:
            adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        flat = lambda a: a.reshape((-1,) + a.shape[2:])  # noqa: E731
        return Batch(
            obs=flat(segment.obs),
            actions=flat(segment.actions),
            old_logp=flat(segment.logp),
            old_logits=flat(segment.logits),
            advantages=adv,
            returns=flat(table.returns),
            rewards=flat(segment.rewards),
            next_obs=flat(segment.next_obs),
            model_mask=1.0 - flat(segment.dones),
        )

    def optimise(self, batch: Batch, lr: float, weights: LossWeights) -> dict[str, float]:
        size = len(batch) // self.cfg.minibatch_count
        step_size = lr
        if self.cfg.model_lr is not None:
            model_lr = self.cfg.model_lr
            step_size = lambda name: model_lr if name.startswith("dyn.") else lr  # noqa: E731
        sums: dict[str, float] = {}
        updates = 0
        for _ in range(self.cfg.epochs):
            order = (
                self.minibatch_rng.permutation(len(batch))
                if self.cfg.minibatch_count > 1
                else np.arange(len(batch))
            )
            for start in range(0, len(batch), size):
                mb = batch.take(order[start:start + size])
                leaves = track(self.params)
                loss, parts = unified_loss(leaves, self.nets, mb, weights)
                adam_step(self.params, backward(loss, leaves), self.adam, step_size)
                for key, value in parts.items():
                    sums[key] = sums.get(key, 0.0) + value
                updates += 1
        return {key: value / updates for key, value in sums.items()}

    def train_iteration(self) -> IterationReport:
        started = time.perf_counter()
        try:
            alpha, lr, clip_ratio = self.alpha, self.lr, self.clip_ratio
            segment = self.collect()
            table = self.target_table(segment, alpha)
            batch = self.make_batch(segment, table)
            weights = LossWeights(clip_ratio, self.cfg.beta, self.cfg.entropy_coef, self.cfg.c_v, self.cfg.c_t, self.cfg.c_r)
            stats = self.optimise(batch, lr, weights)
            new_logits = self.nets.logits(self.params, batch.obs)
            approx_kl = float(categorical_kl(batch.old_logits, new_logits).data.mean())
        except PomeError as exc:
            raise TrainingError(self.iteration, exc) from exc
        self.last_segment, self.last_table = segment, table
        returns = np.asarray(self.episode_returns, dtype=np.float64)
        report = IterationReport(
            iteration=self.iteration,
            total_steps=self.total_steps,
            mean_return=float(returns.mean()) if returns.size else 0.0,
            median_return=float(np.median(returns)) if returns.size else 0.0,
            surrogate=stats["surrogate"],
            value_loss=stats["value_loss"],
            reward_loss=stats["reward_loss"],
            transition_loss=stats["transition_loss"],
            mean_eps=float(table.eps.mean()),
            eps_bar_mean=float(np.mean(table.eps_bar)),
            mean_abs_bonus=float(np.abs(table.bonus).mean()),
            approx_kl=approx_kl,
            clip_frac=stats["clip_frac"],
            alpha=alpha,
            lr=lr,
            wall_seconds=time.perf_counter() - started,
            completed_episodes=self.completed_episodes,
        )
        self.iteration += 1
        return report

    def run(self, callback: Callable[[IterationReport], None] | None = None) -> list[IterationReport]:
        reports = []
        for _ in range(self.cfg.n_iterations):
            report = self.train_iteration()
            reports.append(report)
            if callback is not None:
                callback(report)
        return reports


# evaluation -------------------------------------------------------------------
@dataclass
class EvalSummary:
    mean: float
    median: float
    std: float
    returns: np.ndarray

    @property
    def stderr(self) -> float:
        return self.std / np.sqrt(len(self.returns))


def evaluate(
    policy: Callable[[np.ndarray], np.ndarray],
    env: DiscreteEnv,
    episodes: int,
    seed: int = 0,
    greedy: bool = True,
) -> EvalSummary:
    """Roll out ``episodes`` full episodes; ``policy`` maps an observation to logits."""
    if episodes < 1:
        raise ContractError("need at least one evaluation episode")
    rng = agent_rng(seed, Trainer.ACTION_STREAM)
    returns = np.empty(episodes)
    obs = env.reset(seed)
    for ep in range(episodes):
        if ep:
            obs = env.reset()
        while True:
            logits = np.asarray(policy(obs), dtype=np.float64)
            action = int(np.argmax(logits)) if greedy else int(sample_categorical(logits, rng)[0])
            res = env.step(action)
            obs = res.observation
            if res.done:
                returns[ep] = res.episode_return
                break
    return EvalSummary(float(returns.mean()), float(np.median(returns)), float(returns.std()), returns)


def policy_fn(nets: Networks, params) -> Callable[[np.ndarray], np.ndarray]:
    return lambda obs: nets.logits(params, obs)
