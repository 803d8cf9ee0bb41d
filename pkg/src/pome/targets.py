"""Model-free and model-based TD targets, the discrepancy bonus, and k-step advantages.

All arrays are time-major: shape ``(k, n_workers)`` (or ``(k,)`` for a single
worker). Every function here is a pure transformation of rollout data.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, TextIO

import numpy as np

from .errors import ContractError, ModelDivergenceError

MODES = ("ppo", "pome", "ppo_model_based")
DUMP_COLUMNS = ("t", "worker", "r", "V", "Q_f", "Q_b", "eps", "eps_bar", "delta", "delta_pome", "adv")


@dataclass
class Segment:
    """``k`` steps of experience from each worker, bootstrapped at the end.

    ``next_obs`` holds the true successor observation even when the episode
    ended (before the auto-reset), ``values`` and ``logp`` come from the
    rollout-time parameters, and ``bootstrap_value`` is V of the observation
    following the last step.
    """

    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    values: np.ndarray
    logp: np.ndarray
    logits: np.ndarray
    next_obs: np.ndarray
    bootstrap_value: np.ndarray
    states: np.ndarray | None = None

    def __post_init__(self):
        k = self.rewards.shape[0]
        for name in ("obs", "actions", "dones", "values", "logp", "logits", "next_obs"):
            if getattr(self, name).shape[0] != k:
                raise ContractError(f"segment field {name} does not have length {k}")
        if self.bootstrap_value.shape != self.rewards.shape[1:]:
            raise ContractError("bootstrap_value needs one entry per worker")

    @property
    def k(self) -> int:
        return self.rewards.shape[0]

    @property
    def n_workers(self) -> int:
        return self.rewards.shape[1] if self.rewards.ndim > 1 else 1

    def next_values(self) -> np.ndarray:
        """V(s_{t+1}) along the segment, using the bootstrap at the last step."""
        return np.concatenate([self.values[1:], self.bootstrap_value[None]], axis=0)


def model_free_target(rewards, dones, next_values, gamma: float) -> np.ndarray:
    notdone = 1.0 - np.asarray(dones, dtype=np.float64)
    return np.asarray(rewards, dtype=np.float64) + gamma * notdone * np.asarray(next_values, dtype=np.float64)


def td_errors(targets, values) -> np.ndarray:
    return np.asarray(targets) - np.asarray(values)


def model_based_target(
    segment: Segment,
    dynamics_fn: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]],
    value_fn: Callable[[np.ndarray], np.ndarray],
    gamma: float,
) -> np.ndarray:
    """r̂(s,a) + γ(1−done)·V(T̂(s,a)) with V applied directly to the predicted observation.

    ``dynamics_fn`` maps flat ``(obs, actions)`` to ``(reward_hat, next_obs_hat)``.
    """
    shape = segment.rewards.shape
    obs = segment.obs.reshape(-1, segment.obs.shape[-1])
    r_hat, next_hat = dynamics_fn(obs, segment.actions.reshape(-1))
    v_hat = value_fn(next_hat)
    if not (np.all(np.isfinite(r_hat)) and np.all(np.isfinite(v_hat))):
        raise ModelDivergenceError("model-based target is not finite")
    notdone = 1.0 - segment.dones.astype(np.float64)
    return np.reshape(r_hat, shape) + gamma * notdone * np.reshape(v_hat, shape)


def discrepancy(q_free, q_based) -> np.ndarray:
    return np.abs(np.asarray(q_based) - np.asarray(q_free))


def center_epsilon(eps, scope: str = "worker") -> np.ndarray:
    """Median of the discrepancies along time, per worker or over the whole batch.

    Even counts use the mean of the two middle order statistics. The result
    has one entry per worker in both scopes.
    """
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape[0] < 1:
        raise ContractError("need at least one timestep")
    if scope == "worker":
        return np.median(eps, axis=0)
    if scope == "batch":
        return np.full(eps.shape[1:], np.median(eps))
    raise ValueError(f"unknown median scope {scope!r}")


def pome_delta(delta, eps, eps_bar, alpha, clip: bool = True) -> np.ndarray:
    """δ + α·clip(ε − ε̄, −|δ|, |δ|); ``clip=False`` gives the unbounded variant.

    ``alpha`` is usually a scalar but broadcasts like the other inputs.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    if np.any(alpha < 0):
        raise ContractError("alpha must be non-negative")
    delta = np.asarray(delta, dtype=np.float64)
    centered = np.asarray(eps) - np.asarray(eps_bar)
    if clip:
        bound = np.abs(delta)
        centered = np.clip(centered, -bound, bound)
    return delta + alpha * centered


def pome_advantages(deltas, dones, gamma: float, lam: float) -> np.ndarray:
    """Backward recursion A_t = δ_t + γλ(1−done_t)·A_{t+1}, starting from A_{k−1} = δ_{k−1}."""
    deltas = np.asarray(deltas, dtype=np.float64)
    notdone = 1.0 - np.asarray(dones, dtype=np.float64)
    adv = np.empty_like(deltas)
    running = np.zeros(deltas.shape[1:])
    for t in range(deltas.shape[0] - 1, -1, -1):
        running = deltas[t] + gamma * lam * notdone[t] * running
        adv[t] = running
    return adv


def value_targets(advantages, values) -> np.ndarray:
    return np.asarray(advantages) + np.asarray(values)


@dataclass
class TargetTable:
    q_free: np.ndarray
    q_based: np.ndarray
    eps: np.ndarray
    eps_bar: np.ndarray
    delta: np.ndarray
    delta_pome: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    rewards: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    @property
    def bonus(self) -> np.ndarray:
        """The (scaled, clipped) amount added to each TD error."""
        return self.delta_pome - self.delta

    def rows(self):
        k = self.delta.shape[0]
        n = self.delta.shape[1] if self.delta.ndim > 1 else 1
        cols = [np.reshape(a, (k, n)) for a in (
            self.rewards, self.values, self.q_free, self.q_based, self.eps,
            np.broadcast_to(self.eps_bar, self.delta.shape),
            self.delta, self.delta_pome, self.advantages,
        )]
        for w in range(n):
            for t in range(k):
                yield (t, w) + tuple(float(c[t, w]) for c in cols)


def compute_target_table(
    segment: Segment,
    q_based: np.ndarray,
    gamma: float,
    lam: float,
    alpha: float,
    mode: str = "pome",
    median_scope: str = "worker",
    clip_bonus: bool = True,
) -> TargetTable:
    """Assemble every per-timestep target quantity for one rollout segment.

    ``mode`` picks the TD error feeding the advantage recursion: the plain
    model-free error (``ppo``), the bonus-augmented one (``pome``), or the
    model-based error Q_b − V (``ppo_model_based``). The discrepancy columns
    are filled in every mode.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    q_free = model_free_target(segment.rewards, segment.dones, segment.next_values(), gamma)
    delta = td_errors(q_free, segment.values)
    eps = discrepancy(q_free, q_based)
    eps_bar = center_epsilon(eps, median_scope)
    if mode == "pome":
        used = pome_delta(delta, eps, eps_bar, alpha, clip=clip_bonus)
    elif mode == "ppo":
        used = delta.copy()
    else:
        used = td_errors(q_based, segment.values)
    adv = pome_advantages(used, segment.dones, gamma, lam)
    return TargetTable(
        q_free=q_free,
        q_based=np.asarray(q_based, dtype=np.float64),
        eps=eps,
        eps_bar=eps_bar,
        delta=delta,
        delta_pome=used,
        advantages=adv,
        returns=value_targets(adv, segment.values),
        rewards=segment.rewards,
        values=segment.values,
    )


def dump_target_table(table: TargetTable, out: TextIO) -> None:
    """Write one CSV row per (worker, timestep) with the fixed diagnostic header."""
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(DUMP_COLUMNS)
    for row in table.rows():
        writer.writerow([row[0], row[1]] + [repr(v) for v in row[2:]])
