"""Learned reward and transition approximators with their regression losses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ModelDivergenceError
from .numkit import MLPSpec, ParamSet, Tensor, forward_mlp, init_mlp, square

REWARD_PREFIX = "dyn.reward."
TRANSITION_PREFIX = "dyn.transition."


@dataclass(frozen=True)
class DynamicsModel:
    """Architecture of the reward net (identity head) and transition net (sigmoid head).

    Parameters live in a shared :class:`ParamSet` under the ``dyn.`` prefix.
    """

    obs_dim: int
    action_count: int
    hidden: int = 128
    activation: str = "relu"

    @property
    def input_dim(self) -> int:
        return self.obs_dim + self.action_count

    @property
    def reward_spec(self) -> MLPSpec:
        return MLPSpec((self.input_dim, self.hidden, 1), (self.activation, "identity"))

    @property
    def transition_spec(self) -> MLPSpec:
        return MLPSpec((self.input_dim, self.hidden, self.obs_dim), (self.activation, "sigmoid"))

    def init_params(self, params: ParamSet, rng: np.random.Generator) -> ParamSet:
        init_mlp(params, REWARD_PREFIX, self.reward_spec, rng)
        init_mlp(params, TRANSITION_PREFIX, self.transition_spec, rng)
        # start every output at the one-hot base rate 1/obs_dim; a zero bias
        # lets early updates saturate rarely-active units where sigmoid+MSE
        # gradients vanish
        base_logit = -np.log(max(self.obs_dim - 1, 1))
        params.replace(f"{TRANSITION_PREFIX}{self.transition_spec.n_layers - 1}.b", np.full(self.obs_dim, base_logit))
        return params


def model_input(observation, action, action_count: int) -> np.ndarray:
    """Concatenate observations with one-hot actions; works on single samples or batches."""
    obs = np.asarray(observation, dtype=np.float64)
    act = np.asarray(action, dtype=np.int64)
    onehot = np.zeros(act.shape + (action_count,))
    np.put_along_axis(onehot, act[..., None], 1.0, axis=-1)
    return np.concatenate([obs, onehot], axis=-1)


def _check(values: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise ModelDivergenceError(f"{what} produced non-finite output")


def reward_forward(params, model: DynamicsModel, inputs) -> Tensor:
    out = forward_mlp(params, inputs, model.reward_spec, REWARD_PREFIX)
    return out.reshape(out.shape[:-1])


def transition_forward(params, model: DynamicsModel, inputs) -> Tensor:
    return forward_mlp(params, inputs, model.transition_spec, TRANSITION_PREFIX)


def predict_reward(params, model: DynamicsModel, observation, action) -> np.ndarray:
    out = reward_forward(params, model, model_input(observation, action, model.action_count)).data
    _check(out, "reward model")
    return out


def predict_transition(params, model: DynamicsModel, observation, action) -> np.ndarray:
    out = transition_forward(params, model, model_input(observation, action, model.action_count)).data
    _check(out, "transition model")
    return out


def model_losses(params, model: DynamicsModel, obs, actions, rewards, next_obs, transition_mask=None):
    """Mean squared reward error and mean squared-norm next-state error.

    ``transition_mask`` (1 keeps, 0 drops) excludes samples from the
    transition loss; the reward loss always uses every sample. A batch whose
    mask is all zero contributes a transition loss of exactly 0.
    """
    obs = np.asarray(obs, dtype=np.float64)
    if obs.ndim != 2 or obs.shape[0] == 0:
        raise ContractError("model_losses needs a non-empty (batch, obs_dim) array")
    inputs = model_input(obs, actions, model.action_count)
    r_hat = reward_forward(params, model, inputs)
    loss_r = square(r_hat - np.asarray(rewards, dtype=np.float64)).mean()

    t_hat = transition_forward(params, model, inputs)
    per_sample = square(t_hat - np.asarray(next_obs, dtype=np.float64)).sum(axis=-1)
    if transition_mask is None:
        loss_t = per_sample.mean()
    else:
        mask = np.asarray(transition_mask, dtype=np.float64)
        loss_t = (per_sample * mask).sum() * (1.0 / max(mask.sum(), 1.0))
    _check(r_hat.data, "reward model")
    _check(t_hat.data, "transition model")
    return loss_r, loss_t
