"""Standalone dynamics fit on DetGrid transitions, shared by the model tests."""

from __future__ import annotations

import numpy as np

from pome.dynamics import DynamicsModel, model_losses
from pome.envs import DetGrid
from pome.numkit import AdamState, ParamSet, adam_step, backward, track


def detgrid_dataset(n: int = 10_000, seed: int = 0):
    """``n`` transitions from uniformly random non-goal states and uniformly random actions."""
    env = DetGrid()
    rng = np.random.default_rng(seed)
    states = [s for s in range(env.n_states) if s != env.goal_state]
    obs, actions, rewards, next_obs = [], [], [], []
    env.reset(seed)
    for s, a in zip(rng.choice(states, n), rng.integers(env.n_actions, size=n)):
        obs.append(env.set_state(int(s)))
        res = env.step(int(a))
        actions.append(int(a))
        rewards.append(res.reward)
        next_obs.append(res.observation)
    return np.array(obs), np.array(actions), np.array(rewards), np.array(next_obs)


def fit_detgrid_model(steps: int = 5000, batch: int = 256, lr: float = 1e-3, seed: int = 0):
    """Adam on random minibatches; returns (model, params, final full-data (L_r, L_T))."""
    obs, actions, rewards, next_obs = detgrid_dataset(seed=seed)
    model = DynamicsModel(obs.shape[1], 4)
    rng = np.random.default_rng(seed)
    params = model.init_params(ParamSet(), rng)
    state = AdamState()
    for _ in range(steps):
        idx = rng.integers(len(obs), size=batch)
        leaves = track(params)
        l_r, l_t = model_losses(leaves, model, obs[idx], actions[idx], rewards[idx], next_obs[idx])
        adam_step(params, backward(l_r + l_t, leaves), state, lr)
    l_r, l_t = model_losses(params, model, obs, actions, rewards, next_obs)
    return model, params, (l_r.item(), l_t.item())
