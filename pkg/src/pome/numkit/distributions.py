"""Categorical distribution operations parameterised by logits."""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError
from .autodiff import Tensor, exp, lift, log_softmax, mul, take_last


def categorical_logprob(logits, action) -> Tensor:
    """``log softmax(logits)[action]``; batched over leading axes."""
    return take_last(log_softmax(lift(logits)), action)


def categorical_kl(logits_p, logits_q) -> Tensor:
    """KL(p || q) along the last axis."""
    p, q = lift(logits_p), lift(logits_q)
    if p.shape[-1] != q.shape[-1]:
        raise DimensionError(f"action counts differ: {p.shape[-1]} vs {q.shape[-1]}")
    logp, logq = log_softmax(p), log_softmax(q)
    return mul(exp(logp), logp - logq).sum(axis=-1)


def categorical_entropy(logits) -> Tensor:
    logp = log_softmax(lift(logits))
    return -mul(exp(logp), logp).sum(axis=-1)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sample_categorical(logits: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF sample, one draw per row."""
    probs = softmax(np.atleast_2d(logits))
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[0])[:, None]
    return np.minimum((u >= cdf).sum(axis=-1), probs.shape[-1] - 1)
