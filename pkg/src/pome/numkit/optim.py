from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from ..errors import DimensionError, NonFiniteError


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict, grads: Mapping[str, np.ndarray], state: AdamState, lr: float | Callable[[str], float]):
    """One bias-corrected Adam update, applied in place. Returns ``(params, state)``.

    ``lr`` may be a callable mapping a parameter name to its learning rate.
    """
    for name in params:
        g = grads[name]
        if g.shape != params[name].shape:
            raise DimensionError(f"gradient for {name} has shape {g.shape}, parameter {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for parameter {name!r}")
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for name, p in params.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        step = lr(name) if callable(lr) else lr
        p -= step * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state
