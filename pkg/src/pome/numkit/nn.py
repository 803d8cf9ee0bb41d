"""Parameter sets and multilayer perceptrons built on the autodiff core."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np

from ..errors import DimensionError
from .autodiff import Tensor, add, identity, lift, matmul, relu, reshape, sigmoid, tanh

ACTIVATIONS = {"tanh": tanh, "relu": relu, "sigmoid": sigmoid, "identity": identity}


class ParamSet(dict):
    """Ordered mapping of parameter name to float64 array.

    Insertion order is the iteration order, so two sets built by the same
    sequence of calls iterate identically.
    """

    def __setitem__(self, name: str, value) -> None:
        if name in self:
            raise KeyError(f"duplicate parameter name {name!r}")
        super().__setitem__(name, np.asarray(value, dtype=np.float64))

    def update(self, other=(), **kwargs) -> None:  # type: ignore[override]
        for name, value in dict(other, **kwargs).items():
            self[name] = value

    def subset(self, prefix: str) -> Iterator[str]:
        return (name for name in self if name.startswith(prefix))

    def copy(self) -> "ParamSet":
        out = ParamSet()
        for name, value in self.items():
            out[name] = value.copy()
        return out

    def replace(self, name: str, value: np.ndarray) -> None:
        dict.__setitem__(self, name, np.asarray(value, dtype=np.float64))


@dataclass(frozen=True)
class MLPSpec:
    sizes: tuple[int, ...]
    activations: tuple[str, ...]

    def __post_init__(self):
        if len(self.sizes) < 2:
            raise DimensionError("an MLP needs at least input and output sizes")
        if len(self.activations) != len(self.sizes) - 1:
            raise DimensionError("need one activation per layer")
        for act in self.activations:
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1


def orthogonal(shape: tuple[int, int], gain: float, rng: np.random.Generator) -> np.ndarray:
    rows, cols = shape
    flat = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(flat)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def init_mlp(
    params: ParamSet,
    prefix: str,
    spec: MLPSpec,
    rng: np.random.Generator,
    hidden_gain: float = np.sqrt(2.0),
    output_gain: float = 1.0,
) -> ParamSet:
    """Add orthogonally initialised weights and zero biases for ``spec``; returns ``params``."""
    for i in range(spec.n_layers):
        gain = output_gain if i == spec.n_layers - 1 else hidden_gain
        params[f"{prefix}{i}.W"] = orthogonal((spec.sizes[i], spec.sizes[i + 1]), gain, rng)
        params[f"{prefix}{i}.b"] = np.zeros(spec.sizes[i + 1])
    return params


def forward_mlp(params: Mapping, x, spec: MLPSpec, prefix: str = "") -> Tensor:
    """Apply the MLP described by ``spec`` to a batch ``x`` of shape (B, in).

    A 1-D input is treated as a batch of one and the batch axis is dropped
    from the result.
    """
    h = lift(x)
    squeeze = h.ndim == 1
    if squeeze:
        h = reshape(h, (1, -1))
    if h.shape[-1] != spec.sizes[0]:
        raise DimensionError(f"input width {h.shape[-1]} does not match layer width {spec.sizes[0]}")
    for i, act in enumerate(spec.activations):
        w = lift(params[f"{prefix}{i}.W"])
        b = lift(params[f"{prefix}{i}.b"])
        if w.shape != (spec.sizes[i], spec.sizes[i + 1]):
            raise DimensionError(f"{prefix}{i}.W has shape {w.shape}, expected {(spec.sizes[i], spec.sizes[i + 1])}")
        h = ACTIVATIONS[act](add(matmul(h, w), b))
    return reshape(h, (-1,)) if squeeze else h
