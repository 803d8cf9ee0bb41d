"""Minimal numerical toolkit: reverse-mode autodiff, MLPs, categorical math, Adam."""

from .autodiff import (
    Tensor,
    add,
    backward,
    check_finite,
    clip,
    exp,
    lift,
    log,
    log_softmax,
    matmul,
    minimum,
    mul,
    relu,
    reshape,
    sigmoid,
    square,
    take_last,
    tanh,
    track,
)
from .distributions import (
    categorical_entropy,
    categorical_kl,
    categorical_logprob,
    sample_categorical,
    softmax,
)
from .nn import MLPSpec, ParamSet, forward_mlp, init_mlp, orthogonal
from .optim import AdamState, adam_step

__all__ = [
    "Tensor", "add", "backward", "check_finite", "clip", "exp", "lift", "log",
    "log_softmax", "matmul", "minimum", "mul", "relu", "reshape", "sigmoid", "square",
    "take_last", "tanh", "track", "categorical_entropy", "categorical_kl",
    "categorical_logprob", "sample_categorical", "softmax", "MLPSpec", "ParamSet",
    "forward_mlp", "init_mlp", "orthogonal", "AdamState", "adam_step",
]
