"""Losses, affine layers and the momentum-SGD optimizer."""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from ..errors import ConfigError, ContractError, ShapeError
from ..rng import Stream
from .autodiff import Node, Parameter, _emit, _node, linear


def mse_loss(pred, target) -> Node:
    """Mean over all elements of the squared difference."""
    pred, target = _node(pred), _node(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred.value - target.value
    n = diff.size
    value = np.array([[np.mean(diff * diff)]])
    return _emit(value, (pred, target),
                 lambda g: (g[0, 0] * 2.0 / n * diff, -g[0, 0] * 2.0 / n * diff), "mse")


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy_loss(logits, labels: Sequence[int]) -> Node:
    """Mean negative log-softmax probability of the true class."""
    logits = _node(logits)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    batch, classes = logits.shape
    if labels.shape[0] != batch:
        raise ShapeError(f"{labels.shape[0]} labels for {batch} logit rows")
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise ContractError(f"labels must lie in [0, {classes}), got range "
                            f"[{labels.min()}, {labels.max()}]")
    logp = log_softmax(logits.value)
    rows = np.arange(batch)
    value = np.array([[-logp[rows, labels].mean()]])

    def vjp(g):
        d = np.exp(logp)
        d[rows, labels] -= 1.0
        return (g[0, 0] / batch * d,)

    return _emit(value, (logits,), vjp, "cross_entropy")


def init_uniform(stream: Stream, shape: tuple[int, int], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return stream.uniform(-bound, bound, shape)


class Linear:
    """Affine map with weight (out, in) and bias (1, out), fan-in uniform init."""

    def __init__(self, in_features: int, out_features: int, stream: Stream, name: str = "linear"):
        self.weight = Parameter(init_uniform(stream, (out_features, in_features), in_features), name)
        self.bias = Parameter(init_uniform(stream, (1, out_features), in_features), name + ".bias")

    @property
    def in_features(self) -> int:
        return self.weight.shape[1]

    @property
    def out_features(self) -> int:
        return self.weight.shape[0]

    def __call__(self, x) -> Node:
        return linear(x, self.weight, self.bias)

    def parameters(self) -> list[Parameter]:
        return [self.weight, self.bias]


def sgd_step(params: Iterable[Parameter], lr: float, momentum: float = 0.0,
             weight_decay: float = 0.0) -> None:
    """One in-place momentum SGD step, then zero the gradients.

    v <- momentum * v + (grad + weight_decay * value); value <- value - lr * v
    """
    if not lr > 0:
        raise ConfigError(f"learning rate must be positive, got {lr}", key="lr")
    for p in params:
        d = p.grad + weight_decay * p.value if weight_decay else p.grad
        p.momentum *= momentum
        p.momentum += d
        p.value -= lr * p.momentum
        p.zero_grad()


class SGD:
    """Momentum SGD with coupled weight decay."""

    def __init__(self, params: Iterable[Parameter], lr: float = 0.01, momentum: float = 0.9,
                 weight_decay: float = 1e-4):
        if not lr > 0:
            raise ConfigError(f"learning rate must be positive, got {lr}", key="lr")
        self.params = list(params)
        self.lr, self.momentum, self.weight_decay = lr, momentum, weight_decay

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        sgd_step(self.params, self.lr, self.momentum, self.weight_decay)
