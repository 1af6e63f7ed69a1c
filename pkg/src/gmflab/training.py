"""Minibatch training loop shared by the experiments."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NonFiniteError
from .rng import Stream
from .tensor_core import SGD, Node, Parameter, Tape, cross_entropy_loss


def accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def minibatches(n: int, batch: int, stream: Stream) -> list[np.ndarray]:
    order = stream.permutation(n)
    return [order[i:i + batch] for i in range(0, n, batch)]


@dataclass
class FitResult:
    losses: list[float] = field(default_factory=list)
    diverged: bool = False
    message: str = ""


def fit_classifier(forward: Callable[[np.ndarray], Node], params: Sequence[Parameter],
                   x: np.ndarray, y: np.ndarray, *, epochs: int, batch: int, lr: float,
                   momentum: float, weight_decay: float, stream: Stream,
                   anneal_epochs: int = 0) -> FitResult:
    """Cross-entropy training with momentum SGD; records mean loss per epoch.

    The last ``anneal_epochs`` epochs run at lr/10 so the final iterate is not
    dominated by minibatch noise.
    """
    opt = SGD(params, lr, momentum, weight_decay)
    result = FitResult()
    for epoch in range(epochs):
        if anneal_epochs and epoch == epochs - anneal_epochs:
            opt.lr = lr / 10
        total = 0.0
        for idx in minibatches(x.shape[0], batch, stream):
            try:
                with Tape() as tape:
                    loss = cross_entropy_loss(forward(x[idx]), y[idx])
                    tape.backward(loss)
            except NonFiniteError as exc:
                result.diverged, result.message = True, f"epoch {epoch}: {exc}"
                return result
            opt.step()
            total += loss.value[0, 0] * len(idx)
        mean_loss = total / x.shape[0]
        result.losses.append(mean_loss)
        if not math.isfinite(mean_loss):
            result.diverged, result.message = True, f"epoch {epoch}: non-finite loss"
            return result
    return result
