"""Dense-matrix autodiff kernel, losses and optimizer."""
from .autodiff import (Adjoints, Node, Parameter, Tape, active_tape, add, as_matrix, backward,
                       barrier, concat, linear, matmul, mean, mul, relu, scale, sigmoid,
                       slice_cols, square, sub, tanh, total, transpose, variable)
from .nn import SGD, Linear, cross_entropy_loss, init_uniform, log_softmax, mse_loss, sgd_step
from . import checkpoint

__all__ = [
    "Adjoints", "Node", "Parameter", "Tape", "active_tape", "add", "as_matrix", "backward",
    "barrier", "concat", "linear", "matmul", "mean", "mul", "relu", "scale", "sigmoid",
    "slice_cols", "square", "sub", "tanh", "total", "transpose", "variable", "SGD", "Linear",
    "cross_entropy_loss", "init_uniform", "log_softmax", "mse_loss", "sgd_step", "checkpoint",
]
