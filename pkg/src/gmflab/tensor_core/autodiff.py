"""Dense 2-D reverse-mode autodiff.

Values are float64 numpy arrays of shape (rows, cols). Operations executed
while a :class:`Tape` is active, and that touch at least one node requiring
gradients, are appended to the tape in execution order; replaying their
adjoints in reverse order is therefore a valid reverse topological sweep.
Without an active tape every operation is a plain forward evaluation.
"""
from __future__ import annotations

import contextvars
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import ContractError, NonFiniteError, ShapeError

_ACTIVE: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar("gmflab_tape", default=None)


def as_matrix(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    elif a.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


class Node:
    """A matrix value, optionally recorded on a tape."""

    __slots__ = ("value", "parents", "vjp", "requires_grad", "op", "__weakref__")

    def __init__(self, value, parents: tuple = (), vjp: Callable | None = None,
                 requires_grad: bool = False, op: str = "const"):
        self.value = as_matrix(value)
        self.parents = parents
        self.vjp = vjp
        self.requires_grad = requires_grad
        self.op = op

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Node(op={self.op}, shape={self.shape})"

    # operator sugar
    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    @property
    def T(self):
        return transpose(self)


class Parameter(Node):
    """Trainable leaf with gradient accumulator and momentum buffer."""

    __slots__ = ("grad", "momentum", "name")

    def __init__(self, value, name: str = ""):
        super().__init__(np.array(as_matrix(value), copy=True), requires_grad=True, op="param")
        self.grad = np.zeros_like(self.value)
        self.momentum = np.zeros_like(self.value)
        self.name = name

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def variable(value) -> Node:
    """A non-parameter leaf whose adjoint is still reported by backward."""
    return Node(value, requires_grad=True, op="leaf")


class Adjoints:
    """Adjoint of the loss with respect to every node reached by backward."""

    def __init__(self):
        self._store: dict[int, tuple[Node, np.ndarray]] = {}

    def _accumulate(self, node: Node, g: np.ndarray) -> None:
        entry = self._store.get(id(node))
        if entry is None:
            self._store[id(node)] = (node, g.copy())
        else:
            np.add(entry[1], g, out=entry[1])

    def get(self, node: Node):
        entry = self._store.get(id(node))
        return None if entry is None else entry[1]

    def __getitem__(self, node: Node) -> np.ndarray:
        """Adjoint of ``node``; exact zeros if no adjoint ever reached it."""
        g = self.get(node)
        return np.zeros_like(node.value) if g is None else g

    def __contains__(self, node: Node) -> bool:
        return id(node) in self._store


class Tape:
    """Ordered record of primitive operations.

    Use as a context manager; the tape is bound to the current context only
    (thread/task local), so concurrent trials never share one.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.reset(self._token)
        self._token = None

    def backward(self, loss: Node) -> Adjoints:
        """Propagate d(loss)/d(node) to every node; accumulate into Parameter.grad."""
        if loss.shape != (1, 1):
            raise ContractError(f"backward needs a scalar (1x1) loss, got shape {loss.shape}")
        adj = Adjoints()
        adj._accumulate(loss, np.ones((1, 1)))
        for node in reversed(self.nodes):
            g = adj.get(node)
            if g is None or node.vjp is None:
                continue
            for parent, gp in zip(node.parents, node.vjp(g)):
                if gp is not None and parent.requires_grad:
                    adj._accumulate(parent, gp)
        for node, g in adj._store.values():
            if isinstance(node, Parameter):
                node.grad += g
        return adj


def active_tape() -> Tape | None:
    return _ACTIVE.get()


def backward(tape: Tape, loss: Node) -> Adjoints:
    return tape.backward(loss)


def _node(x) -> Node:
    return x if isinstance(x, Node) else Node(x)


def _emit(value: np.ndarray, parents: Sequence[Node], vjp: Callable, op: str) -> Node:
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(f"{op} produced non-finite values")
    tape = _ACTIVE.get()
    if tape is not None and any(p.requires_grad for p in parents):
        node = Node(value, tuple(parents), vjp, requires_grad=True, op=op)
        tape.nodes.append(node)
        return node
    return Node(value, op=op)


# ---------------------------------------------------------------- primitives

def matmul(a, b) -> Node:
    a, b = _node(a), _node(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    av, bv = a.value, b.value
    return _emit(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g), "matmul")


def transpose(a) -> Node:
    a = _node(a)
    return _emit(a.value.T.copy(), (a,), lambda g: (g.T,), "transpose")


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape[0] == 1 and shape[1] == g.shape[1]:
        return g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and shape[0] == g.shape[0]:
        return g.sum(axis=1, keepdims=True)
    return g.sum().reshape(1, 1)


def _check_broadcast(a: Node, b: Node, op: str) -> None:
    (ra, ca), (rb, cb) = a.shape, b.shape
    if (ra, ca) == (rb, cb):
        return
    if (rb in (1, ra) and cb in (1, ca)) or (ra in (1, rb) and ca in (1, cb)):
        return
    raise ShapeError(f"{op} shape mismatch: {a.shape} vs {b.shape}")


def add(a, b) -> Node:
    """Elementwise sum; a row vector (1, c) or column (r, 1) broadcasts."""
    a, b = _node(a), _node(b)
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape
    return _emit(a.value + b.value, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Node:
    a, b = _node(a), _node(b)
    _check_broadcast(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _emit(a.value - b.value, (a, b),
                 lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)), "sub")


def mul(a, b) -> Node:
    a, b = _node(a), _node(b)
    _check_broadcast(a, b, "mul")
    av, bv = a.value, b.value
    return _emit(av * bv, (a, b),
                 lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)), "mul")


def scale(a, k: float) -> Node:
    a = _node(a)
    return _emit(a.value * k, (a,), lambda g: (g * k,), "scale")


def concat(nodes: Iterable, axis: int = 1) -> Node:
    nodes = [_node(n) for n in nodes]
    if not nodes:
        raise ContractError("concat of an empty list")
    other = 1 - axis
    if len({n.shape[other] for n in nodes}) != 1:
        raise ShapeError(f"concat shape mismatch: {[n.shape for n in nodes]}")
    sizes = [n.shape[axis] for n in nodes]
    cuts = np.cumsum(sizes)[:-1]
    value = np.concatenate([n.value for n in nodes], axis=axis)
    return _emit(value, nodes, lambda g: tuple(np.split(g, cuts, axis=axis)), "concat")


def slice_cols(a, start: int, stop: int) -> Node:
    a = _node(a)
    if not 0 <= start < stop <= a.shape[1]:
        raise ShapeError(f"column slice [{start}:{stop}] out of range for shape {a.shape}")
    shape = a.shape

    def vjp(g):
        out = np.zeros(shape)
        out[:, start:stop] = g
        return (out,)

    return _emit(a.value[:, start:stop].copy(), (a,), vjp, "slice")


def tanh(a) -> Node:
    a = _node(a)
    y = np.tanh(a.value)
    return _emit(y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


def sigmoid(a) -> Node:
    a = _node(a)
    y = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return _emit(y, (a,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def relu(a) -> Node:
    a = _node(a)
    mask = (a.value > 0).astype(np.float64)
    return _emit(a.value * mask, (a,), lambda g: (g * mask,), "relu")


def square(a) -> Node:
    a = _node(a)
    av = a.value
    return _emit(av * av, (a,), lambda g: (2.0 * g * av,), "square")


def total(a) -> Node:
    """Sum of all entries as a 1x1 node."""
    a = _node(a)
    shape = a.shape
    return _emit(a.value.sum().reshape(1, 1), (a,), lambda g: (np.full(shape, g[0, 0]),), "sum")


def mean(a) -> Node:
    a = _node(a)
    shape = a.shape
    n = a.value.size
    return _emit(a.value.mean().reshape(1, 1), (a,), lambda g: (np.full(shape, g[0, 0] / n),), "mean")


def barrier(a, enabled: bool = True) -> Node:
    """Gradient barrier: forward identity, adjoint blocked.

    The output is a fresh constant carrying an exact copy of the input value,
    so nothing computed from it can send an adjoint back to ``a``. With
    ``enabled=False`` it is a differentiable identity (the ablation path).
    """
    a = _node(a)
    if enabled:
        tape = _ACTIVE.get()
        node = Node(a.value.copy(), (a,), None, requires_grad=False, op="barrier")
        if tape is not None:
            tape.nodes.append(node)
        return node
    return _emit(a.value.copy(), (a,), lambda g: (g,), "identity")


def linear(x, weight, bias=None) -> Node:
    """Row-batch affine map ``x @ weight.T + bias`` with weight shaped (out, in)."""
    x, weight = _node(x), _node(weight)
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(f"linear input shape {x.shape} incompatible with weight {weight.shape}")
    y = matmul(x, transpose(weight))
    return y if bias is None else add(y, bias)
