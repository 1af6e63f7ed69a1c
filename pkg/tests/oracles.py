"""Independent reference computations used by the test-suite."""
from __future__ import annotations

import numpy as np

from gmflab import tensor_core as tc


def finite_difference(fn, param: tc.Parameter, h: float = 1e-5) -> np.ndarray:
    """Central differences of the scalar ``fn()`` with respect to ``param``."""
    grad = np.zeros_like(param.value)
    it = np.nditer(param.value, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = param.value[idx]
        param.value[idx] = old + h
        up = fn().value[0, 0]
        param.value[idx] = old - h
        down = fn().value[0, 0]
        param.value[idx] = old
        grad[idx] = (up - down) / (2 * h)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0 else float(np.linalg.norm(a - b) / scale)


def random_graph(rng: np.random.Generator, max_dim: int = 8):
    """Build a random smooth computation graph over fresh Parameters.

    Returns ``(params, fn)`` where ``fn()`` evaluates the graph to a 1x1 node.
    """
    params: list[tc.Parameter] = []

    def new_param(shape):
        p = tc.Parameter(rng.normal(size=shape), name=f"p{len(params)}")
        params.append(p)
        return ("param", len(params) - 1)

    def dim():
        return int(rng.integers(1, max_dim + 1))

    # pool entries: (ref, shape); ref is ("param", i) or ("step", k)
    pool = [(new_param((dim(), dim())), None)]
    pool[0] = (pool[0][0], params[0].shape)
    steps = []
    for _ in range(int(rng.integers(2, 9))):
        src, (r, c) = pool[int(rng.integers(len(pool)))]
        kind = rng.choice(["matmul", "add", "bias", "mul", "tanh", "sigmoid", "square",
                           "transpose", "concat", "slice", "scale"])
        if kind == "matmul":
            other = new_param((c, dim()))
            steps.append(("matmul", src, other))
            shape = (r, params[other[1]].shape[1])
        elif kind in ("add", "mul"):
            other = new_param((r, c))
            steps.append((kind, src, other))
            shape = (r, c)
        elif kind == "bias":
            steps.append(("add", src, new_param((1, c))))
            shape = (r, c)
        elif kind == "transpose":
            steps.append(("transpose", src))
            shape = (c, r)
        elif kind == "concat":
            other = new_param((r, dim()))
            steps.append(("concat", src, other))
            shape = (r, c + params[other[1]].shape[1])
        elif kind == "slice":
            start = int(rng.integers(0, c))
            stop = int(rng.integers(start + 1, c + 1))
            steps.append(("slice", src, start, stop))
            shape = (r, stop - start)
        elif kind == "scale":
            steps.append(("scale", src, float(rng.normal())))
            shape = (r, c)
        else:
            steps.append((kind, src))
            shape = (r, c)
        pool.append((("step", len(steps) - 1), shape))

    last_ref, (r, c) = pool[-1]
    head = rng.choice(["sum", "mean", "mse", "ce"])
    target = rng.normal(size=(r, c))
    labels = rng.integers(0, c, size=r)

    def fn():
        vals = []

        def get(ref):
            return params[ref[1]] if ref[0] == "param" else vals[ref[1]]

        for st in steps:
            op = st[0]
            if op == "matmul":
                vals.append(tc.matmul(get(st[1]), get(st[2])))
            elif op == "add":
                vals.append(tc.add(get(st[1]), get(st[2])))
            elif op == "mul":
                vals.append(tc.mul(get(st[1]), get(st[2])))
            elif op == "concat":
                vals.append(tc.concat([get(st[1]), get(st[2])]))
            elif op == "slice":
                vals.append(tc.slice_cols(get(st[1]), st[2], st[3]))
            elif op == "scale":
                vals.append(tc.scale(get(st[1]), st[2]))
            else:
                vals.append(getattr(tc, op)(get(st[1])))
        out = get(last_ref)
        if head == "sum":
            return tc.total(out)
        if head == "mean":
            return tc.mean(out)
        if head == "mse":
            return tc.mse_loss(out, target)
        return tc.cross_entropy_loss(out, labels)

    return params, fn


def check_graph_gradients(rng: np.random.Generator) -> float:
    """Worst relative error between tape gradients and finite differences."""
    params, fn = random_graph(rng)
    with tc.Tape() as tape:
        loss = fn()
        tape.backward(loss)
    worst = 0.0
    for p in params:
        worst = max(worst, relative_error(p.grad, finite_difference(fn, p)))
    return worst


def brute_force_auc(scores, labels) -> float:
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


def plugin_entropy_from_probs(probs) -> float:
    p = np.asarray([q for q in probs if q > 0], dtype=float)
    return float(-(p * np.log(p)).sum())
