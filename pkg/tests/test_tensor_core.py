import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gmflab import tensor_core as tc
from gmflab.errors import ConfigError, ContractError, NonFiniteError, ShapeError
from gmflab.rng import SeedStreams
from gmflab.tensor_core import checkpoint

from oracles import check_graph_gradients, finite_difference, relative_error


def test_matmul_identity():
    m = np.arange(12.0).reshape(3, 4)
    assert np.array_equal(tc.matmul(np.eye(3), m).value, m)


def test_matmul_hand_product():
    out = tc.matmul([[1, 2], [3, 4]], [[5], [6]])
    assert out.value.tolist() == [[17.0], [39.0]]


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
        tc.matmul(np.zeros((2, 3)), np.zeros((4, 5)))


def test_backward_sum_of_linear_map():
    # loss = sum(W x): dloss/dW = ones(out) outer x
    w = tc.Parameter(np.random.default_rng(0).normal(size=(3, 4)))
    x = np.array([[1.0], [2.0], [-1.0], [0.5]])
    with tc.Tape() as tape:
        tape.backward(tc.total(tc.matmul(w, x)))
    assert np.array_equal(w.grad, np.ones((3, 1)) @ x.T)


def test_backward_requires_scalar():
    w = tc.Parameter(np.ones((2, 2)))
    with tc.Tape() as tape:
        y = tc.matmul(w, w)
        with pytest.raises(ContractError):
            tape.backward(y)


def test_barrier_blocks_adjoint():
    x = tc.variable(np.array([[1.0, 2.0]]))
    w = tc.Parameter(np.array([[0.5], [-1.0]]))
    with tc.Tape() as tape:
        hidden = tc.tanh(x)
        blocked = tc.barrier(hidden)
        assert np.array_equal(blocked.value, hidden.value)
        adj = tape.backward(tc.total(tc.matmul(blocked, w)))
    assert np.all(adj[x] == 0.0)
    assert x not in adj
    assert np.any(w.grad != 0)


def test_barrier_disabled_is_identity():
    x = tc.variable(np.array([[1.0, 2.0]]))
    with tc.Tape() as tape:
        adj = tape.backward(tc.total(tc.barrier(x, enabled=False)))
    assert np.array_equal(adj[x], np.ones((1, 2)))


@pytest.mark.parametrize("seed", range(20))
def test_random_graph_gradients_match_finite_differences(seed):
    assert check_graph_gradients(np.random.default_rng(seed)) < 1e-5


def test_relu_gradient_away_from_kink():
    w = tc.Parameter(np.array([[1.5, -2.0, 0.3]]))
    fn = lambda: tc.total(tc.square(tc.relu(w)))
    with tc.Tape() as tape:
        tape.backward(fn())
    assert relative_error(w.grad, finite_difference(fn, w)) < 1e-8


def test_mse_loss_values():
    assert tc.mse_loss([[1.0, 2.0]], [[1.0, 2.0]]).value[0, 0] == 0.0
    assert tc.mse_loss([[1.0, 1.0]], [[0.0, 0.0]]).value[0, 0] == 1.0
    assert tc.mse_loss([[2.0]], [[0.0]]).value[0, 0] == 4.0
    with pytest.raises(ShapeError):
        tc.mse_loss(np.zeros((1, 2)), np.zeros((2, 1)))


def test_cross_entropy_uniform_logits():
    loss = tc.cross_entropy_loss(np.zeros((3, 4)), [0, 1, 3])
    assert loss.value[0, 0] == pytest.approx(math.log(4), abs=1e-15)


def test_cross_entropy_decreases_with_margin():
    losses = [tc.cross_entropy_loss([[m, 0.0, 0.0]], [0]).value[0, 0] for m in (0.0, 1.0, 2.0, 5.0)]
    assert all(a > b for a, b in zip(losses, losses[1:]))


def test_cross_entropy_hand_softmax():
    logits = np.array([[1.0, 2.0, 0.5], [0.0, -1.0, 3.0]])
    labels = [1, 0]
    p0 = math.exp(2.0) / (math.exp(1.0) + math.exp(2.0) + math.exp(0.5))
    p1 = math.exp(0.0) / (math.exp(0.0) + math.exp(-1.0) + math.exp(3.0))
    expected = -(math.log(p0) + math.log(p1)) / 2
    assert tc.cross_entropy_loss(logits, labels).value[0, 0] == pytest.approx(expected, abs=1e-12)


def test_cross_entropy_label_range():
    with pytest.raises(ContractError):
        tc.cross_entropy_loss(np.zeros((1, 3)), [3])


def test_sgd_updates():
    p = tc.Parameter([[0.0]])
    tc.sgd_step([p], lr=0.1)
    assert p.value[0, 0] == 0.0

    p.grad[...] = 1.0
    tc.sgd_step([p], lr=0.1, momentum=0.0)
    assert p.value[0, 0] == pytest.approx(-0.1)
    assert p.grad[0, 0] == 0.0

    q = tc.Parameter([[0.0]])
    for _ in range(2):
        q.grad[...] = 1.0
        tc.sgd_step([q], lr=1.0, momentum=0.9)
    assert q.value[0, 0] == pytest.approx(-2.9, abs=1e-15)


def test_sgd_rejects_nonpositive_lr():
    with pytest.raises(ConfigError):
        tc.sgd_step([tc.Parameter([[1.0]])], lr=0.0)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_values_raise():
    with pytest.raises(NonFiniteError):
        tc.matmul([[np.inf]], [[0.0]])


def test_untracked_ops_without_tape():
    w = tc.Parameter(np.ones((2, 2)))
    y = tc.matmul(w, w)
    assert not y.requires_grad and y.parents == ()


def _train_steps(seed, steps=25):
    stream = SeedStreams(seed)("model")
    layer = tc.Linear(5, 3, stream)
    data = SeedStreams(seed)("data").normal((16, 5))
    labels = np.arange(16) % 3
    opt = tc.SGD(layer.parameters())
    for _ in range(steps):
        with tc.Tape() as tape:
            tape.backward(tc.cross_entropy_loss(layer(data), labels))
        opt.step()
    return [p.value.copy() for p in layer.parameters()]


def test_training_is_bitwise_deterministic():
    a, b = _train_steps(7), _train_steps(7)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    c = _train_steps(8)
    assert not np.array_equal(a[0], c[0])


def test_linear_init_bounds():
    layer = tc.Linear(16, 4, SeedStreams(0)("init"))
    assert np.all(np.abs(layer.weight.value) <= 0.25)
    assert layer.bias.shape == (1, 4)


def test_checkpoint_roundtrip(tmp_path):
    mats = {"P_dis.0": np.arange(6.0).reshape(2, 3), "P_dis.0.bias": np.array([[1.5, -2.0]]),
            "ünï": np.zeros((0, 4))}
    path = tmp_path / "ck.bin"
    checkpoint.save(path, mats)
    back = checkpoint.load(path)
    assert list(back) == list(mats)
    for k in mats:
        assert back[k].shape == mats[k].shape and np.array_equal(back[k], mats[k])
    blob = path.read_bytes()
    assert blob[:7] == b"GMFCKPT" and blob[7] == 1
    assert int.from_bytes(blob[8:12], "little") == 3


def test_checkpoint_rejects_bad_magic():
    with pytest.raises(ContractError):
        checkpoint.loads(b"NOTACKPT")


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=12))
def test_mse_is_nonnegative_and_symmetric(values):
    a = np.array([values])
    b = a[:, ::-1]
    ab = tc.mse_loss(a, b).value[0, 0]
    assert ab >= 0
    assert ab == tc.mse_loss(b, a).value[0, 0]
