import numpy as np
import pytest

from exception import EmptyGroup, LabelOutOfRange, MissingGradient, ShapeMismatch
from src.tensor import ParamStore, Tape, Tensor, grad_check, ops


def _store(seed: int = 0, **shapes) -> ParamStore:
    params = ParamStore("float64", rng=np.random.default_rng(seed))
    for name, shape in shapes.items():
        params.create(name, shape, init="zeros")
        params[name].data = np.random.default_rng(seed + len(params)).normal(size=shape)
    return params


def test_linear_forward():
    x = Tensor([[1.0, 2.0]])
    w = Tensor([[1.0, 0.0, 2.0], [0.0, 1.0, -1.0]])
    b = Tensor([0.5, 0.5, 0.5])
    np.testing.assert_allclose(ops.linear(x, w, b).data, [[1.5, 2.5, 0.5]])
    with pytest.raises(ShapeMismatch):
        ops.linear(Tensor(np.ones((1, 3))), w)


def test_linear_gradients():
    params = _store(x=(4, 3), w=(3, 2), b=(1, 2))

    def loss(p):
        out = ops.linear(p["x"], p["w"], ops.reshape(p["b"], (2,)))
        return ops.reduce_sum(ops.tanh(out))

    assert grad_check(loss, params) < 1e-6


def test_softmax_rows():
    out = ops.softmax_rows(Tensor([[1.0], [1.0]]))
    np.testing.assert_allclose(out.data, [[0.5], [0.5]])
    grouped = ops.softmax_rows(Tensor([[0.0], [np.log(3.0)], [5.0]]), np.array([0, 0, 1]), 2)
    np.testing.assert_allclose(grouped.data, [[0.25], [0.75], [1.0]])


def test_softmax_rows_large_values_are_stable():
    out = ops.softmax_rows(Tensor([[1000.0, -1000.0], [1001.0, -1000.0]]))
    assert np.all(np.isfinite(out.data))
    np.testing.assert_allclose(out.data.sum(axis=0), [1.0, 1.0])


def test_softmax_rows_empty_group():
    with pytest.raises(EmptyGroup):
        ops.softmax_rows(Tensor([[1.0], [2.0]]), np.array([0, 2]), 3)


def test_grad_check_on_a_square():
    params = _store(x=(3, 1))
    assert grad_check(lambda p: ops.reduce_sum(ops.mul(p["x"], p["x"])), params) < 1e-6
    assert grad_check(lambda p: 3.0, params) == 0.0


@pytest.mark.parametrize("activation", ["gelu", "tanh", "sigmoid"])
def test_activation_gradients(activation):
    params = _store(x=(3, 4))
    fn = getattr(ops, activation)
    assert grad_check(lambda p: ops.reduce_sum(ops.mul(fn(p["x"]), p["x"])), params) < 1e-6


def test_relu_gradient_away_from_zero():
    params = _store(x=(2, 3))
    params["x"].data = np.array([[0.5, -0.5, 1.0], [-2.0, 3.0, 0.25]])
    assert grad_check(lambda p: ops.reduce_sum(ops.mul(ops.relu(p["x"]), p["x"])), params) < 1e-6


def test_grouped_softmax_gradient():
    params = _store(x=(5, 2), y=(5, 2))
    groups = np.array([1, 0, 1, 1, 0])

    def loss(p):
        return ops.reduce_sum(ops.mul(ops.softmax_rows(p["x"], groups, 2), p["y"]))

    assert grad_check(loss, params) < 1e-6


def test_gather_and_segment_sum_gradients():
    params = _store(x=(3, 2), y=(4, 2))
    index = np.array([0, 2, 2, 1])

    def loss(p):
        gathered = ops.mul(ops.gather_rows(p["x"], index), p["y"])
        pooled = ops.segment_sum(gathered, np.array([1, 0, 1, 1]), 2)
        return ops.reduce_sum(ops.tanh(pooled))

    assert grad_check(loss, params) < 1e-6


def test_batched_matmul_and_bilinear_gradients():
    params = _store(x=(4, 2, 3), w=(2, 3, 3), p=(4, 3), k=(2, 3, 5), a=(4, 5))

    def loss(p):
        heads = ops.reduce_sum(ops.tanh(ops.batched_matmul(p["x"], p["w"])))
        slices = ops.reduce_sum(ops.tanh(ops.bilinear_slices(p["p"], p["k"], p["a"])))
        return ops.add(heads, slices)

    assert grad_check(loss, params) < 1e-6


def test_concat_layer_norm_and_axis_sum_gradients():
    params = _store(x=(2, 3), y=(1, 3), z=(3, 4))

    def loss(p):
        stacked = ops.layer_norm(ops.concat([p["x"], p["y"]], axis=0))
        return ops.reduce_sum(ops.mul(ops.reduce_sum(ops.matmul(stacked, p["z"]), axis=1), 0.5))

    assert grad_check(loss, params) < 1e-6


def test_cross_entropy():
    uniform = ops.cross_entropy(Tensor(np.zeros((2, 4))), np.array([0, 3]))
    assert uniform.item() == pytest.approx(np.log(4))
    confident = ops.cross_entropy(Tensor([[50.0, 0.0]]), np.array([0]))
    assert confident.item() == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(LabelOutOfRange):
        ops.cross_entropy(Tensor(np.zeros((1, 3))), np.array([3]))
    params = _store(z=(3, 4))
    assert grad_check(lambda p: ops.cross_entropy(p["z"], np.array([0, 2, 3])), params) < 1e-6


def test_bce_with_logits():
    half = ops.bce_with_logits(Tensor([0.0, 0.0]), np.array([1, 0]))
    assert half.item() == pytest.approx(np.log(2))
    params = _store(z=(5,))
    assert grad_check(lambda p: ops.bce_with_logits(p["z"], np.array([1, 0, 1, 1, 0])), params) < 1e-6


def test_tape_is_cleared_after_backward():
    params = _store(x=(2, 2))
    with Tape() as tape:
        loss = ops.reduce_sum(ops.mul(params["x"], 2.0))
        assert len(tape) == 2
        tape.backward(loss)
        assert len(tape) == 0
    np.testing.assert_allclose(params["x"].grad, np.full((2, 2), 2.0))
    assert loss.grad is None


def test_backward_needs_a_scalar():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with Tape() as tape, pytest.raises(MissingGradient):
        tape.backward(ops.mul(x, 2.0))


def test_no_tape_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    out = ops.mul(x, 2.0)
    assert not out.requires_grad


def test_param_store_aliasing_and_shapes():
    params = ParamStore("float64")
    w = params.create("W_msg/0", (2, 3, 3))
    assert params.create("W_msg/0", (2, 3, 3)) is w
    with pytest.raises(ShapeMismatch):
        params.create("W_msg/0", (3, 3))
    params.create("mu/0", (1,), init="ones")
    assert params.count() == 19
    assert params.count("mu") == 1


def test_param_store_checkpoint_is_bit_exact(tmp_path):
    params = ParamStore("float32", rng=np.random.default_rng(3))
    params.create("a", (3, 4))
    params.create("b", (4,), init="zeros")
    params.save(tmp_path, metadata={"epoch": 7})
    restored = ParamStore("float32", rng=np.random.default_rng(99))
    restored.create("a", (3, 4))
    restored.create("b", (4,), init="zeros")
    assert restored.load(tmp_path) == {"epoch": 7}
    for name in ("a", "b"):
        assert restored[name].data.tobytes() == params[name].data.tobytes()
        assert restored[name].dtype == np.float32


def test_param_store_load_rejects_shape_changes(tmp_path):
    params = ParamStore("float64")
    params.create("a", (2, 2))
    params.save(tmp_path)
    other = ParamStore("float64")
    other.create("a", (2, 3))
    with pytest.raises(ShapeMismatch):
        other.load(tmp_path)
