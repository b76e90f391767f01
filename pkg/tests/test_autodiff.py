import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import central_difference, rel_err
from rbamsr import autodiff as ad
from rbamsr.autodiff import Tensor, no_grad
from rbamsr.errors import ContractError, GraphStateError, ShapeError


def grad_of(fn, *arrays):
    ts = [Tensor(a, requires_grad=True) for a in arrays]
    fn(*ts).backward()
    return [t.grad for t in ts]


def test_sigmoid_of_zero_is_half():
    out = ad.sigmoid(Tensor(np.zeros((3, 4))))
    assert np.all(out.data == 0.5)


def test_relu_definition():
    assert ad.relu(Tensor([-1.0, 0.0, 2.0])).data.tolist() == [0.0, 0.0, 2.0]


def test_mul_values_and_gradient():
    a, b = np.array([2.0, 3.0]), np.array([4.0, 5.0])
    assert ad.mul(Tensor(a), Tensor(b)).data.tolist() == [8.0, 15.0]
    ga, gb = grad_of(lambda x, y: ad.mul(x, y).sum(), a, b)
    fd = central_difference(lambda x: float(np.sum(x * b)), a)
    assert rel_err(ga, fd) < 1e-9
    np.testing.assert_allclose(ga, b)
    np.testing.assert_allclose(gb, a)


@pytest.mark.parametrize("op", ["add", "sub", "mul", "relu", "sigmoid"])
def test_elementwise_dispatch(op, rng):
    a, b = rng.standard_normal(5), rng.standard_normal(5)
    out = ad.elementwise(op, Tensor(a), None if op in ("relu", "sigmoid") else Tensor(b))
    expected = {"add": a + b, "sub": a - b, "mul": a * b,
                "relu": np.maximum(a, 0), "sigmoid": 1 / (1 + np.exp(-a))}[op]
    np.testing.assert_allclose(out.data, expected, rtol=1e-12)


def test_binary_op_missing_operand():
    with pytest.raises(ContractError):
        ad.elementwise("add", Tensor([1.0]))


def test_non_broadcastable_shapes_rejected():
    with pytest.raises(ShapeError):
        ad.add(Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))


def test_broadcast_gradient_sums_over_expanded_axes(rng):
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((1, 4))
    ga, gb = grad_of(lambda x, y: ad.mul(x, y).sum(), a, b)
    np.testing.assert_allclose(gb, a.sum(axis=0, keepdims=True))
    assert gb.shape == (1, 4)


@given(st.integers(1, 4), st.integers(1, 5))
def test_broadcast_then_reduce_round_trip(extent, n):
    x = np.arange(n, dtype=float).reshape(1, n)
    expanded = ad.add(Tensor(x), Tensor(np.zeros((extent, n))))
    np.testing.assert_allclose(expanded.sum(axis=0).data, extent * x[0])


def test_matmul_identity_and_hand_example(rng):
    x = rng.standard_normal((2, 5))
    np.testing.assert_array_equal(ad.matmul(Tensor(np.eye(2)), Tensor(x)).data, x)
    out = ad.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[1.0], [1.0]]))
    assert out.data.tolist() == [[3.0], [7.0]]


def test_matmul_gradients_match_finite_differences(rng):
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 2))
    w = rng.standard_normal((3, 2))
    ga, gb = grad_of(lambda x, y: ad.mul(ad.matmul(x, y), Tensor(w)).sum(), a, b)
    assert rel_err(ga, central_difference(lambda x: float(np.sum((x @ b) * w)), a)) < 1e-6
    assert rel_err(gb, central_difference(lambda y: float(np.sum((a @ y) * w)), b)) < 1e-6


def test_matmul_inner_mismatch():
    with pytest.raises(ShapeError):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_reshape_preserves_row_major_order():
    x = np.arange(24.0).reshape(2, 3, 4)
    np.testing.assert_array_equal(ad.reshape(Tensor(x), (2, 12)).data, x.reshape(2, 12))
    with pytest.raises(ShapeError):
        ad.reshape(Tensor(x), (5, 5))


@given(st.permutations([0, 1, 2]))
def test_permute_then_inverse_is_identity(axes):
    x = np.arange(24.0).reshape(2, 3, 4)
    inv = tuple(np.argsort(axes))
    y = ad.permute(ad.permute(Tensor(x), axes), inv)
    np.testing.assert_array_equal(y.data, x)


def test_permute_gradient_matches_finite_differences(rng):
    x = rng.standard_normal((2, 3, 4))
    w = rng.standard_normal((4, 2, 3))
    (g,) = grad_of(lambda t: ad.mul(ad.permute(t, (2, 0, 1)), Tensor(w)).sum(), x)
    fd = central_difference(lambda t: float(np.sum(np.transpose(t, (2, 0, 1)) * w)), x)
    assert rel_err(g, fd) < 1e-8


def test_reshape_permute_descriptor():
    x = np.arange(12.0).reshape(3, 4)
    y = ad.reshape_permute(Tensor(x), axes=(1, 0), shape=(12,))
    np.testing.assert_array_equal(y.data, x.T.reshape(12))


def test_backward_of_sum_is_ones(rng):
    (g,) = grad_of(lambda t: t.sum(), rng.standard_normal((2, 3, 4)))
    np.testing.assert_array_equal(g, np.ones((2, 3, 4)))


def test_backward_of_square_sum_is_twice_input(rng):
    x = rng.standard_normal((3, 3))
    (g,) = grad_of(lambda t: ad.mul(t, t).sum(), x)
    np.testing.assert_allclose(g, 2 * x)


def test_diamond_graph_accumulates_both_paths(rng):
    x = rng.standard_normal(4)
    # y = x*x + sigmoid(x)  -> both branches consume x
    (g,) = grad_of(lambda t: ad.add(ad.mul(t, t), ad.sigmoid(t)).sum(), x)
    s = 1 / (1 + np.exp(-x))
    np.testing.assert_allclose(g, 2 * x + s * (1 - s), rtol=1e-12)


def test_non_scalar_loss_rejected():
    t = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError):
        ad.mul(t, t).backward()


def test_second_backward_rejected():
    t = Tensor(np.ones(3), requires_grad=True)
    loss = ad.mul(t, t).sum()
    loss.backward()
    with pytest.raises(GraphStateError):
        loss.backward()


def test_reusing_consumed_intermediate_rejected():
    t = Tensor(np.ones(3), requires_grad=True)
    mid = ad.mul(t, t)
    mid.sum().backward()
    with pytest.raises(GraphStateError):
        ad.add(mid, t).sum().backward()


def test_intermediate_grads_populated():
    t = Tensor(np.arange(3.0), requires_grad=True)
    mid = ad.mul(t, t)
    mid.sum().backward()
    assert mid.grad is not None and mid.grad.shape == mid.shape


def test_no_grad_records_nothing():
    t = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = ad.mul(t, t)
    assert not y.requires_grad


def test_zero_extent_rejected():
    with pytest.raises(ShapeError):
        Tensor(np.zeros((0, 3)))


def test_concat_gradient_splits(rng):
    a, b = rng.standard_normal((2, 3)), rng.standard_normal((1, 3))
    w = rng.standard_normal((3, 3))
    ga, gb = grad_of(lambda x, y: ad.mul(ad.concat([x, y], axis=0), Tensor(w)).sum(), a, b)
    np.testing.assert_array_equal(ga, w[:2])
    np.testing.assert_array_equal(gb, w[2:])


UNARY = {
    "relu": (ad.relu, lambda x: np.maximum(x, 0)),
    "sigmoid": (ad.sigmoid, lambda x: 1 / (1 + np.exp(-x))),
    "abs": (ad.abs_, np.abs),
    "mean": (lambda t: ad.mean(t, axis=1, keepdims=True), lambda x: x.mean(axis=1, keepdims=True)),
}


@pytest.mark.parametrize("name", sorted(UNARY))
@pytest.mark.parametrize("seed", range(5))
def test_unary_ops_match_finite_differences(name, seed):
    rng = np.random.default_rng(seed)
    op, ref = UNARY[name]
    x = rng.standard_normal((3, 4))
    x[np.abs(x) < 1e-3] = 0.5  # stay off kinks
    w = rng.standard_normal(ref(x).shape)
    (g,) = grad_of(lambda t: ad.mul(op(t), Tensor(w)).sum(), x)
    fd = central_difference(lambda z: float(np.sum(ref(z) * w)), x)
    assert rel_err(g, fd) < 1e-5


def test_deterministic_outputs_and_gradients(rng):
    x = rng.standard_normal((4, 4))

    def run():
        t = Tensor(x, requires_grad=True)
        out = ad.sigmoid(ad.matmul(t, t))
        out.sum().backward()
        return out.data.copy(), t.grad.copy()

    (o1, g1), (o2, g2) = run(), run()
    assert o1.tobytes() == o2.tobytes() and g1.tobytes() == g2.tobytes()
