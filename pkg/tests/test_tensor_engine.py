import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hctn.engine import tensor as T
from hctn.engine.gradcheck import check_gradients
from hctn.engine.tensor import Tensor, no_grad
from hctn.exceptions import NumericError, ShapeError


def param(rng, *shape, name='p'):
    return Tensor(rng.normal(size=shape), requires_grad=True, name=name)


def assert_gradients(build_loss, params, tol=1e-6):
    errors = check_gradients(build_loss, params)
    assert max(errors.values()) < tol, errors


def test_softmax_of_equal_scores():
    np.testing.assert_allclose(T.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])


def test_gradient_of_sum_of_squares():
    x = Tensor([1.0, 2.0], requires_grad=True)
    T.sum(T.square(x)).backward()
    np.testing.assert_allclose(x.grad, [2.0, 4.0])


def test_shared_node_is_visited_once():
    x = Tensor([3.0], requires_grad=True)
    y = x * x
    T.sum(y + y).backward()
    np.testing.assert_allclose(x.grad, [12.0])


def test_composite_graph_gradients(rng):
    x = Tensor(rng.normal(size=(4, 3)))
    w1, b1 = param(rng, 3, 5, name='w1'), param(rng, 5, name='b1')
    w2 = param(rng, 5, 2, name='w2')

    def build():
        h = T.tanh(T.dense(x, w1, b1))
        out = T.softmax(T.sigmoid(T.dense(h, w2)) * 3.0, axis=-1)
        return T.sum(T.square(out - 0.3))

    assert_gradients(build, {'w1': w1, 'b1': b1, 'w2': w2})


def test_shape_ops_gradients(rng):
    a = param(rng, 2, 3, name='a')
    b = param(rng, 2, 3, name='b')

    def build():
        joined = T.concat([a, b], axis=0)
        stacked = T.stack([a, b], axis=1)
        flipped = T.transpose(T.reshape(joined, (3, 4)))
        picked = T.take(stacked, (np.array([0, 1, 1]), 0))
        return T.sum(T.square(flipped)) + T.sum(picked * 2.0) + T.mean(T.swap_last(stacked))

    assert_gradients(build, {'a': a, 'b': b})


def test_batched_matmul_and_conv_gradients(rng):
    x = param(rng, 2, 5, 3, name='x')
    w = param(rng, 3, 3, 4, name='w')
    bias = param(rng, 4, name='bias')
    q = param(rng, 4, 2, name='q')

    def build():
        out = T.relu(T.conv1d(x, w, bias)) + 0.1
        return T.sum(T.square(T.matmul(out, q)))

    assert_gradients(build, {'x': x, 'w': w, 'bias': bias, 'q': q})


@pytest.mark.parametrize('train', [True, False])
def test_batch_norm_gradients(rng, train):
    x = param(rng, 6, 3, name='x')
    gamma = param(rng, 3, name='gamma')
    beta = param(rng, 3, name='beta')
    target = rng.normal(size=(6, 3))

    def build():
        running_mean, running_var = np.zeros(3), np.ones(3)
        out = T.batch_norm(x, gamma, beta, running_mean, running_var, train)
        return T.sum(T.square(out - target))

    assert_gradients(build, {'x': x, 'gamma': gamma, 'beta': beta})


def test_batch_norm_train_statistics_and_running_update(rng):
    x = Tensor(rng.normal(3.0, 2.0, size=(50, 2)))
    running_mean, running_var = np.zeros(2), np.ones(2)
    out = T.batch_norm(x, Tensor(np.ones(2)), Tensor(np.zeros(2)), running_mean, running_var, True)
    np.testing.assert_allclose(out.data.mean(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(out.data.var(axis=0), 1.0, atol=1e-6)
    np.testing.assert_allclose(running_mean, 0.1 * x.data.mean(axis=0))


def test_graph_matmul_sparse_matches_dense(rng):
    adjacency = np.array([[0.5, 0.0, 0.5], [0.0, 1.0, 0.0], [0.2, 0.3, 0.5]])
    x = param(rng, 3, 2, name='x')

    def build_dense():
        return T.sum(T.square(T.graph_matmul(adjacency, x)))

    def build_sparse():
        return T.sum(T.square(T.graph_matmul(sp.csr_matrix(adjacency), x)))

    np.testing.assert_allclose(build_dense().data, build_sparse().data)
    assert_gradients(build_sparse, {'x': x})


def test_matmul_shape_error_names_shapes():
    with pytest.raises(ShapeError) as info:
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    assert "(2, 3) vs (2, 3)" in str(info.value)
    assert info.value.op == "matmul"


def test_four_dimensional_values_are_rejected():
    with pytest.raises(ShapeError):
        Tensor(np.zeros((1, 1, 1, 1)))


def test_non_finite_value_raises():
    with pytest.raises(NumericError):
        T.log(Tensor([0.0]))


def test_conv1d_rejects_even_kernel():
    with pytest.raises(ShapeError):
        T.conv1d(Tensor(np.ones((1, 4, 2))), Tensor(np.ones((2, 2, 1))))


def test_dropout_identity_when_disabled(rng):
    x = Tensor(rng.normal(size=(3, 3)))
    assert T.dropout(x, 0.0, rng, train=True) is x
    assert T.dropout(x, 0.5, rng, train=False) is x


def test_no_grad_records_nothing():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with no_grad():
        y = T.square(x)
    assert not y.requires_grad
    assert y._parents == ()


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (3, 4), elements=st.floats(-50, 50)))
def test_softmax_rows_sum_to_one(values):
    out = T.softmax(Tensor(values), axis=-1).data
    np.testing.assert_allclose(out.sum(axis=-1), 1.0)
    assert np.all(out >= 0)
