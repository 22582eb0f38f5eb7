import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apoptosis_nn.errors import ContractError
from apoptosis_nn.network import LossKind, backward, forward, loss_value
from apoptosis_nn.parallel import (
    WorkerPool,
    parallel_gradient,
    parallel_loss_and_gradient,
    reduce_gradients,
)

from helpers import random_net


def batch(B, d=10, c=3, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(B, d)), np.eye(c)[rng.integers(0, c, size=B)]


def test_single_worker_is_bit_identical():
    net = random_net([10, 8, 3], seed=1)
    x, t = batch(64)
    ref = backward(net, forward(net, x), t, LossKind.SOFTMAX_CE)
    with WorkerPool(1) as pool:
        value, got = parallel_loss_and_gradient(net, x, t, LossKind.SOFTMAX_CE, pool)
    assert value == loss_value(net, forward(net, x), t, LossKind.SOFTMAX_CE)
    assert all(a.tobytes() == b.tobytes() for a, b in zip(got, ref))


@pytest.mark.parametrize("workers", [2, 3, 4, 7])
def test_many_workers_match_full_batch(workers):
    net = random_net([10, 8, 3], seed=2)
    x, t = batch(64, seed=workers)
    ref = backward(net, forward(net, x), t, LossKind.SOFTMAX_CE)
    with WorkerPool(workers) as pool:
        got = parallel_gradient(net, x, t, LossKind.SOFTMAX_CE, pool)
    for a, b in zip(got, ref):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-10)


def test_more_workers_than_samples():
    net = random_net([10, 8, 3], seed=3)
    x, t = batch(5)
    ref = backward(net, forward(net, x), t, LossKind.MSE)
    with WorkerPool(16) as pool:
        got = parallel_gradient(net, x, t, LossKind.MSE, pool)
    for a, b in zip(got, ref):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-10)


def test_repeat_runs_are_bit_identical():
    net = random_net([10, 8, 3], seed=4)
    x, t = batch(50)
    with WorkerPool(4) as pool:
        a = parallel_gradient(net, x, t, LossKind.SOFTMAX_CE, pool)
        b = parallel_gradient(net, x, t, LossKind.SOFTMAX_CE, pool)
    assert all(p.tobytes() == q.tobytes() for p, q in zip(a, b))


def test_combination_order_is_fixed():
    # the result equals shard gradients summed by hand, worker 0 first
    net = random_net([10, 8, 3], seed=5)
    x, t = batch(10)
    spans = [(0, 4), (4, 7), (7, 10)]
    parts = [backward(net, forward(net, x[a:b]), t[a:b], LossKind.SOFTMAX_CE) for a, b in spans]
    w = [0.4, 0.3, 0.3]
    expect = [w[0] * p0 + w[1] * p1 + w[2] * p2 for p0, p1, p2 in zip(*parts)]
    with WorkerPool(3) as pool:
        got = parallel_gradient(net, x, t, LossKind.SOFTMAX_CE, pool)
    assert all(a.tobytes() == b.tobytes() for a, b in zip(got, expect))


@given(B=st.integers(1, 200), P=st.integers(1, 32))
def test_shards_partition_the_batch(B, P):
    spans = WorkerPool(P).shards(B)
    assert len(spans) == P
    assert spans[0][0] == 0 and spans[-1][1] == B
    assert all(a[1] == b[0] for a, b in zip(spans, spans[1:]))
    sizes = [b - a for a, b in spans]
    assert max(sizes) - min(sizes) <= 1


def test_reduce_examples():
    a = [np.array([[1.0, 2.0]]), np.array([[4.0]])]
    b = [np.array([[3.0, 6.0]]), np.array([[0.0]])]
    out = reduce_gradients([a, b], [0.5, 0.5])
    np.testing.assert_array_equal(out[0], [[2.0, 4.0]])
    np.testing.assert_array_equal(out[1], [[2.0]])


def test_reduce_rejects_bad_weights_and_shapes():
    a = [np.zeros((1, 2))]
    with pytest.raises(ContractError):
        reduce_gradients([a, a], [0.5, 0.6])
    with pytest.raises(ContractError):
        reduce_gradients([a, [np.zeros((2, 2))]], [0.5, 0.5])
    with pytest.raises(ContractError):
        WorkerPool(0)


@settings(max_examples=25, deadline=None)
@given(B=st.integers(1, 40), P=st.integers(1, 9), seed=st.integers(0, 1000))
def test_parallel_property(B, P, seed):
    net = random_net([4, 5, 2], activation="relu", seed=seed)
    x, t = batch(B, d=4, c=2, seed=seed)
    ref = backward(net, forward(net, x), t, LossKind.SOFTMAX_CE)
    with WorkerPool(P) as pool:
        value, got = parallel_loss_and_gradient(net, x, t, LossKind.SOFTMAX_CE, pool)
    assert value == pytest.approx(loss_value(net, forward(net, x), t, LossKind.SOFTMAX_CE), rel=1e-12)
    for a, b in zip(got, ref):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-10)
