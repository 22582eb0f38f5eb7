import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apoptosis_nn.data import Dataset, gen_planted_teacher
from apoptosis_nn.errors import ContractError, DivergedError
from apoptosis_nn.network import Activation, Layer, Network, init_network, serialize
from apoptosis_nn.schedule import ApoptosisConfig, Fixed, HalfLife, QuarterLife
from apoptosis_nn.trainer import (
    SolverConfig,
    auc,
    evaluate_accuracy,
    evaluate_auc,
    lr_at,
    pretrain_autoencoders,
    reconstruction_mse,
    train,
)

from helpers import brute_force_auc

XOR = Dataset(np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]), np.array([0, 1, 1, 0]), 2)


def test_xor_is_learned():
    net = init_network([2, 8, 2], "sigmoid", seed=0)
    out, records, reports = train(net, XOR, XOR, SolverConfig(5000, batch_size=4, lr=0.5, seed=0))
    assert evaluate_accuracy(out, XOR) == 1.0
    assert records[-1].kind == "final" and records[-1].iteration == 5000
    assert reports == []


def test_training_is_deterministic():
    net = init_network([2, 8, 2], "sigmoid", seed=1)
    solver = SolverConfig(300, batch_size=2, lr=0.3, seed=7)
    a, ra, _ = train(net, XOR, XOR, solver)
    b, rb, _ = train(net, XOR, XOR, solver, workers=2)
    assert serialize(a) == serialize(train(net, XOR, XOR, solver)[0])
    # the worker count changes the summation order only
    for la, lb in zip(a.layers, b.layers):
        np.testing.assert_allclose(la.weights, lb.weights, atol=1e-9)
    assert [r.train_loss for r in ra] == [r.train_loss for r in train(net, XOR, XOR, solver)[1]]


def test_train_does_not_mutate_input():
    net = init_network([2, 4, 2], seed=0)
    before = serialize(net)
    train(net, XOR, None, SolverConfig(10, batch_size=4))
    assert serialize(net) == before


def test_divergence_is_reported():
    net = Network([Layer(np.full((3, 3), 1e300), Activation.RELU), Layer(np.full((2, 4), 1e300), Activation.LINEAR)])
    with pytest.raises(DivergedError) as exc:
        train(net, XOR, None, SolverConfig(5, batch_size=4))
    assert exc.value.iteration == 0


def test_records_and_events():
    teacher, ds = gen_planted_teacher(4, 12, 3, "sigmoid", samples=256, seed=3)
    net = init_network([4, 12, 2], seed=0)
    seen = []
    out, records, reports = train(
        net, ds, ds, SolverConfig(100, batch_size=32, lr=0.1),
        apop=ApoptosisConfig(HalfLife(), Fixed(20)),
        on_before_event=lambda it, n: seen.append((it, n.sizes)),
    )
    assert [r.iteration for r in reports] == [50, 70, 90]
    assert [it for it, _ in seen] == [50, 70, 90]
    kinds = [r.kind for r in records]
    assert kinds.count("apoptosis") == 3 and kinds[-1] == "final"
    assert [r.iteration for r in records if r.kind == "epoch"] == [8, 16, 24, 32, 40, 48, 56, 64, 72, 80, 88, 96]
    assert all(a.wall_ms <= b.wall_ms for a, b in zip(records, records[1:]))
    assert records[-1].param_count == sum(l.weights.size for l in out.layers)
    assert records[-1].apoptosis_events == 3
    for a, b in zip(reports, reports[1:]):
        assert b.params_before == a.params_after


def test_momentum_buffers_follow_the_shrunken_net():
    # two duplicate hidden neurons merge at the first event and training continues
    V = np.array([[1.0, -1.0, 0.0], [1.0, -1.0, 0.0], [0.5, 2.0, 0.1]])
    W = np.array([[1.0, 0.5, -1.0, 0.0], [-1.0, 0.5, 1.0, 0.0]])
    net = Network([Layer(V, Activation.SIGMOID), Layer(W, Activation.LINEAR)])
    out, _, reports = train(net, XOR, XOR, SolverConfig(8, batch_size=4, lr=1e-3),
                            apop=ApoptosisConfig(QuarterLife(), Fixed(100)))
    assert [r.iteration for r in reports] == [2]
    assert reports[0].neurons_removed == 1
    assert out.sizes == [2, 2, 2]


def test_apoptosis_keeps_teacher_accuracy():
    # 32-d inputs into 64 hidden neurons, a quarter of them planted duplicates
    teacher, ds = gen_planted_teacher(32, 64, 16, "sigmoid", samples=5000, seed=11, classes=10)
    train_set, test_set = ds.subset(4000), Dataset(ds.features[4000:], ds.labels[4000:], 10)
    net = init_network([32, 64, 10], seed=0)
    solver = SolverConfig(3000, batch_size=32, lr=0.1, seed=0)
    base, _, _ = train(net, train_set, test_set, solver)
    pruned, _, reports = train(net, train_set, test_set, solver, apop=ApoptosisConfig.preset("normal"))
    assert pruned.sizes[1] < 64
    assert evaluate_accuracy(pruned, test_set) >= evaluate_accuracy(base, test_set) - 0.005


def test_lr_decay():
    s = SolverConfig(10, lr=0.1, gamma=0.999964)
    assert lr_at(60000, s) == pytest.approx(0.1 * math.exp(60000 * math.log(0.999964)), rel=1e-12)
    assert lr_at(60000, s) == pytest.approx(0.0115321, abs=1e-7)
    assert lr_at(60000, s) == pytest.approx(0.01154, rel=1e-3)
    assert lr_at(123, SolverConfig(10, lr=0.2)) == 0.2


@pytest.mark.parametrize("field, value", [("iterations", 0), ("lr", 0.0), ("momentum", 1.0), ("gamma", 1.5), ("batch_size", 0)])
def test_solver_validation(field, value):
    kw = {"iterations": 5, field: value}
    with pytest.raises(ContractError):
        SolverConfig(**kw)


@pytest.mark.parametrize(
    "scores, labels, expected",
    [
        ([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1], 0.75),
        ([1, 2, 3, 4], [0, 0, 1, 1], 1.0),
        ([4, 3, 2, 1], [0, 0, 1, 1], 0.0),
        ([0.5, 0.5, 0.5, 0.5], [0, 1, 0, 1], 0.5),
    ],
)
def test_auc_examples(scores, labels, expected):
    assert auc(scores, labels) == expected


@settings(max_examples=60, deadline=None)
@given(data=st.lists(st.tuples(st.integers(-5, 5), st.integers(0, 1)), min_size=2, max_size=60))
def test_auc_matches_pair_counting(data):
    scores, labels = zip(*data)
    if len(set(labels)) < 2:
        with pytest.raises(ContractError):
            auc(scores, labels)
        return
    assert auc(scores, labels) == pytest.approx(brute_force_auc(scores, labels), abs=1e-12)


def test_evaluate_accuracy_examples():
    # output = (x, -x): argmax picks class 0 for positive x
    net = Network([Layer(np.array([[1.0, 0.0], [-1.0, 0.0]]), Activation.LINEAR)])
    ds = Dataset(np.array([[1.0], [-2.0], [3.0], [-0.5]]), np.array([0, 1, 1, 1]), 2)
    assert evaluate_accuracy(net, ds) == 0.75
    assert evaluate_auc(net, ds) == pytest.approx(brute_force_auc([-1, 2, -3, 0.5], [0, 1, 1, 1]))


def test_single_output_thresholds():
    ds = Dataset(np.array([[1.0], [-1.0]]), np.array([1, 0]), 2)
    lin = Network([Layer(np.array([[1.0, 0.0]]), Activation.LINEAR)])
    assert evaluate_accuracy(lin, ds) == 1.0
    sig = Network([Layer(np.array([[1.0, 0.0]]), Activation.SIGMOID)])
    assert evaluate_accuracy(sig, ds) == 1.0


def test_auc_only_for_two_classes():
    net = init_network([2, 3, 3], seed=0)
    ds = Dataset(np.zeros((3, 2)), np.array([0, 1, 2]), 3)
    assert evaluate_auc(net, ds) is None


def test_pretraining_reduces_reconstruction_error():
    rng = np.random.default_rng(0)
    basis = rng.normal(size=(3, 12))
    x = np.tanh(rng.normal(size=(800, 3)) @ basis)
    history = []
    net = pretrain_autoencoders([12, 6, 4, 2], "sigmoid", x, epochs=5, seed=0, history=history)
    assert len(history) == 2
    assert all(after < before for before, after in history)
    assert net.sizes == [12, 6, 4, 2]


def test_pretraining_zero_epochs_is_plain_init():
    x = np.zeros((10, 3))
    assert pretrain_autoencoders([3, 4, 2], "relu", x, epochs=0, seed=4).equals(init_network([3, 4, 2], "relu", seed=4))


def test_reconstruction_mse_example():
    enc = Layer(np.zeros((1, 3)), Activation.SIGMOID)  # hidden = 0.5
    dec = Layer(np.array([[2.0, 0.0], [0.0, 1.0]]), Activation.LINEAR)  # outputs (1, 1)
    x = np.array([[1.0, 2.0], [0.0, 1.0]])
    # squared errors per sample: 0+1 and 1+0
    assert reconstruction_mse(enc, dec, x) == 1.0
