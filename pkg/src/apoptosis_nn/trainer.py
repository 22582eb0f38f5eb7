"""Minibatch SGD with interleaved apoptosis events, layerwise autoencoder
pretraining, and evaluation metrics."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .apoptosis import ApoptosisReport, apply_apoptosis
from .data import Dataset
from .errors import ContractError, DivergedError, ShapeError
from .network import Activation, Layer, LossKind, Network, forward, init_network, loss_value, param_count, predict
from .parallel import WorkerPool, parallel_loss_and_gradient
from .schedule import ApoptosisConfig, factor_at, schedule_events

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    iterations: int
    batch_size: int = 64
    lr: float = 0.1
    gamma: float | None = None  # per-iteration exponential decay; None = constant
    momentum: float = 0.9
    loss: LossKind = LossKind.SOFTMAX_CE
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "loss", LossKind.parse(self.loss))
        if self.iterations < 1:
            raise ContractError(f"iterations must be >= 1, got {self.iterations}")
        if self.batch_size < 1:
            raise ContractError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.lr > 0:
            raise ContractError(f"lr must be > 0, got {self.lr}")
        if self.gamma is not None and not 0 < self.gamma <= 1:
            raise ContractError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not 0 <= self.momentum < 1:
            raise ContractError(f"momentum must lie in [0, 1), got {self.momentum}")


@dataclass
class MetricsRecord:
    kind: str  # "epoch", "apoptosis" or "final"
    epoch: int
    iteration: int
    train_loss: float
    test_accuracy: float | None
    test_auc: float | None
    param_count: int
    wall_ms: float
    apoptosis_events: int

    def to_json(self) -> dict:
        return asdict(self)


def lr_at(iteration: int, solver: SolverConfig) -> float:
    if solver.gamma is None:
        return solver.lr
    return solver.lr * solver.gamma**iteration


def _binary_output(net: Network) -> bool:
    return net.n_outputs == 1


def _scores(net: Network, x: np.ndarray, chunk: int = 4096) -> np.ndarray:
    return np.concatenate([predict(net, x[i : i + chunk]) for i in range(0, x.shape[0], chunk)])


def evaluate_accuracy(net: Network, dataset: Dataset) -> float:
    """Fraction of samples whose argmax output equals the label.

    Single-output nets are thresholded at 0 (linear output) or 0.5.
    """
    if dataset is None or len(dataset) == 0:
        raise ContractError("cannot evaluate on an empty dataset")
    out = _scores(net, dataset.features)
    if out.shape[1] == 1:
        thr = 0.0 if net.layers[-1].activation == Activation.LINEAR else 0.5
        pred = (out[:, 0] > thr).astype(np.int64)
    else:
        pred = np.argmax(out, axis=1)
    return float(np.mean(pred == dataset.labels))


def auc(scores, labels) -> float:
    """Mann-Whitney rank statistic; tied scores count one half."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ShapeError(f"{s.size} scores for {y.size} labels")
    if not np.all((y == 0) | (y == 1)):
        raise ContractError("labels must be 0 or 1")
    n_pos = int(np.sum(y == 1))
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ContractError("auc needs at least one positive and one negative label")
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    # average 1-based ranks over runs of equal scores
    starts = np.flatnonzero(np.r_[True, sorted_s[1:] != sorted_s[:-1]])
    ends = np.r_[starts[1:], s.size]
    avg = (starts + ends + 1) / 2.0
    ranks = np.empty(s.size)
    ranks[order] = np.repeat(avg, ends - starts)
    # U is a half-integer, so it is exact in float64 for any realistic n
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def binary_scores(net: Network, dataset: Dataset) -> np.ndarray:
    """Score of the positive class: the single output, or logit(1) - logit(0)."""
    out = _scores(net, dataset.features)
    return out[:, 0] if out.shape[1] == 1 else out[:, 1] - out[:, 0]


def evaluate_auc(net: Network, dataset: Dataset) -> float | None:
    if dataset.class_count != 2:
        return None
    if len(np.unique(dataset.labels)) < 2:
        return None
    return auc(binary_scores(net, dataset), dataset.labels)


def _epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(n)


def train(
    net: Network,
    train_set: Dataset,
    test_set: Dataset | None,
    solver: SolverConfig,
    apop: ApoptosisConfig | None = None,
    workers: int = 1,
    on_record: Callable[[MetricsRecord], None] | None = None,
    on_event: Callable[[ApoptosisReport], None] | None = None,
    on_before_event: Callable[[int, Network], None] | None = None,
) -> tuple[Network, list[MetricsRecord], list[ApoptosisReport]]:
    """Run ``solver.iterations`` SGD steps; returns the final net, metrics and event reports.

    ``wall_ms`` in the records counts training work only (gradient steps and
    apoptosis), not test-set evaluation. After every apoptosis event the
    momentum buffers are recreated, zero-filled, at the new shapes.
    ``on_before_event(iteration, net)`` sees the network just before each
    event; it must not modify it.
    """
    if train_set.width != net.n_inputs:
        raise ShapeError(f"dataset has {train_set.width} features, network expects {net.n_inputs}")
    if test_set is not None and test_set.width != net.n_inputs:
        raise ShapeError(f"test set has {test_set.width} features, network expects {net.n_inputs}")
    binary_out = _binary_output(net)
    if not binary_out and net.n_outputs != train_set.class_count:
        raise ShapeError(f"network has {net.n_outputs} outputs for {train_set.class_count} classes")
    net = net.copy()
    targets = train_set.targets(binary_output=binary_out)
    x_all = train_set.features
    T, B, N = solver.iterations, solver.batch_size, len(train_set)
    per_epoch = math.ceil(N / B)

    events: dict[int, float] = {}
    if apop is not None:
        sched = schedule_events(T, apop)
        events = {t: factor_at(k, len(sched), apop.degree) for k, t in enumerate(sched)}

    records: list[MetricsRecord] = []
    reports: list[ApoptosisReport] = []
    velocity = [np.zeros_like(layer.weights) for layer in net.layers]
    wall = 0.0
    loss_sum, loss_n = 0.0, 0

    def emit(kind: str, epoch: int, it: int) -> None:
        nonlocal loss_sum, loss_n
        rec = MetricsRecord(
            kind=kind,
            epoch=epoch,
            iteration=it,
            train_loss=loss_sum / loss_n if loss_n else float("nan"),
            test_accuracy=evaluate_accuracy(net, test_set) if test_set is not None else None,
            test_auc=evaluate_auc(net, test_set) if test_set is not None else None,
            param_count=param_count(net),
            wall_ms=wall * 1e3,
            apoptosis_events=len(reports),
        )
        loss_sum, loss_n = 0.0, 0
        records.append(rec)
        if on_record is not None:
            on_record(rec)

    it = 0
    epoch = 0
    with WorkerPool(workers) as pool:
        while it < T:
            order = _epoch_order(solver.seed, epoch, N)
            for b in range(per_epoch):
                if it >= T:
                    break
                idx = order[b * B : (b + 1) * B]
                t0 = time.perf_counter()
                loss, grads = parallel_loss_and_gradient(net, x_all[idx], targets[idx], solver.loss, pool)
                if not math.isfinite(loss):
                    raise DivergedError(it, loss)
                lr = lr_at(it, solver)
                for layer, v, g in zip(net.layers, velocity, grads):
                    v *= solver.momentum
                    v -= lr * g
                    layer.weights += v
                it += 1
                loss_sum += loss
                loss_n += 1
                if it in events:
                    if on_before_event is not None:
                        on_before_event(it, net)
                    net, rep = apply_apoptosis(net, events[it], iteration=it)
                    velocity = [np.zeros_like(layer.weights) for layer in net.layers]
                    reports.append(rep)
                    wall += time.perf_counter() - t0
                    log.info("apoptosis at %d (f=%.3g): %d neurons removed, params %d -> %d",
                             it, rep.factor, rep.neurons_removed, rep.params_before, rep.params_after)
                    if on_event is not None:
                        on_event(rep)
                    emit("apoptosis", epoch, it)
                else:
                    wall += time.perf_counter() - t0
            else:
                epoch += 1
                emit("final" if it >= T else "epoch", epoch, it)
                continue
            break
    if not records or records[-1].kind != "final":
        emit("final", epoch, it)
    return net, records, reports


def _sgd(net: Network, x: np.ndarray, t: np.ndarray, loss: LossKind, epochs: int,
         batch_size: int, lr: float, momentum: float, seed: int) -> None:
    velocity = [np.zeros_like(layer.weights) for layer in net.layers]
    pool = WorkerPool(1)
    n = x.shape[0]
    for epoch in range(epochs):
        order = _epoch_order(seed, epoch, n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            value, grads = parallel_loss_and_gradient(net, x[idx], t[idx], loss, pool)
            if not math.isfinite(value):
                raise DivergedError(epoch, value)
            for layer, v, g in zip(net.layers, velocity, grads):
                v *= momentum
                v -= lr * g
                layer.weights += v


def reconstruction_mse(encoder: Layer, decoder: Layer, x: np.ndarray) -> float:
    ae = Network([encoder, decoder])
    return loss_value(ae, forward(ae, x), x, LossKind.MSE)


def pretrain_autoencoders(
    sizes,
    activation: "Activation | str",
    data: "Dataset | np.ndarray",
    epochs: int,
    seed: int = 0,
    lr: float = 0.01,
    batch_size: int = 64,
    momentum: float = 0.9,
    output_activation: "Activation | str" = Activation.LINEAR,
    history: list | None = None,
) -> Network:
    """Greedy layerwise pretraining of the hidden layers of a ``sizes`` network.

    Each hidden layer is trained as the encoder of a one-hidden-layer
    autoencoder (separate linear decoder, MSE reconstruction) on the
    activations of the layers below it. The output layer keeps its random
    init. ``history`` receives ``(mse_before, mse_after)`` per hidden layer.
    """
    x = data.features if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ContractError("pretraining needs a non-empty 2-D data matrix")
    sizes = [int(s) for s in sizes]
    if len(sizes) < 3:
        raise ContractError("pretraining needs at least one hidden layer")
    if x.shape[1] != sizes[0]:
        raise ShapeError(f"data has width {x.shape[1]}, network input is {sizes[0]}")
    net = init_network(sizes, activation, output_activation, seed=seed)
    if epochs <= 0:
        return net
    act = Activation.parse(activation)
    h = x
    for l in range(len(sizes) - 2):
        enc = net.layers[l]
        dec = init_network([sizes[l + 1], sizes[l]], act, Activation.LINEAR, seed=seed + 1000 + l).layers[0]
        ae = Network([enc, dec])
        before = reconstruction_mse(enc, dec, h)
        _sgd(ae, h, h, LossKind.MSE, epochs, batch_size, lr, momentum, seed + l)
        after = reconstruction_mse(enc, dec, h)
        if history is not None:
            history.append((before, after))
        log.info("pretrained layer %d: reconstruction mse %.4g -> %.4g", l, before, after)
        h = forward(ae, h).post[0]
    return net


# -- run summaries ---------------------------------------------------------------

def summarize_run(records: list[MetricsRecord], initial_params: int) -> dict:
    """Summary record from one run's metrics.

    Per-iteration times stand in for epoch times so runs of different
    length compare directly; ``post_event_ms_per_iter`` covers only the
    iterations after the last apoptosis event.
    """
    if not records:
        raise ContractError("no metrics records to summarize")
    final = records[-1]
    T = final.iteration
    events = [r for r in records if r.kind == "apoptosis"]
    post = None
    if events and events[-1].iteration < T:
        last = events[-1]
        post = (final.wall_ms - last.wall_ms) / (T - last.iteration)
    elif not events and T > 0:
        post = final.wall_ms / T
    return {
        "kind": "summary",
        "iterations": T,
        "total_wall_ms": final.wall_ms,
        "ms_per_iter": final.wall_ms / T if T else None,
        "post_event_ms_per_iter": post,
        "initial_param_count": int(initial_params),
        "final_param_count": final.param_count,
        "reduction_ratio": initial_params / final.param_count,
        "apoptosis_events": len(events),
        "last_event_iteration": events[-1].iteration if events else None,
        "final_test_accuracy": final.test_accuracy,
        "final_test_auc": final.test_auc,
    }


def compare_to_baseline(summary: dict, baseline: dict) -> dict:
    """Whole-run and epoch speedups of ``summary`` over a baseline summary."""
    out = dict(summary)
    out["speedup_whole_run"] = baseline["total_wall_ms"] / summary["total_wall_ms"]
    post = summary.get("post_event_ms_per_iter")
    out["speedup_epoch"] = baseline["ms_per_iter"] / post if post else None
    return out
