"""Simulated data-parallel gradient computation.

The model is shared read-only by all workers, each worker handles a
contiguous shard of the minibatch, and shard gradients are combined by a
weighted sum in worker-index order. The fixed order makes the result
independent of thread scheduling.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np

from .errors import ContractError
from .network import Gradients, LossKind, Network, backward, forward, loss_value


class WorkerPool:
    """``P`` logical replicas backed by a thread pool (numpy releases the GIL in BLAS)."""

    def __init__(self, workers: int = 1):
        if workers < 1:
            raise ContractError(f"worker count must be >= 1, got {workers}")
        self.workers = int(workers)
        self._executor: ThreadPoolExecutor | None = None

    def shards(self, batch_size: int) -> list[tuple[int, int]]:
        """Contiguous ``[start, stop)`` ranges, sizes differing by at most one."""
        base, extra = divmod(batch_size, self.workers)
        out, start = [], 0
        for p in range(self.workers):
            stop = start + base + (1 if p < extra else 0)
            out.append((start, stop))
            start = stop
        return out

    def map(self, fn, items):
        if self.workers == 1:
            return [fn(item) for item in items]
        if self._executor is None:
            self._executor = ThreadPoolExecutor(max_workers=self.workers, thread_name_prefix="replica")
        return list(self._executor.map(fn, items))

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown()
            self._executor = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def reduce_gradients(parts: Sequence[Gradients], weights: Sequence[float]) -> Gradients:
    """Weighted sum of gradient lists, accumulated left to right by index."""
    if len(parts) != len(weights) or not parts:
        raise ContractError("need one weight per gradient part")
    if abs(sum(weights) - 1.0) > 1e-12:
        raise ContractError(f"weights must sum to 1, got {sum(weights)!r}")
    shapes = [g.shape for g in parts[0]]
    for k, part in enumerate(parts):
        if [g.shape for g in part] != shapes:
            raise ContractError(f"gradient part {k} has shapes {[g.shape for g in part]}, expected {shapes}")
    acc = [weights[0] * g for g in parts[0]]
    for part, w in zip(parts[1:], weights[1:]):
        for l, g in enumerate(part):
            acc[l] = acc[l] + w * g
    return acc


def parallel_loss_and_gradient(
    net: Network, batch: np.ndarray, targets: np.ndarray, loss: "LossKind | str", pool: WorkerPool
) -> tuple[float, Gradients]:
    loss = LossKind.parse(loss)
    x = np.asarray(batch, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if t.ndim == 1:
        t = t[:, None]
    B = x.shape[0]
    if B < 1:
        raise ContractError("batch must contain at least one sample")
    shards = [(a, b) for a, b in pool.shards(B) if b > a]  # empty shards contribute zero

    def work(span):
        a, b = span
        acts = forward(net, x[a:b])
        return loss_value(net, acts, t[a:b], loss), backward(net, acts, t[a:b], loss)

    results = pool.map(work, shards)
    weights = [(b - a) / B for a, b in shards]
    if len(shards) == 1:
        weights = [1.0]
    grads = reduce_gradients([g for _, g in results], weights)
    total = 0.0
    for (value, _), w in zip(results, weights):
        total += w * value
    return total, grads


def parallel_gradient(
    net: Network, batch: np.ndarray, targets: np.ndarray, loss: "LossKind | str", pool: WorkerPool
) -> Gradients:
    return parallel_loss_and_gradient(net, batch, targets, loss, pool)[1]
