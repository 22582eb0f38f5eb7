"""Detection and merging of redundant neurons.

Three redundancy rules are used, one per neuron type and synapse side:

* sigmoid, incoming: ``|v_i - v_j| < |v_i| / f``; the removed neuron's
  outgoing weights are added to the survivor's.
* sigmoid, outgoing: ``|w_j - a w_i| < |w_j| / f`` with ``a`` the
  least-squares scale; outgoing weights add and the incoming vectors are
  averaged with weights ``(a, 1)``.
* relu, incoming direction: the unit incoming vectors are within ``1 / f`` and
  point into the same half-space; the survivor's outgoing weights become
  ``w_i + a w_j`` with ``a = |v_j| / |v_i|``.

Incoming vectors ``v`` include the bias as a trailing coordinate.
"""

from __future__ import annotations

import enum
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ContractError
from .network import Activation, Network, param_count

ALPHA_NEG_ONE_TOL = 1e-3

# Relative slack for the Gram-matrix prefilter; survivors are re-checked exactly.
_SCREEN_SLACK = 1e-8


class MergeKind(enum.Enum):
    SIGMOID_INCOMING = "sigmoid_incoming"
    SIGMOID_OUTGOING = "sigmoid_outgoing"
    RELU_DIRECTIONAL = "relu_directional"


@dataclass(frozen=True)
class MergeCandidate:
    layer: int
    survivor: int
    removed: int
    kind: MergeKind
    alpha: float
    distance: float


@dataclass
class LayerReport:
    layer: int
    candidates: int = 0
    removed: int = 0
    params_removed: int = 0


@dataclass
class ApoptosisReport:
    iteration: int
    factor: float
    per_layer: list[LayerReport] = field(default_factory=list)
    wall_ms: float = 0.0
    params_before: int = 0
    params_after: int = 0

    @property
    def neurons_removed(self) -> int:
        return sum(r.removed for r in self.per_layer)

    @property
    def params_removed(self) -> int:
        return sum(r.params_removed for r in self.per_layer)

    def to_json(self) -> dict:
        return {
            "iter": self.iteration,
            "factor": self.factor,
            "per_layer": [asdict(r) for r in self.per_layer],
            "wall_ms": self.wall_ms,
            "params_before": self.params_before,
            "params_after": self.params_after,
        }


def _check_hidden(net: Network, l: int) -> None:
    if not 0 <= l < len(net.layers) - 1:
        raise ContractError(f"layer {l} is not a hidden layer (network has {len(net.layers)} layers)")


def _check_factor(f: float) -> None:
    if not f > 1.0:
        raise ContractError(f"apoptosis factor must be > 1, got {f}")


def _upper_pairs(mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ii, jj = np.nonzero(np.triu(mask, k=1))
    return ii, jj


def _incoming_check(v_i: np.ndarray, v_j: np.ndarray, f: float) -> float | None:
    norm_i = np.linalg.norm(v_i)
    if norm_i == 0.0:
        return None
    d = float(np.linalg.norm(v_i - v_j))
    return d if d < norm_i / f else None


def _outgoing_check(w_i: np.ndarray, w_j: np.ndarray, f: float) -> tuple[float, float] | None:
    nn_i = float(w_i @ w_i)
    norm_j = np.linalg.norm(w_j)
    if nn_i == 0.0 or norm_j == 0.0:
        return None
    alpha = float(w_j @ w_i) / nn_i
    if abs(alpha + 1.0) <= ALPHA_NEG_ONE_TOL:
        return None
    d = float(np.linalg.norm(w_j - alpha * w_i))
    return (alpha, d) if d < norm_j / f else None


def _relu_check(v_i: np.ndarray, v_j: np.ndarray, f: float) -> tuple[float, float] | None:
    norm_i = np.linalg.norm(v_i)
    norm_j = np.linalg.norm(v_j)
    if norm_i == 0.0 or norm_j == 0.0 or not float(v_i @ v_j) > 0.0:
        return None
    d = float(np.linalg.norm(v_j / norm_j - v_i / norm_i))
    return (float(norm_j / norm_i), d) if d < 1.0 / f else None


def detect_candidates(net: Network, l: int, f: float) -> list[MergeCandidate]:
    """All redundant pairs ``(i, j), i < j`` of hidden layer ``l`` at factor ``f``.

    Returns at most one candidate per pair, in ``(i, j)`` order. The pair scan
    is done with Gram matrices and every hit is confirmed with a direct
    distance computation, so recorded distances are exact (0 for duplicates).
    """
    _check_hidden(net, l)
    _check_factor(f)
    layer = net.layers[l]
    V = layer.weights
    W = net.layers[l + 1].kernel.T  # row i = outgoing vector of neuron i
    n = V.shape[0]
    if n < 2:
        return []
    v2 = np.einsum("ij,ij->i", V, V)
    G = V @ V.T
    out: list[MergeCandidate] = []

    if layer.activation == Activation.RELU:
        norms = np.sqrt(v2)
        ok = norms > 0
        safe = np.where(ok, norms, 1.0)
        cos = G / np.outer(safe, safe)
        dist2 = 2.0 - 2.0 * cos
        mask = (G > 0) & np.outer(ok, ok) & (dist2 < 1.0 / f**2 + 4 * _SCREEN_SLACK)
        for i, j in zip(*_upper_pairs(mask)):
            hit = _relu_check(V[i], V[j], f)
            if hit is not None:
                out.append(MergeCandidate(l, int(i), int(j), MergeKind.RELU_DIRECTIONAL, hit[0], hit[1]))
        return out

    # sigmoid: incoming rule first, outgoing-proportional rule for the rest
    d2 = np.maximum(v2[:, None] + v2[None, :] - 2.0 * G, 0.0)
    scale = v2[:, None] + v2[None, :]
    in_mask = (v2[:, None] > 0) & (d2 < v2[:, None] / f**2 + _SCREEN_SLACK * scale)
    incoming = {}
    for i, j in zip(*_upper_pairs(in_mask)):
        d = _incoming_check(V[i], V[j], f)
        if d is not None:
            incoming[(int(i), int(j))] = d

    w2 = np.einsum("ij,ij->i", W, W)
    H = W @ W.T
    safe_w2 = np.where(w2 > 0, w2, 1.0)
    resid2 = w2[None, :] - H**2 / safe_w2[:, None]
    alpha = H / safe_w2[:, None]
    wscale = w2[:, None] + w2[None, :]
    out_mask = (
        (w2[:, None] > 0)
        & (w2[None, :] > 0)
        & (resid2 < w2[None, :] / f**2 + _SCREEN_SLACK * wscale)
        & (np.abs(alpha + 1.0) > ALPHA_NEG_ONE_TOL * 0.5)
    )
    outgoing = {}
    for i, j in zip(*_upper_pairs(out_mask)):
        if (int(i), int(j)) in incoming:
            continue
        hit = _outgoing_check(W[i], W[j], f)
        if hit is not None:
            outgoing[(int(i), int(j))] = hit

    for pair in sorted(set(incoming) | set(outgoing)):
        i, j = pair
        if pair in incoming:
            out.append(MergeCandidate(l, i, j, MergeKind.SIGMOID_INCOMING, 1.0, incoming[pair]))
        else:
            a, d = outgoing[pair]
            out.append(MergeCandidate(l, i, j, MergeKind.SIGMOID_OUTGOING, a, d))
    return out


def pairwise_ratios(net: Network, l: int) -> dict[str, np.ndarray]:
    """Per-rule pair statistics of layer ``l`` for inspection.

    Each value is a distance divided by the rule's scale (``|v_i|``, ``|w_j|``
    or 1), so a pair is a candidate of that rule iff its ratio is below
    ``1 / f``. Computed from Gram matrices; degenerate pairs are dropped.
    """
    _check_hidden(net, l)
    V = net.layers[l].weights
    n = V.shape[0]
    iu = np.triu_indices(n, k=1)
    v2 = np.einsum("ij,ij->i", V, V)
    G = V @ V.T
    if net.layers[l].activation == Activation.RELU:
        norms = np.sqrt(v2)
        ok = np.outer(norms > 0, norms > 0) & (G > 0)
        safe = np.where(norms > 0, norms, 1.0)
        dist = np.sqrt(np.maximum(2.0 - 2.0 * G / np.outer(safe, safe), 0.0))
        return {MergeKind.RELU_DIRECTIONAL.value: dist[iu][ok[iu]]}
    d = np.sqrt(np.maximum(v2[:, None] + v2[None, :] - 2.0 * G, 0.0))
    ok_in = np.broadcast_to(v2[:, None] > 0, d.shape)
    incoming = (d / np.sqrt(np.where(v2 > 0, v2, 1.0))[:, None])[iu][ok_in[iu]]
    W = net.layers[l + 1].kernel.T
    w2 = np.einsum("ij,ij->i", W, W)
    H = W @ W.T
    safe = np.where(w2 > 0, w2, 1.0)
    resid = np.sqrt(np.maximum(w2[None, :] - H**2 / safe[:, None], 0.0))
    ok_out = np.outer(w2 > 0, w2 > 0) & (np.abs(H / safe[:, None] + 1.0) > ALPHA_NEG_ONE_TOL)
    outgoing = (resid / np.sqrt(safe)[None, :])[iu][ok_out[iu]]
    return {MergeKind.SIGMOID_INCOMING.value: incoming, MergeKind.SIGMOID_OUTGOING.value: outgoing}


def _merge_in_place(V: np.ndarray, W_next: np.ndarray, c: MergeCandidate) -> None:
    # V: rows are incoming vectors of layer l; W_next: weights of layer l+1
    i, j = c.survivor, c.removed
    if c.kind == MergeKind.SIGMOID_INCOMING:
        W_next[:, i] += W_next[:, j]
    elif c.kind == MergeKind.SIGMOID_OUTGOING:
        W_next[:, i] += W_next[:, j]
        V[i] = (c.alpha * V[j] + V[i]) / (c.alpha + 1.0)
    else:
        W_next[:, i] += c.alpha * W_next[:, j]


def _drop(net: Network, l: int, V: np.ndarray, W_next: np.ndarray, removed: list[int]) -> None:
    keep = np.setdiff1d(np.arange(V.shape[0]), removed)
    net.layers[l].weights = np.ascontiguousarray(V[keep])
    cols = np.append(keep, V.shape[0])  # keep the bias column
    net.layers[l + 1].weights = np.ascontiguousarray(W_next[:, cols])


def merge_pair(net: Network, c: MergeCandidate) -> Network:
    """Return a copy of ``net`` with ``c.removed`` merged into ``c.survivor``."""
    _check_hidden(net, c.layer)
    n = net.layers[c.layer].n_out
    if not (0 <= c.survivor < n and 0 <= c.removed < n) or c.survivor == c.removed:
        raise ContractError(f"candidate indices ({c.survivor}, {c.removed}) invalid for layer {c.layer} with {n} neurons")
    expected = Activation.RELU if c.kind == MergeKind.RELU_DIRECTIONAL else Activation.SIGMOID
    if net.layers[c.layer].activation != expected:
        raise ContractError(f"{c.kind.value} merge on a {net.layers[c.layer].activation.name.lower()} layer")
    out = net.copy()
    V = out.layers[c.layer].weights
    W_next = out.layers[c.layer + 1].weights
    _merge_in_place(V, W_next, c)
    _drop(out, c.layer, V, W_next, [c.removed])
    return out


def _recheck(V: np.ndarray, W_next: np.ndarray, c: MergeCandidate, f: float) -> MergeCandidate | None:
    i, j = c.survivor, c.removed
    if c.kind == MergeKind.SIGMOID_INCOMING:
        d = _incoming_check(V[i], V[j], f)
        return None if d is None else MergeCandidate(c.layer, i, j, c.kind, 1.0, d)
    if c.kind == MergeKind.SIGMOID_OUTGOING:
        hit = _outgoing_check(W_next[:, i], W_next[:, j], f)
    else:
        hit = _relu_check(V[i], V[j], f)
    return None if hit is None else MergeCandidate(c.layer, i, j, c.kind, hit[0], hit[1])


def apply_apoptosis(net: Network, f: float, iteration: int = 0) -> tuple[Network, ApoptosisReport]:
    """One apoptosis event over every hidden layer, first to last.

    Candidates are merged greedily in ascending distance (ties: lower
    survivor, then lower removed index). Each candidate is re-checked against
    the current weights before merging since earlier merges in the same
    event may have moved its vectors. Both neurons of an outgoing merge take
    no further part in the event: the averaged incoming vector is a pairwise
    formula, and compounding it can blow up ``v`` when ``alpha`` is near -1.
    """
    _check_factor(f)
    t0 = time.perf_counter()
    out = net.copy()
    report = ApoptosisReport(iteration=iteration, factor=float(f), params_before=param_count(net))
    for l in out.hidden_layers:
        before = param_count(out)
        cands = detect_candidates(out, l, f)
        lr = LayerReport(layer=l, candidates=len(cands))
        if cands:
            V = out.layers[l].weights.copy()
            W_next = out.layers[l + 1].weights.copy()
            alive = np.ones(V.shape[0], dtype=bool)
            frozen = np.zeros(V.shape[0], dtype=bool)
            removed: list[int] = []
            for c in sorted(cands, key=lambda c: (c.distance, c.survivor, c.removed)):
                if not (alive[c.survivor] and alive[c.removed]) or frozen[c.survivor] or frozen[c.removed]:
                    continue
                fresh = _recheck(V, W_next, c, f)
                if fresh is None:
                    continue
                _merge_in_place(V, W_next, fresh)
                alive[fresh.removed] = False
                removed.append(fresh.removed)
                if fresh.kind == MergeKind.SIGMOID_OUTGOING:
                    frozen[fresh.survivor] = True
            if removed:
                _drop(out, l, V, W_next, removed)
            lr.removed = len(removed)
        lr.params_removed = before - param_count(out)
        report.per_layer.append(lr)
    report.params_after = param_count(out)
    report.wall_ms = (time.perf_counter() - t0) * 1e3
    return out, report
