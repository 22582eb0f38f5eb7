"""Dense feedforward networks: forward/backward passes, parameter accounting
and the binary model file format.

Every layer stores a single ``out x (in + 1)`` matrix whose last column is the
bias, so row ``i`` is the full incoming vector of neuron ``i`` and column ``i``
of the following layer (bias column excluded) is its outgoing vector.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ContractError, FormatError, ShapeError

Gradients = list  # list[np.ndarray], one per layer, same shapes as the weights


class Activation(enum.IntEnum):
    SIGMOID = 0
    RELU = 1
    LINEAR = 2

    @classmethod
    def parse(cls, name: "str | Activation") -> "Activation":
        if isinstance(name, Activation):
            return name
        try:
            return cls[str(name).strip().upper()]
        except KeyError:
            raise ValueError(f"unknown activation {name!r}") from None


class LossKind(enum.Enum):
    SOFTMAX_CE = "softmax_ce"
    SIGMOID_BCE = "sigmoid_bce"
    MSE = "mse"

    @classmethod
    def parse(cls, name: "str | LossKind") -> "LossKind":
        if isinstance(name, LossKind):
            return name
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            raise ValueError(f"unknown loss {name!r}") from None


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # exp(-|z|) never overflows; pick the branch by sign.
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def activate(kind: Activation, z):
    """Apply an activation to a scalar or an array."""
    if kind == Activation.SIGMOID:
        out = _sigmoid(np.asarray(z, dtype=np.float64))
    elif kind == Activation.RELU:
        out = np.maximum(np.asarray(z, dtype=np.float64), 0.0)
    else:
        out = np.asarray(z, dtype=np.float64)
    return float(out) if np.ndim(out) == 0 else out


def _activation_grad(kind: Activation, pre: np.ndarray, post: np.ndarray) -> np.ndarray:
    if kind == Activation.SIGMOID:
        return post * (1.0 - post)
    if kind == Activation.RELU:
        # derivative at exactly 0 is taken to be 0
        return (pre > 0.0).astype(np.float64)
    return np.ones_like(pre)


@dataclass
class Layer:
    weights: np.ndarray
    activation: Activation

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.activation = Activation(self.activation)
        if self.weights.ndim != 2 or self.weights.shape[0] < 1 or self.weights.shape[1] < 2:
            raise ShapeError(f"layer weights must be out x (in+1) with out, in >= 1, got {self.weights.shape}")
        if not np.all(np.isfinite(self.weights)):
            raise ContractError("layer weights contain non-finite entries")

    @property
    def n_in(self) -> int:
        return self.weights.shape[1] - 1

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]

    @property
    def kernel(self) -> np.ndarray:
        return self.weights[:, :-1]

    @property
    def bias(self) -> np.ndarray:
        return self.weights[:, -1]


@dataclass
class Network:
    layers: list[Layer]

    def __post_init__(self):
        self.layers = list(self.layers)
        if not self.layers:
            raise ContractError("a network needs at least one layer")
        for l, (a, b) in enumerate(zip(self.layers, self.layers[1:])):
            if a.n_out != b.n_in:
                raise ShapeError(f"layer {l} has {a.n_out} outputs but layer {l + 1} has {b.n_in} inputs")
        for l, layer in enumerate(self.layers[:-1]):
            if layer.activation == Activation.LINEAR:
                raise ContractError(f"hidden layer {l} must be sigmoid or relu")

    @property
    def sizes(self) -> list[int]:
        return [self.layers[0].n_in] + [layer.n_out for layer in self.layers]

    @property
    def n_inputs(self) -> int:
        return self.layers[0].n_in

    @property
    def n_outputs(self) -> int:
        return self.layers[-1].n_out

    @property
    def hidden_layers(self) -> range:
        return range(len(self.layers) - 1)

    def copy(self) -> "Network":
        return Network([Layer(layer.weights.copy(), layer.activation) for layer in self.layers])

    def equals(self, other: "Network") -> bool:
        """Bit-for-bit equality of structure and weights."""
        if len(self.layers) != len(other.layers):
            return False
        for a, b in zip(self.layers, other.layers):
            if a.activation != b.activation or a.weights.shape != b.weights.shape:
                return False
            if a.weights.tobytes() != b.weights.tobytes():
                return False
        return True


def init_network(
    sizes: Sequence[int],
    activation: "Activation | str" = Activation.SIGMOID,
    output_activation: "Activation | str" = Activation.LINEAR,
    seed: int = 0,
) -> Network:
    """Uniform scaled init: entries in [-r, r] with r = sqrt(6 / (in + out)), zero biases."""
    sizes = [int(s) for s in sizes]
    if len(sizes) < 2 or min(sizes) < 1:
        raise ContractError(f"invalid layer sizes {sizes}")
    hidden = Activation.parse(activation)
    out_act = Activation.parse(output_activation)
    rng = np.random.default_rng(seed)
    layers = []
    for l, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        r = np.sqrt(6.0 / (n_in + n_out))
        w = np.zeros((n_out, n_in + 1))
        w[:, :-1] = rng.uniform(-r, r, size=(n_out, n_in))
        act = out_act if l == len(sizes) - 2 else hidden
        layers.append(Layer(w, act))
    return Network(layers)


def param_count(net: Network) -> int:
    return sum(layer.weights.size for layer in net.layers)


@dataclass
class BatchActivations:
    """Cached pre/post activations of one forward pass."""

    inputs: np.ndarray
    pre: list[np.ndarray] = field(default_factory=list)
    post: list[np.ndarray] = field(default_factory=list)

    @property
    def output(self) -> np.ndarray:
        return self.post[-1]

    @property
    def batch_size(self) -> int:
        return self.inputs.shape[0]


def forward(net: Network, batch: np.ndarray) -> BatchActivations:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.n_inputs:
        raise ShapeError(f"batch has shape {x.shape}, network expects width {net.n_inputs}")
    acts = BatchActivations(inputs=x)
    a = x
    for layer in net.layers:
        z = a @ layer.kernel.T + layer.bias
        a = activate(layer.activation, z)
        acts.pre.append(z)
        acts.post.append(np.asarray(a))
    return acts


def predict(net: Network, batch: np.ndarray) -> np.ndarray:
    return forward(net, batch).output


def _check_targets(net: Network, acts: BatchActivations, targets: np.ndarray) -> np.ndarray:
    t = np.asarray(targets, dtype=np.float64)
    if t.ndim == 1:
        t = t[:, None]
    if t.shape != acts.output.shape:
        raise ShapeError(f"targets have shape {t.shape}, output has shape {acts.output.shape}")
    return t


def _check_logit_loss(net: Network, loss: LossKind) -> None:
    if loss != LossKind.MSE and net.layers[-1].activation != Activation.LINEAR:
        raise ContractError(f"{loss.value} expects a linear output layer (logits)")


def loss_value(net: Network, acts: BatchActivations, targets: np.ndarray, loss: "LossKind | str") -> float:
    """Mean over the batch of the per-sample loss (summed over outputs)."""
    loss = LossKind.parse(loss)
    _check_logit_loss(net, loss)
    t = _check_targets(net, acts, targets)
    B = acts.batch_size
    if B == 0:
        return 0.0
    if loss == LossKind.MSE:
        return float(np.sum((acts.output - t) ** 2) / B)
    z = acts.pre[-1]
    if loss == LossKind.SIGMOID_BCE:
        # softplus(z) - t*z
        return float(np.sum(np.logaddexp(0.0, z) - t * z) / B)
    zmax = z.max(axis=1, keepdims=True)
    logsumexp = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    return float(np.sum(logsumexp - np.sum(t * z, axis=1)) / B)


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def output_delta(net: Network, acts: BatchActivations, t: np.ndarray, loss: LossKind) -> np.ndarray:
    B = acts.batch_size
    if loss == LossKind.SOFTMAX_CE:
        return (_softmax(acts.pre[-1]) - t) / B
    if loss == LossKind.SIGMOID_BCE:
        return (_sigmoid(acts.pre[-1]) - t) / B
    last = net.layers[-1]
    return 2.0 * (acts.output - t) * _activation_grad(last.activation, acts.pre[-1], acts.output) / B


def backward(net: Network, acts: BatchActivations, targets: np.ndarray, loss: "LossKind | str") -> Gradients:
    """Gradients of the batch-mean loss w.r.t. every layer's weight matrix."""
    loss = LossKind.parse(loss)
    _check_logit_loss(net, loss)
    if len(acts.pre) != len(net.layers):
        raise ShapeError("activations were not produced by this network")
    t = _check_targets(net, acts, targets)
    grads: list[np.ndarray] = [np.empty(0)] * len(net.layers)
    delta = output_delta(net, acts, t, loss)
    for l in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[l]
        a_prev = acts.inputs if l == 0 else acts.post[l - 1]
        g = np.empty_like(layer.weights)
        g[:, :-1] = delta.T @ a_prev
        g[:, -1] = delta.sum(axis=0)
        grads[l] = g
        if l > 0:
            prev = net.layers[l - 1]
            delta = (delta @ layer.kernel) * _activation_grad(prev.activation, acts.pre[l - 1], acts.post[l - 1])
    return grads


# -- model file ---------------------------------------------------------------

MAGIC = b"APNW"
VERSION = 1
_HEADER = struct.Struct("<4sBI")
_LAYER = struct.Struct("<IIB")


def serialize(net: Network) -> bytes:
    parts = [_HEADER.pack(MAGIC, VERSION, len(net.layers))]
    for layer in net.layers:
        parts.append(_LAYER.pack(layer.n_in, layer.n_out, int(layer.activation)))
        parts.append(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
    return b"".join(parts)


def deserialize(data: bytes) -> Network:
    data = bytes(data)
    if len(data) < _HEADER.size:
        raise FormatError("truncated header", offset=len(data))
    magic, version, n_layers = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    if n_layers < 1:
        raise FormatError("model has no layers", offset=5)
    pos = _HEADER.size
    layers = []
    prev_out = None
    for l in range(n_layers):
        if pos + _LAYER.size > len(data):
            raise FormatError(f"truncated header of layer {l}", offset=pos)
        n_in, n_out, code = _LAYER.unpack_from(data, pos)
        if n_in < 1 or n_out < 1:
            raise FormatError(f"layer {l} has invalid dims in={n_in} out={n_out}", offset=pos)
        if prev_out is not None and prev_out != n_in:
            raise FormatError(f"layer {l - 1} out={prev_out} does not match layer {l} in={n_in}", offset=pos)
        if code not in (0, 1, 2):
            raise FormatError(f"layer {l} has unknown activation code {code}", offset=pos + 8)
        pos += _LAYER.size
        nbytes = 8 * n_out * (n_in + 1)
        if pos + nbytes > len(data):
            raise FormatError(f"truncated weights of layer {l}: need {nbytes} bytes, have {len(data) - pos}", offset=pos)
        w = np.frombuffer(data, dtype="<f8", count=n_out * (n_in + 1), offset=pos).astype(np.float64)
        if not np.all(np.isfinite(w)):
            raise FormatError(f"layer {l} contains non-finite weights", offset=pos)
        layers.append((w.reshape(n_out, n_in + 1), Activation(code), pos))
        pos += nbytes
        prev_out = n_out
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes after last layer", offset=pos)
    try:
        return Network([Layer(w, act) for w, act, _ in layers])
    except ContractError as exc:
        raise FormatError(str(exc), offset=layers[0][2]) from exc


def save(net: Network, path: "str | Path") -> None:
    Path(path).write_bytes(serialize(net))


def load(path: "str | Path") -> Network:
    return deserialize(Path(path).read_bytes())
