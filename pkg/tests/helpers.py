"""Independent oracles shared by the test modules."""

import numpy as np

from apoptosis_nn.network import Activation, Layer, Network, forward, loss_value


def random_net(sizes, activation="sigmoid", output="linear", seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    layers = []
    for l, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        act = output if l == len(sizes) - 2 else activation
        layers.append(Layer(scale * rng.normal(size=(b, a + 1)), Activation.parse(act)))
    return Network(layers)


def fd_gradient(net, x, t, loss, h=1e-3):
    """Five-point central differences of the batch-mean loss, one weight at a time.

    Truncation error is O(h^4) and roundoff O(eps/h), both near 1e-13 at the
    default step, so entries down to ~1e-7 are resolved to 1e-5 relative.
    """
    grads = []
    for layer in net.layers:
        g = np.zeros_like(layer.weights)
        for idx in np.ndindex(layer.weights.shape):
            orig = layer.weights[idx]
            vals = []
            for k in (2, 1, -1, -2):
                layer.weights[idx] = orig + k * h
                vals.append(loss_value(net, forward(net, x), t, loss))
            layer.weights[idx] = orig
            g[idx] = (-vals[0] + 8 * vals[1] - 8 * vals[2] + vals[3]) / (12 * h)
        grads.append(g)
    return grads


def max_rel_error(a, b, floor=1e-6):
    """Largest |a - b| / max(|a|, |b|, floor) over all entries of two gradient lists.

    The floor keeps entries that finite differences cannot resolve (|g| below
    ~1e-6) from dominating.
    """
    worst = 0.0
    for ga, gb in zip(a, b):
        denom = np.maximum(np.maximum(np.abs(ga), np.abs(gb)), floor)
        worst = max(worst, float(np.max(np.abs(ga - gb) / denom)))
    return worst


def pre_activation_margin(net, x):
    """Smallest |pre-activation| over the hidden layers (ReLU kink distance)."""
    acts = forward(net, x)
    return min(float(np.min(np.abs(z))) for z in acts.pre[:-1])


def brute_force_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))
