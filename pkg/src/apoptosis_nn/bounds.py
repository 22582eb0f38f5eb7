"""Worst-case output change caused by a single merge.

Both bounds are rounded outward by a few ulps so that a floating-point
evaluation stays an upper bound on the exact quantity.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError

_OUTWARD = 1.0 + 8 * np.finfo(np.float64).eps


def _inputs(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2):
        raise ContractError(f"x must be a vector or a matrix of row vectors, got shape {x.shape}")
    return np.atleast_2d(x), x.ndim == 1


def relu_error_bound(v1, v2, alpha: float, x):
    """Bound on ``|relu(v1.x) + relu(v2.x) - (1 + alpha) relu(v1.x)|``.

    Resolved per sign case of the two pre-activations:
    both off -> 0; only ``v1`` on -> ``alpha |v1| |x|``; only ``v2`` on ->
    ``|v2| |x|``; both on -> ``|x| |v2 - alpha v1|``.

    ``x`` may be one input (returns a float) or a matrix with one input per
    row (returns an array).
    """
    if not alpha > 0:
        raise ContractError(f"alpha must be > 0, got {alpha}")
    v1 = np.asarray(v1, dtype=np.float64)
    v2 = np.asarray(v2, dtype=np.float64)
    X, single = _inputs(x)
    a1 = X @ v1
    a2 = X @ v2
    nx = np.linalg.norm(X, axis=1)
    b = np.where(
        (a1 <= 0) & (a2 <= 0),
        0.0,
        np.where(
            a2 <= 0,
            alpha * np.linalg.norm(v1) * nx,
            np.where(a1 <= 0, np.linalg.norm(v2) * nx, nx * np.linalg.norm(v2 - alpha * v1)),
        ),
    )
    b = b * _OUTWARD
    return float(b[0]) if single else b


def sigmoid_error_bound(v1, v2, w2, x, scale_by_input_norm: bool = False):
    """Bound on ``|w1 s(v1.x) + w2 s(v2.x) - (w1 + w2) s(v1.x)|`` for sigmoid ``s``.

    With ``eps = |v1 - v2|`` and ``d = eps |x|``::

        |w2| * max_(+/-) |e^(v1.x) - e^(v1.x +/- d)| / ((e^(v1.x) + 1)(e^(v2.x) + 1))

    The max is always the ``+`` branch, ``e^(v1.x) expm1(d)``, so the bound is
    ``|w2| expm1(d) sigmoid(v1.x) sigmoid(-v2.x)``, evaluated in log space.

    ``scale_by_input_norm`` multiplies by an extra ``|x|``; that variant
    is NOT an upper bound when ``|x| < 1`` and exists only for comparison.
    ``x`` may be one input or a matrix with one input per row.
    """
    v1 = np.asarray(v1, dtype=np.float64)
    v2 = np.asarray(v2, dtype=np.float64)
    w2 = np.asarray(w2, dtype=np.float64)
    X, single = _inputs(x)
    nx = np.linalg.norm(X, axis=1)
    nw = float(np.linalg.norm(w2))
    delta = float(np.linalg.norm(v1 - v2)) * nx
    live = (delta > 0) & (nw > 0)
    d = np.where(live, delta, 1.0)
    b = X @ v1
    a = X @ v2
    # log(expm1(d)) = d + log(1 - e^-d), stable for large and small d
    terms = [
        np.full_like(d, np.log(nw) if nw > 0 else 0.0),
        d + np.log(-np.expm1(-d)),
        -np.logaddexp(0.0, -b),
        -np.logaddexp(0.0, a),
    ]
    if scale_by_input_norm:
        terms.append(np.log(np.where(live, nx, 1.0)))
    total = np.sum(terms, axis=0)
    # widen by the rounding error accumulated in the log-domain sum
    slack = 8 * np.finfo(np.float64).eps * (1.0 + np.sum(np.abs(terms), axis=0))
    out = np.where(live, np.exp(total + slack) * _OUTWARD, 0.0)
    return float(out[0]) if single else out
