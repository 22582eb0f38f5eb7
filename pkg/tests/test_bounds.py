import math

import numpy as np
import pytest

from apoptosis_nn.bounds import relu_error_bound, sigmoid_error_bound
from apoptosis_nn.errors import ContractError

EPS = np.finfo(np.float64).eps


def relu(z):
    return max(z, 0.0)


def sig(z):
    return 1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z))


def test_relu_exact_multiple_case_four():
    b = relu_error_bound([1, 0], [2, 0], 2.0, [1, 1])
    assert b == 0.0
    assert relu(1.0) + relu(2.0) - 3 * relu(1.0) == 0.0


def test_relu_case_two():
    v1, v2, x = np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([1.0, -1.0])
    b = relu_error_bound(v1, v2, 1.0, x)
    assert b == pytest.approx(math.sqrt(2), rel=1e-14)
    actual = abs(relu(v1 @ x) + relu(v2 @ x) - 2 * relu(v1 @ x))
    assert actual == 1.0 <= b


def test_relu_case_three():
    b = relu_error_bound([1.0, 0.0], [0.0, 3.0], 0.5, [-1.0, 2.0])
    assert b == pytest.approx(3.0 * math.sqrt(5.0), rel=1e-14)


def test_relu_both_off():
    assert relu_error_bound([1.0, 1.0], [2.0, 1.0], 1.5, [-1.0, -1.0]) == 0.0


@pytest.mark.parametrize("alpha", [0.3, 1.0, 4.0])
def test_relu_zero_input(alpha):
    assert relu_error_bound([1.0, -2.0], [0.5, 0.5], alpha, [0.0, 0.0]) == 0.0


@pytest.mark.parametrize("alpha", [0.0, -1.0])
def test_relu_alpha_must_be_positive(alpha):
    with pytest.raises(ContractError):
        relu_error_bound([1.0], [1.0], alpha, [1.0])


def test_sigmoid_identical_vectors():
    assert sigmoid_error_bound([0.3, -0.2], [0.3, -0.2], [1.0, 2.0], [0.5, 0.5]) == 0.0


def test_sigmoid_zero_input():
    assert sigmoid_error_bound([0.3, -0.2], [0.31, -0.2], [1.0, 2.0], [0.0, 0.0]) == 0.0


def test_sigmoid_bound_holds_on_random_samples():
    rng = np.random.default_rng(17)
    d = 6
    v1 = rng.normal(size=d)
    step = rng.normal(size=d)
    v2 = v1 + 0.009 * step / np.linalg.norm(step)
    w1, w2 = rng.normal(size=3), rng.normal(size=3)
    for x in rng.uniform(-1, 1, size=(1000, d)):
        dev = np.linalg.norm(w1 * sig(v1 @ x) + w2 * sig(v2 @ x) - (w1 + w2) * sig(v1 @ x))
        slack = 8 * EPS * (np.linalg.norm(w1) + np.linalg.norm(w2))
        assert dev <= sigmoid_error_bound(v1, v2, w2, x) + slack


def test_sigmoid_bound_is_tight_in_one_dimension():
    # with one input the two pre-activations differ by exactly eps|x|
    v1, v2, w2, x = [1.0], [1.01], [1.0], [0.5]
    dev = abs(sig(0.505) - sig(0.5))
    b = sigmoid_error_bound(v1, v2, w2, x)
    assert dev <= b <= dev * (1 + 1e-9)


def test_extra_input_norm_factor_is_not_a_bound_for_short_inputs():
    v1, v2, w2, x = [1.0], [1.01], [1.0], [0.5]
    dev = abs(sig(0.505) - sig(0.5))
    assert sigmoid_error_bound(v1, v2, w2, x, scale_by_input_norm=True) < dev


def test_sigmoid_no_overflow_at_large_preactivation():
    for z in (650.0, -650.0, 700.0, -700.0):
        b = sigmoid_error_bound([z], [z * 1.001], [2.0], [1.0])
        assert math.isfinite(b) and b >= 0.0


def test_sigmoid_large_perturbation_does_not_overflow():
    b = sigmoid_error_bound([0.0], [2000.0], [1.0], [1.0])
    assert math.isfinite(b)


def test_batch_form_matches_rows():
    rng = np.random.default_rng(3)
    v1, v2, w2 = rng.normal(size=5), rng.normal(size=5), rng.normal(size=2)
    X = rng.uniform(-1, 1, size=(50, 5))
    X[0] = 0.0
    rb = relu_error_bound(v1, v2, 0.7, X)
    sb = sigmoid_error_bound(v1, v2, w2, X)
    assert rb.shape == sb.shape == (50,)
    # matrix and vector products may round differently in the last ulp
    np.testing.assert_allclose(rb, [relu_error_bound(v1, v2, 0.7, x) for x in X], rtol=1e-14, atol=0)
    np.testing.assert_allclose(sb, [sigmoid_error_bound(v1, v2, w2, x) for x in X], rtol=1e-14, atol=0)
    assert rb[0] == sb[0] == 0.0
