import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conlabel.exceptions import BadDistribution, ShapeMismatch
from conlabel.learner.optim import (
    AdamaxState,
    LearnerConfig,
    adamax_step,
    augment_jitter,
    batch_loss,
    cross_entropy_loss,
    gradient_of_batch,
    softmax,
)


def test_cross_entropy_examples():
    assert cross_entropy_loss([0.0, 1.0, 0.0], 1) == 0.0
    assert cross_entropy_loss([0.25] * 4, 3) == pytest.approx(1.386294, abs=1e-6)
    assert cross_entropy_loss([0.7, 0.2, 0.1], 1) == pytest.approx(1.609438, abs=1e-6)


def test_cross_entropy_floor():
    assert cross_entropy_loss([1.0, 0.0], 1) == pytest.approx(-math.log(1e-12))


@pytest.mark.parametrize(
    "probs, target",
    [([0.5, 0.6], 0), ([1.2, -0.2], 0), ([], 0), ([0.5, 0.5], 2), ([[0.5, 0.5]], 0), ([float("nan"), 1.0], 0)],
)
def test_cross_entropy_bad_distribution(probs, target):
    with pytest.raises(BadDistribution):
        cross_entropy_loss(probs, target)


def test_config_validation():
    for bad in ({"learning_rate": 0}, {"beta1": 1.0}, {"beta2": -0.1}, {"batch_size": 0}):
        with pytest.raises(ValueError):
            LearnerConfig(**bad)
    assert LearnerConfig(decay=0.5).lr_at(2) == pytest.approx(0.0005)


# --------------------------------------------------------------------------
# adamax
# --------------------------------------------------------------------------


def test_adamax_zero_gradient_leaves_params():
    params = [np.array([[1.0, -2.0]]), np.array([0.5])]
    before = [p.copy() for p in params]
    state = AdamaxState.zeros_like(params)
    adamax_step(params, [np.zeros((1, 2)), np.zeros(1)], state, lr=0.001)
    for p, q in zip(params, before):
        np.testing.assert_array_equal(p, q)
    assert state.t == 1


def test_adamax_scalar_first_step():
    # m = 0.1, u = 1, step = 0.001 / (1 - 0.9) * 0.1 / (1 + 1e-8)
    theta = [np.array([0.0])]
    state = AdamaxState.zeros_like(theta)
    adamax_step(theta, [np.array([1.0])], state, lr=0.001, beta1=0.9, beta2=0.999)
    assert state.m[0][0] == pytest.approx(0.1)
    assert state.u[0][0] == 1.0
    assert theta[0][0] == pytest.approx(-0.00099999999, rel=1e-9)
    assert theta[0][0] == pytest.approx(-0.001, abs=1e-10)


@given(st.floats(-1e3, 1e3).filter(lambda g: abs(g) > 1e-6))
def test_adamax_first_step_opposes_gradient(g):
    theta = [np.array([0.0])]
    adamax_step(theta, [np.array([g])], AdamaxState.zeros_like(theta), lr=0.001)
    assert np.sign(theta[0][0]) == -np.sign(g)


def test_adamax_infinity_norm_decays_slowly():
    theta = [np.array([0.0])]
    state = AdamaxState.zeros_like(theta)
    adamax_step(theta, [np.array([2.0])], state, lr=0.001)
    adamax_step(theta, [np.array([0.0])], state, lr=0.001)
    assert state.u[0][0] == pytest.approx(2.0 * 0.999)


def test_adamax_shape_mismatch():
    params = [np.zeros((2, 2))]
    with pytest.raises(ShapeMismatch):
        adamax_step(params, [np.zeros(2)], AdamaxState.zeros_like(params), lr=0.1)
    with pytest.raises(ShapeMismatch):
        adamax_step(params, [np.zeros((2, 2)), np.zeros(2)], AdamaxState.zeros_like(params), lr=0.1)


# --------------------------------------------------------------------------
# gradient
# --------------------------------------------------------------------------


def numeric_gradient(params, X, y, h=1e-5):
    grads = []
    for p in params:
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = batch_loss(params, X, y)
            p[idx] = old - h
            down = batch_loss(params, X, y)
            p[idx] = old
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def max_relative_error(a, b):
    worst = 0.0
    for x, y in zip(a, b):
        denom = np.maximum(np.abs(x) + np.abs(y), 1e-8)
        worst = max(worst, float(np.max(np.abs(x - y) / denom)))
    return worst


def random_problem(rng, K=3, d=4, n=6):
    params = [rng.normal(size=(K, d)), rng.normal(size=K)]
    return params, rng.normal(size=(n, d)), rng.integers(0, K, size=n)


def test_gradient_matches_finite_differences():
    params, X, y = random_problem(np.random.default_rng(0))
    assert max_relative_error(gradient_of_batch(params, X, y), numeric_gradient(params, X, y)) < 1e-5


def test_gradient_check_over_many_draws():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        K, d, n = rng.integers(2, 6), rng.integers(1, 6), rng.integers(1, 9)
        params, X, y = random_problem(rng, K, d, n)
        worst = max(worst, max_relative_error(gradient_of_batch(params, X, y), numeric_gradient(params, X, y)))
    assert worst < 1e-4


def test_gradient_vanishes_on_confident_correct_predictions():
    W = np.array([[50.0, 0.0], [0.0, 50.0]])
    X = np.eye(2)
    dW, db = gradient_of_batch([W, np.zeros(2)], X, np.array([0, 1]))
    np.testing.assert_allclose(dW, 0.0, atol=1e-12)
    np.testing.assert_allclose(db, 0.0, atol=1e-12)


def test_duplicated_batch_has_same_gradient():
    params, X, y = random_problem(np.random.default_rng(2))
    single = gradient_of_batch(params, X, y)
    double = gradient_of_batch(params, np.vstack([X, X]), np.concatenate([y, y]))
    for a, b in zip(single, double):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


def test_weight_decay_adds_l2_term():
    params, X, y = random_problem(np.random.default_rng(3))
    plain = gradient_of_batch(params, X, y)[0]
    decayed = gradient_of_batch(params, X, y, weight_decay=0.1)[0]
    np.testing.assert_allclose(decayed - plain, 0.1 * params[0])


def test_softmax_rows_are_distributions():
    logits = np.random.default_rng(4).normal(scale=30, size=(50, 7))
    P = softmax(logits.copy())
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-9)
    assert (P >= 0).all()
    np.testing.assert_array_equal(P.argmax(axis=1), logits.argmax(axis=1))


# --------------------------------------------------------------------------
# jitter
# --------------------------------------------------------------------------


def test_jitter_zero_sigma_is_identity():
    X = np.arange(12.0).reshape(3, 4)
    out = augment_jitter(X, 0.0, seed=1)
    np.testing.assert_array_equal(out, X)
    assert out is not X


def test_jitter_mean_and_spread():
    n, sigma = 100_000, 0.5
    noise = augment_jitter(np.zeros(n), sigma, seed=5)
    assert abs(noise.mean()) < 5 * sigma / math.sqrt(n)
    assert noise.std() == pytest.approx(sigma, rel=0.02)


def test_jitter_is_deterministic():
    X = np.ones((5, 3))
    np.testing.assert_array_equal(augment_jitter(X, 1.0, seed=9), augment_jitter(X, 1.0, seed=9))
    assert not np.array_equal(augment_jitter(X, 1.0, seed=9), augment_jitter(X, 1.0, seed=10))


def test_jitter_negative_sigma():
    with pytest.raises(ValueError):
        augment_jitter(np.zeros(3), -0.1)
