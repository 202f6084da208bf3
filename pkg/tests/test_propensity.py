from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kernmatch.errors import DegenerateTreatmentError, SeparationError
from kernmatch.propensity import (
    PropensityFit,
    add_intercept,
    fit_logistic,
    log_likelihood,
    predict,
    score_and_information,
)


def irls_oracle(X, W, iters=200):
    """Textbook IRLS: repeated weighted least squares on the working response."""
    beta = np.zeros(X.shape[1])
    for _ in range(iters):
        eta = X @ beta
        mu = 1.0 / (1.0 + np.exp(-eta))
        v = mu * (1 - mu)
        z = eta + (W - mu) / v
        sw = np.sqrt(v)
        new, *_ = np.linalg.lstsq(X * sw[:, None], z * sw, rcond=None)
        if np.max(np.abs(new - beta)) < 1e-14:
            beta = new
            break
        beta = new
    return beta


def _random_design(seed, n=400, d=3):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, d))
    X = add_intercept(x)
    beta = rng.uniform(-1, 1, d + 1)
    W = (rng.random(n) < 1 / (1 + np.exp(-X @ beta))).astype(float)
    return X, W


def test_intercept_only_balanced():
    W = np.array([0, 1] * 10)
    fit = fit_logistic(np.ones((20, 1)), W)
    assert fit.beta == pytest.approx([0.0], abs=1e-12)
    np.testing.assert_allclose(fit.scores, 0.5)


def test_symmetric_design_gives_zero():
    X = add_intercept(np.array([-1.0, -1.0, 1.0, 1.0]))
    fit = fit_logistic(X, np.array([0, 1, 0, 1]))
    np.testing.assert_allclose(fit.beta, [0.0, 0.0], atol=1e-12)


def test_intercept_only_recovers_logit_of_mean():
    W = np.array([1] * 3 + [0] * 7)
    fit = fit_logistic(np.ones((10, 1)), W)
    assert fit.beta[0] == pytest.approx(math.log(0.3 / 0.7), abs=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_gradient_and_irls_oracle(seed):
    X, W = _random_design(seed)
    fit = fit_logistic(X, W)
    assert fit.converged
    S, _ = score_and_information(X, W, fit.beta)
    assert np.max(np.abs(S)) <= 1e-8
    np.testing.assert_allclose(fit.beta, irls_oracle(X, W), atol=1e-6)


def test_finite_difference_score_and_information():
    X, W = _random_design(11, n=300, d=2)
    n = X.shape[0]
    rng = np.random.default_rng(5)
    for _ in range(25):
        beta = rng.uniform(-1.5, 1.5, X.shape[1])
        S, I = score_and_information(X, W, beta)
        eps = 1e-6
        fd = np.empty_like(beta)
        for j in range(beta.size):
            e = np.zeros_like(beta)
            e[j] = eps
            fd[j] = (log_likelihood(X, W, beta + e) - log_likelihood(X, W, beta - e)) / (2 * eps * n)
        np.testing.assert_allclose(S, fd, rtol=1e-5, atol=1e-9)
        # information is minus the Jacobian of the average score
        jac = np.empty((beta.size, beta.size))
        for j in range(beta.size):
            e = np.zeros_like(beta)
            e[j] = eps
            jac[:, j] = (score_and_information(X, W, beta + e)[0]
                         - score_and_information(X, W, beta - e)[0]) / (2 * eps)
        np.testing.assert_allclose(I, -jac, rtol=1e-5, atol=1e-9)


def test_predict_saturation_and_algebra():
    fit = PropensityFit(np.array([1.0]), 0.0, 0, True, 0.0, np.array([0.5]))
    p = predict(fit, np.array([[0.0], [800.0], [math.log(3)], [-800.0]]))
    assert p[0] == 0.5
    assert 0.999 < p[1] < 1.0 and np.isfinite(p[1])
    assert p[2] == pytest.approx(0.75, abs=1e-15)
    assert 0.0 < p[3] < 1e-3
    with pytest.raises(ValueError):
        predict(fit, np.ones((2, 2)))


def test_degenerate_treatment():
    X = add_intercept(np.arange(6.0))
    with pytest.raises(DegenerateTreatmentError):
        fit_logistic(X, np.ones(6))
    with pytest.raises(DegenerateTreatmentError):
        fit_logistic(X, np.zeros(6))


def test_perfect_separation():
    x = np.linspace(-1, 1, 40)
    W = (x > 0).astype(int)
    with pytest.raises(SeparationError):
        fit_logistic(add_intercept(x), W)


def test_collinear_design_is_flagged():
    rng = np.random.default_rng(1)
    x = rng.normal(size=100)
    X = np.column_stack([np.ones(100), x, 2 * x])
    W = (rng.random(100) < 0.5).astype(int)
    with pytest.raises(SeparationError):
        fit_logistic(X, W)


def test_input_validation():
    with pytest.raises(ValueError):
        fit_logistic(np.ones((4, 1)), np.array([0, 1, 2, 1]))
    with pytest.raises(ValueError):
        fit_logistic(np.ones((4, 1)), np.array([0, 1, 1]))
    with pytest.raises(ValueError):
        fit_logistic(np.array([[1.0], [np.nan], [1.0], [1.0]]), np.array([0, 1, 0, 1]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_scores_in_open_unit_interval_and_reproducible(seed):
    X, W = _random_design(seed, n=120, d=2)
    try:
        a = fit_logistic(X, W)
    except SeparationError:
        return
    b = fit_logistic(X, W)
    assert np.all((a.scores > 0) & (a.scores < 1))
    assert np.array_equal(a.beta, b.beta)
