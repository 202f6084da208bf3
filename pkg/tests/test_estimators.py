from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kernmatch import _loops
from kernmatch.errors import DegenerateScoreError, DenominatorUnderflow, RankError
from kernmatch.estimators import (
    Estimand,
    ObservationalSample,
    dr,
    impute,
    ipw,
    kernel_match,
    kernel_match_ate,
    kernel_match_att,
    nn_match,
    ols_outcome_model,
)
from kernmatch.kernels import KernelFamily, KernelSpec, eval_kernel_array

GAUSS = KernelFamily.GAUSSIAN
EPAN = KernelFamily.EPANECHNIKOV


def make(y, w, x=None):
    y = np.asarray(y, dtype=float)
    if x is None:
        x = np.arange(y.size, dtype=float)
    return ObservationalSample(y, np.asarray(w), np.asarray(x, dtype=float))


def random_instance(seed, n=None, min_group=2):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(max(6, 2 * min_group), 60))
    w = np.zeros(n, dtype=int)
    w[rng.permutation(n)[: int(rng.integers(min_group, n - min_group + 1))]] = 1
    p = rng.uniform(0.02, 0.98, n)
    y = rng.normal(size=n) * 3 + rng.normal()
    x = rng.normal(size=(n, 2))
    return ObservationalSample(y, w, x), p


def brute_force(p_recv, p_donor, y_donor, kernel):
    out = np.empty(p_recv.size)
    for i, pi in enumerate(p_recv):
        u = (p_donor - pi) / kernel.bandwidth
        if kernel.family is GAUSS:
            # rescale by the nearest donor so far receivers do not underflow to denormals
            lw = -0.5 * u * u
            k = np.exp(lw - lw.max())
        else:
            k = eval_kernel_array(kernel, u)
        out[i] = np.sum(k * y_donor) / np.sum(k) if k.sum() > 0 else np.nan
    return out


# -- hand cases ------------------------------------------------------------------

def test_symmetric_donors_average():
    s = make([5.0, 6.0, 1.0, 3.0], [1, 1, 0, 0])
    p = np.array([0.5, 0.5, 0.4, 0.6])
    for h in (0.01, 0.1, 3.0):
        imp = impute(s, p, KernelSpec(GAUSS, h))
        assert imp.y0hat[0] == pytest.approx(2.0, abs=1e-12)


def test_four_unit_weights():
    s = make([7.0, 8.0, 1.0, 2.0, 10.0], [1, 1, 0, 0, 0])
    p = np.array([0.30, 0.95, 0.20, 0.40, 0.70])
    k = KernelSpec(GAUSS, 0.1)
    wts = np.array([0.24197, 0.24197, 1.3383e-4])
    np.testing.assert_allclose(eval_kernel_array(k, np.array([-1.0, 1.0, 4.0])), wts, rtol=1e-4)
    expect = (wts[0] * 1 + wts[1] * 2 + wts[2] * 10) / wts.sum()
    assert impute(s, p, k).y0hat[0] == pytest.approx(expect, rel=1e-4)
    assert expect == pytest.approx(1.50235, abs=1e-4)


def test_single_donor_copies_its_outcome():
    out = np.empty(3)
    empty = np.zeros(3, dtype=np.bool_)
    for fam in (_loops.GAUSSIAN, _loops.EPANECHNIKOV):
        _loops.kernel_impute(np.array([0.1, 0.5, 0.9]), np.array([0.45]), np.array([4.2]), 1.0, fam, out, empty)
        np.testing.assert_array_equal(out, 4.2)


def test_observed_outcomes_copied():
    s, p = random_instance(3)
    imp = impute(s, p, KernelSpec(GAUSS, 0.1))
    np.testing.assert_array_equal(imp.y1hat[s.treated], s.y[s.treated])
    np.testing.assert_array_equal(imp.y0hat[~s.treated], s.y[~s.treated])


def test_twin_cancellation():
    # every treated unit has a control twin with the same score and outcome
    p = np.array([0.2, 0.5, 0.8, 0.2, 0.5, 0.8])
    y = np.array([1.0, 4.0, -2.0, 1.0, 4.0, -2.0])
    s = make(y, [1, 1, 1, 0, 0, 0])
    k = KernelSpec(GAUSS, 1e-4)
    assert kernel_match_ate(s, p, k).point == pytest.approx(0.0, abs=1e-12)
    assert kernel_match_att(s, p, k).point == pytest.approx(0.0, abs=1e-12)


def test_epanechnikov_empty_neighbourhood():
    s = make([1.0, 2.0, 5.0, 7.0], [1, 1, 0, 0])
    p = np.array([0.10, 0.12, 0.80, 0.90])
    k = KernelSpec(EPAN, 0.05)
    with pytest.warns(RuntimeWarning):
        imp = impute(s, p, k)
    assert imp.n_fallback == 4
    assert imp.y0hat[0] == 5.0 and imp.y1hat[3] == 2.0
    with pytest.raises(DenominatorUnderflow):
        impute(s, p, k, on_empty="raise")


def test_ipw_four_units_by_hand():
    y = np.array([3.0, 5.0, 1.0, 2.0])
    p = np.array([0.5, 0.8, 0.2, 0.6])
    s = make(y, [1, 1, 0, 0])
    odds = np.array([0.25, 1.5])
    att = 4.0 - (0.25 * 1 + 1.5 * 2) / 1.75
    assert ipw(s, p, "ATT").point == pytest.approx(att, abs=1e-12)
    w1 = 1 / p[:2]
    w0 = 1 / (1 - p[2:])
    ate = (w1 @ y[:2]) / w1.sum() - (w0 @ y[2:]) / w0.sum()
    assert ipw(s, p, "ATE").point == pytest.approx(ate, abs=1e-12)
    assert odds.sum() == 1.75


def test_ipw_constant_scores_is_difference_in_means():
    s, _ = random_instance(8)
    p = np.full(s.n, 0.5)
    dm = s.y[s.treated].mean() - s.y[~s.treated].mean()
    for est in ("ATE", "ATT"):
        assert ipw(s, p, est).point == pytest.approx(dm, abs=1e-12)


def test_degenerate_scores_rejected():
    s = make([1.0, 2.0, 3.0, 4.0], [1, 1, 0, 0])
    for bad in ([0.0, 0.5, 0.5, 0.5], [0.5, 1.0, 0.5, 0.5]):
        with pytest.raises(DegenerateScoreError):
            ipw(s, np.array(bad))
        with pytest.raises(DegenerateScoreError):
            dr(s, np.array(bad))


def test_dr_exact_with_true_nuisances():
    rng = np.random.default_rng(2)
    n = 200
    x = rng.normal(size=(n, 2))
    p = 1 / (1 + np.exp(-(0.3 * x[:, 0] - 0.5 * x[:, 1])))
    w = (rng.random(n) < p).astype(int)
    y0 = 1 + x @ [2.0, -1.0]
    y1 = 4 + x @ [1.0, 0.5]
    y = np.where(w == 1, y1, y0)
    s = ObservationalSample(y, w, x)
    assert dr(s, p, "ATE").point == pytest.approx(np.mean(y1 - y0), abs=1e-10)
    assert dr(s, p, "ATT").point == pytest.approx(np.mean((y1 - y0)[w == 1]), abs=1e-10)


def test_dr_reduces_with_half_scores_and_zero_outcome_model():
    s, _ = random_instance(4, n=40)
    p = np.full(s.n, 0.5)
    zero = np.zeros(s.n)
    W = s.w
    direct = 2 * np.mean(W * s.y) - 2 * np.mean((1 - W) * s.y)
    assert dr(s, p, "ATE", mu0=zero, mu1=zero).point == pytest.approx(direct, abs=1e-12)


def test_ols_outcome_model():
    x = np.array([0.0, 1.0, 2.0, 3.0, 0.5, 1.5, 2.5])
    s = make(2 + 3 * x, [1, 1, 1, 1, 0, 0, 0], x)
    np.testing.assert_allclose(ols_outcome_model(s, 1).coef, [2.0, 3.0], atol=1e-12)
    s = make(np.full(7, 7.0), [1, 1, 1, 1, 0, 0, 0], x)
    np.testing.assert_allclose(ols_outcome_model(s, 0).coef, [7.0, 0.0], atol=1e-12)
    with pytest.raises(RankError):
        ols_outcome_model(make([1.0, 2.0, 3.0, 4.0], [1, 1, 0, 0], np.ones((4, 2))), 0)


def test_nn_all_donors_and_exact_duplicates():
    s, p = random_instance(9, n=30)
    att = nn_match(s, "pscore", p, "ATT", k=s.n_control).point
    assert att == pytest.approx(s.y[s.treated].mean() - s.y[~s.treated].mean(), abs=1e-12)
    x = np.array([[0.0], [5.0], [0.0], [9.0], [20.0]])
    y = np.array([1.0, 2.0, 10.0, 30.0, 50.0])
    s = ObservationalSample(y, np.array([1, 1, 0, 0, 0]), x)
    assert nn_match(s, "covariates", estimand="ATT", k=1).point == pytest.approx(((1 - 10) + (2 - 30)) / 2)
    with pytest.raises(ValueError):
        nn_match(s, "covariates", estimand="ATT", k=4)


def test_nn_ties_go_to_lowest_index():
    p = np.array([0.5, 0.9, 0.4, 0.6, 0.95])
    y = np.array([0.0, 0.0, 1.0, 3.0, 0.0])
    s = make(y, [1, 1, 0, 0, 0])
    # treated unit 0 is equidistant from controls 2 and 3
    est = nn_match(s, "pscore", p, "ATT", k=1).point
    assert est == pytest.approx(((0 - 1.0) + (0 - 0.0)) / 2)


def test_kernel_match_dispatch():
    s, p = random_instance(12)
    k = KernelSpec(GAUSS, 0.1)
    assert kernel_match(s, p, k, "ATE").point == kernel_match_ate(s, p, k).point
    assert kernel_match(s, p, k, Estimand.ATT).point == kernel_match_att(s, p, k).point


def test_sample_validation():
    with pytest.raises(ValueError):
        make([1.0, 2.0, 3.0], [1, 0, 0])
    with pytest.raises(ValueError):
        make([1.0, 2.0, 3.0, np.nan], [1, 1, 0, 0])
    with pytest.raises(ValueError):
        make([1.0, 2.0, 3.0, 4.0], [1, 2, 0, 0])


# -- properties ---------------------------------------------------------------------

def test_convex_combination_on_1000_instances():
    for seed in range(1000):
        s, p = random_instance(seed)
        fam = GAUSS if seed % 2 == 0 else EPAN
        h = [0.01, 0.05, 0.2, 1.0][seed % 4]
        with np.errstate(all="ignore"):
            import warnings
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                imp = impute(s, p, KernelSpec(fam, h))
        t = s.treated
        y0, y1 = s.y[~t], s.y[t]
        eps = 1e-12 * (1 + np.abs(s.y).max())
        assert np.all(imp.y0hat[t] >= y0.min() - eps) and np.all(imp.y0hat[t] <= y0.max() + eps)
        assert np.all(imp.y1hat[~t] >= y1.min() - eps) and np.all(imp.y1hat[~t] <= y1.max() + eps)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([0.005, 0.03, 0.1, 0.5]), st.sampled_from([GAUSS, EPAN]))
def test_sorted_sweep_matches_brute_force(seed, h, fam):
    s, p = random_instance(seed)
    k = KernelSpec(fam, h)
    t = s.treated
    out = np.empty(int(t.sum()))
    empty = np.zeros(out.size, dtype=np.bool_)
    code = _loops.GAUSSIAN if fam is GAUSS else _loops.EPANECHNIKOV
    _loops.kernel_impute(p[t], p[~t], s.y[~t], h, code, out, empty)
    ref = brute_force(p[t], p[~t], s.y[~t], k)
    ok = np.isfinite(ref)
    if fam is EPAN:
        np.testing.assert_array_equal(empty, ~ok)
    np.testing.assert_allclose(out[ok], ref[ok], rtol=1e-10, atol=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_large_bandwidth_collapses_to_difference_of_means(seed):
    s, p = random_instance(seed)
    dm = s.y[s.treated].mean() - s.y[~s.treated].mean()
    k = KernelSpec(GAUSS, 1e6)
    assert kernel_match_ate(s, p, k).point == pytest.approx(dm, abs=1e-6)
    assert kernel_match_att(s, p, k).point == pytest.approx(dm, abs=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([0.02, 0.1, 0.4]))
def test_ate_forms_agree(seed, h):
    s, p = random_instance(seed)
    k = KernelSpec(GAUSS, h)
    a = kernel_match_ate(s, p, k, form="imputed").point
    b = kernel_match_ate(s, p, k, form="signed").point
    assert a == pytest.approx(b, abs=1e-12 * (1 + abs(a)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.floats(-100, 100), st.floats(0.1, 10))
def test_affine_equivariance_in_outcomes(seed, shift, scale):
    s, p = random_instance(seed)
    k = KernelSpec(GAUSS, 0.1)
    s2 = ObservationalSample(shift + scale * s.y, s.w, s.x)
    for fn in (lambda q: kernel_match_ate(q, p, k), lambda q: kernel_match_att(q, p, k),
               lambda q: ipw(q, p, "ATE"), lambda q: ipw(q, p, "ATT")):
        assert fn(s2).point == pytest.approx(scale * fn(s).point, rel=1e-9, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_permutation_invariance(seed):
    s, p = random_instance(seed, min_group=5)
    perm = np.random.default_rng(seed).permutation(s.n)
    s2 = s.take(perm)
    p2 = p[perm]
    k = KernelSpec(GAUSS, 0.07)
    for fn in (lambda q, r: kernel_match_ate(q, r, k), lambda q, r: kernel_match_att(q, r, k),
               lambda q, r: ipw(q, r, "ATE"), lambda q, r: dr(q, r, "ATT")):
        assert fn(s2, p2).point == pytest.approx(fn(s, p).point, rel=1e-10, abs=1e-10)


def test_gaussian_far_donors_do_not_underflow():
    # every donor sits thousands of bandwidths away; weights are taken relative to the nearest
    s = make([1.0, 2.0, 5.0, 7.0], [1, 1, 0, 0])
    p = np.array([0.01, 0.02, 0.98, 0.99])
    imp = impute(s, p, KernelSpec(GAUSS, 1e-3))
    assert imp.n_fallback == 0
    assert imp.y0hat[0] == pytest.approx(5.0) and math.isfinite(imp.y1hat[3])
