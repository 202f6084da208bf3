from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from kernmatch.kernels import KernelFamily, KernelSpec, eval_kernel, eval_kernel_array, verify_moments

GAUSS = KernelSpec(KernelFamily.GAUSSIAN, 1.0)
EPAN = KernelSpec(KernelFamily.EPANECHNIKOV, 1.0)


def test_point_values():
    assert eval_kernel(GAUSS, 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-7)
    assert eval_kernel(EPAN, 0.0) == 0.75
    assert eval_kernel(EPAN, 1.5) == 0.0
    assert eval_kernel(EPAN, -1.0) == 0.0


def test_non_finite_argument_rejected():
    with pytest.raises(ValueError):
        eval_kernel(GAUSS, float("nan"))
    with pytest.raises(ValueError):
        eval_kernel(EPAN, float("inf"))


@pytest.mark.parametrize("bad", [0.0, -0.1, float("inf"), float("nan")])
def test_bandwidth_must_be_positive_finite(bad):
    with pytest.raises(ValueError):
        KernelSpec(KernelFamily.GAUSSIAN, bad)


def test_family_parse_is_case_insensitive():
    assert KernelFamily.parse("Gaussian") is KernelFamily.GAUSSIAN
    assert KernelFamily.parse("EPANECHNIKOV") is KernelFamily.EPANECHNIKOV
    with pytest.raises(ValueError):
        KernelFamily.parse("triangular")


@given(st.floats(-50, 50, allow_nan=False), st.sampled_from([GAUSS, EPAN]))
def test_symmetric_and_nonnegative(u, spec):
    a, b = eval_kernel(spec, u), eval_kernel(spec, -u)
    assert a == b
    assert a >= 0.0


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=30))
def test_array_matches_scalar(us):
    for spec in (GAUSS, EPAN):
        arr = eval_kernel_array(spec, np.array(us))
        np.testing.assert_allclose(arr, [eval_kernel(spec, u) for u in us], rtol=1e-15, atol=0)


def test_gaussian_moments():
    rep = verify_moments(GAUSS)
    assert rep.m0 == pytest.approx(1.0, abs=1e-8)
    assert rep.m2 == pytest.approx(1.0, abs=1e-6)
    assert rep.k2 == pytest.approx(1 / (2 * math.sqrt(math.pi)), abs=1e-6)
    assert rep.m3abs < math.inf


def test_epanechnikov_moments_against_closed_form_and_quadrature():
    rep = verify_moments(EPAN)
    assert rep.m0 == pytest.approx(1.0, abs=1e-8)
    assert rep.m2 == pytest.approx(0.2, abs=1e-8)
    assert rep.k2 == pytest.approx(0.6, abs=1e-8)
    # independent full-interval quadrature of the polynomial forms
    m2, _ = integrate.quad(lambda u: u * u * 0.75 * (1 - u * u), -1, 1)
    k2, _ = integrate.quad(lambda u: (0.75 * (1 - u * u)) ** 2, -1, 1)
    assert rep.m2 == pytest.approx(m2, abs=1e-10)
    assert rep.k2 == pytest.approx(k2, abs=1e-10)


@pytest.mark.parametrize("spec", [GAUSS, EPAN])
def test_odd_moments_vanish(spec):
    upper = 12.0 if spec.family is KernelFamily.GAUSSIAN else 1.0
    m1, _ = integrate.quad(lambda u: u * eval_kernel(spec, u), -upper, upper, points=[0.0])
    m3, _ = integrate.quad(lambda u: u**3 * eval_kernel(spec, u), -upper, upper, points=[0.0])
    assert abs(m1) < 1e-6
    assert abs(m3) < 1e-6
