import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from lpdensity.kernels import Kernel, build_kernel, gaussian_moment, moment, self_convolution


def quad_moment(fn, i, half=12.0):
    val, _ = integrate.quad(lambda t: t**i * fn(t), -half, half, epsabs=1e-11, epsrel=1e-10,
                            limit=200)
    return val


@pytest.mark.parametrize("m", range(1, 7))
def test_moment_conditions_closed_form_and_quadrature(m):
    k = build_kernel(m)
    assert k.moment(0) == pytest.approx(1.0, abs=1e-8)
    assert quad_moment(k, 0) == pytest.approx(1.0, abs=1e-8)
    for i in range(1, m + 1):
        assert abs(k.moment(i)) < 1e-8
        assert abs(quad_moment(k, i)) < 1e-8


def test_second_order_kernel_coefficients():
    # solve c0 + c2 = 1, c0 + 3 c2 = 0 by hand
    k = build_kernel(2)
    np.testing.assert_allclose(k.coeffs, [1.5, 0.0, -0.5], atol=1e-14)
    assert k(0.0) == pytest.approx(1.5 / math.sqrt(2 * math.pi), rel=1e-14)


def test_odd_order_coincides_with_next_lower_even():
    assert build_kernel(3).poly_coeffs == build_kernel(2).poly_coeffs
    assert build_kernel(1).poly_coeffs == (1.0,)


def test_gaussian_moments():
    assert [gaussian_moment(i) for i in range(7)] == [1, 0, 1, 0, 3, 0, 15]
    assert gaussian_moment(4, 2.0) == 12.0


def test_kernel_is_bit_symmetric():
    k = build_kernel(4)
    t = np.linspace(0, 7, 1001)
    assert np.array_equal(k(t), k(-t))


def test_derivatives_match_finite_differences():
    rng = np.random.default_rng(3)
    k = build_kernel(4)
    t = rng.uniform(-4, 4, 20)
    h = 1e-5
    for d in (1, 2):
        fd = (k(t + h, d - 1) - k(t - h, d - 1)) / (2 * h)
        np.testing.assert_allclose(k(t, d), fd, rtol=1e-6, atol=1e-9)


@pytest.mark.parametrize("b", [0.1, 1.0, 10.0])
def test_scaled_kernel_integrates_to_one(b):
    k = build_kernel(2)
    val, _ = integrate.quad(lambda x: k.scaled_eval(b, x), -12 * b, 12 * b, epsabs=1e-10,
                            limit=200)
    assert val == pytest.approx(1.0, abs=1e-8)


def test_self_convolution_at_zero():
    # K(0) = int k^2 = E_{N(0,1/2)}[(1.5 - 0.5 T^2)^2] / (2 sqrt(pi))
    K = self_convolution(build_kernel(2))
    expected = (2.25 - 1.5 * 0.5 + 0.25 * 0.75) / (2 * math.sqrt(math.pi))
    assert K(0.0) == pytest.approx(expected, rel=1e-13)
    assert K.gaussian_variance == 2.0


@pytest.mark.parametrize("m", [2, 4, 6])
def test_self_convolution_matches_quadrature(m):
    k = build_kernel(m)
    K = self_convolution(k)
    for x in (-2.3, 0.0, 0.7, 3.1):
        val, _ = integrate.quad(lambda y: k(x - y) * k(y), -14, 14, epsabs=1e-12, limit=200)
        assert K(x) == pytest.approx(val, abs=1e-10)


@pytest.mark.parametrize("m", range(1, 7))
def test_self_convolution_moment_additivity(m):
    k = build_kernel(m)
    K = self_convolution(k)
    for i in range(0, m + 3):
        additive = sum(math.comb(i, j) * k.moment(j) * k.moment(i - j) for j in range(i + 1))
        assert K.moment(i) == pytest.approx(additive, abs=1e-8)
        assert quad_moment(K, i, half=17.0) == pytest.approx(additive, abs=1e-8)


def test_module_level_moment_alias():
    k = build_kernel(4)
    assert moment(k, 4) == k.moment(4)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        build_kernel(0)
    with pytest.raises(ValueError):
        build_kernel(2.5)
    with pytest.raises(ValueError):
        build_kernel(2)(0.0, deriv=3)
    with pytest.raises(ValueError):
        build_kernel(2).scaled_eval(0.0, 1.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(-1.0, 1.0), st.floats(-1.0, 1.0), st.floats(0.3, 3.0))
def test_convolution_of_arbitrary_gaussian_polynomials(c1, c2, v):
    k = Kernel(2, (1.0, c1, c2), v)
    K = self_convolution(k)
    half = 14 * math.sqrt(v)
    val, _ = integrate.quad(lambda y: k(0.4 - y) * k(y), -half, half, epsabs=1e-12, limit=200)
    assert K(0.4) == pytest.approx(val, abs=1e-9)
