import math

import numpy as np
import pytest
from scipy import integrate, stats

from lpdensity.process import ARMA11, MA1, MaCoefficients
from lpdensity.simulate import (Gaussian, GaussianMixture, Logistic, UnsupportedOracle,
                                make_rng, oracle_f, oracle_g, oracle_h, parse_innovation,
                                sample_path)

NODES, WEIGHTS = np.polynomial.legendre.leggauss(600)


def gl_convolution(a, c, x, half):
    """(a * c)(x) by fixed Gauss-Legendre quadrature over y in [-half, half]."""
    y = half * NODES
    w = half * WEIGHTS
    return (a(x[:, None] - y[None, :]) * c(y)[None, :]) @ w


def test_canonical_oracles_are_normal():
    phi = MA1(0.5).ma_coeffs()
    x = np.linspace(-5, 5, 11)
    np.testing.assert_allclose(oracle_f(Gaussian())(x), stats.norm.pdf(x), rtol=1e-13)
    np.testing.assert_allclose(oracle_g(phi, Gaussian())(x), stats.norm.pdf(x, scale=0.5),
                               rtol=1e-13)
    np.testing.assert_allclose(oracle_h(phi, Gaussian())(x),
                               stats.norm.pdf(x, scale=math.sqrt(1.25)), rtol=1e-13)


@pytest.mark.parametrize("innov", [Gaussian(1.0), GaussianMixture(0.3, 1.5, 0.4), Logistic(0.6)])
def test_h_is_convolution_of_f_and_g(innov):
    phi = MA1(0.5).ma_coeffs()
    f, g, h = oracle_f(innov), oracle_g(phi, innov), oracle_h(phi, innov)
    x = np.arange(-4.0, 4.0 + 1e-9, 0.25)
    ref = gl_convolution(f, g, x, 14 * innov.sd)
    np.testing.assert_allclose(h(x), ref, atol=1e-6)


def test_second_order_ma_with_logistic_uses_quadrature():
    phi = MaCoefficients([0.5, -0.3])
    innov = Logistic(1.0)
    g = oracle_g(phi, innov)
    x = np.array([-1.0, 0.0, 2.0])
    a = lambda u: innov.pdf(u / 0.5) / 0.5  # noqa: E731
    c = lambda u: innov.pdf(u / 0.3) / 0.3  # noqa: E731  (symmetric law)
    np.testing.assert_allclose(g(x), gl_convolution(a, c, x, 12.0), atol=1e-8)


def test_mixture_moments_and_density():
    mix = GaussianMixture(0.3, 1.5, 0.4)
    f = oracle_f(mix)
    assert f.mean == pytest.approx(0.0, abs=1e-15)
    assert mix.variance == pytest.approx(0.4 + 0.3 * 1.5**2 / 0.7)
    mass, _ = integrate.quad(f, -15, 15)
    assert mass == pytest.approx(1.0, abs=1e-10)
    fourth, _ = integrate.quad(lambda t: t**4 * f(t), -20, 20, epsabs=1e-12)
    assert mix.fourth_moment == pytest.approx(fourth, rel=1e-9)


def test_logistic_law():
    lg = Logistic(0.5)
    x = np.linspace(-4, 4, 9)
    np.testing.assert_allclose(lg.pdf(x), stats.logistic.pdf(x, scale=0.5), rtol=1e-12)
    h = 1e-6
    np.testing.assert_allclose(lg.dpdf(x), (lg.pdf(x + h) - lg.pdf(x - h)) / (2 * h),
                               atol=1e-8)
    assert lg.variance == pytest.approx(stats.logistic.var(scale=0.5))


def test_ks_distance_at_large_n():
    n = 10**5
    phi = MA1(0.5).ma_coeffs()
    path = sample_path(phi, Gaussian(), n, 20070415)
    h = oracle_h(phi, Gaussian())
    ks = stats.kstest(path.x, h.cdf).statistic
    assert ks < 2 / math.sqrt(n)


def test_path_construction():
    phi = MA1(0.5).ma_coeffs()
    path = sample_path(phi, Gaussian(), 50, 7, (3, 1))
    eps_all = Gaussian().sample(make_rng(7, (3, 1)), 51)
    np.testing.assert_array_equal(path.eps_truth, eps_all[1:])
    np.testing.assert_allclose(path.x, eps_all[1:] + 0.5 * eps_all[:-1], rtol=1e-15)
    np.testing.assert_allclose(path.y_truth, 0.5 * eps_all[:-1], rtol=1e-12, atol=1e-15)


def test_substreams_are_reproducible_and_distinct():
    phi = ARMA11(0.5, 0.3).ma_coeffs()
    a = sample_path(phi, Gaussian(), 100, 1, (100, 0))
    b = sample_path(phi, Gaussian(), 100, 1, (100, 0))
    c = sample_path(phi, Gaussian(), 100, 1, (100, 1))
    np.testing.assert_array_equal(a.x, b.x)
    assert not np.allclose(a.x, c.x)


def test_unsupported_oracles():
    with pytest.raises(UnsupportedOracle):
        oracle_g(MaCoefficients([0.0]), Gaussian())
    with pytest.raises(UnsupportedOracle):
        oracle_g(ARMA11(0.5, 0.3).ma_coeffs(), Logistic(1.0))
    with pytest.raises(UnsupportedOracle):
        oracle_h(MaCoefficients(np.full(13, 0.05)), GaussianMixture())


def test_parse_innovation():
    assert parse_innovation("gaussian:2") == Gaussian(2.0)
    assert parse_innovation("mixture:0.3,1.5,0.4") == GaussianMixture(0.3, 1.5, 0.4)
    with pytest.raises(ValueError):
        parse_innovation("cauchy")
    with pytest.raises(ValueError):
        sample_path(MA1(0.5).ma_coeffs(), Gaussian(), 0, 1)
