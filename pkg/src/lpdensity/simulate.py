"""Innovation laws, seeded sample paths and exact oracle densities."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate

from .process import MaCoefficients, process_constants

MAX_MIXTURE_COMPONENTS = 4096
_SQRT2PI = math.sqrt(2.0 * math.pi)


def make_rng(seed: int, stream: Sequence[int] = ()) -> np.random.Generator:
    """Philox generator for substream ``stream`` of ``seed``.

    Substreams are addressed by ``SeedSequence`` spawn keys, so path
    ``(n, r)`` of a replication set is reproducible on its own.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


class GaussianMixtureDensity:
    """Finite mixture of normal densities, vectorised over x."""

    def __init__(self, weights, means, variances):
        self.weights = np.asarray(weights, dtype=float)
        self.means = np.asarray(means, dtype=float)
        self.variances = np.asarray(variances, dtype=float)

    def _parts(self, x):
        x = np.asarray(x, dtype=float)
        z = x[..., None] - self.means
        dens = self.weights * np.exp(-0.5 * z * z / self.variances) / (
            _SQRT2PI * np.sqrt(self.variances))
        return z, dens

    def __call__(self, x):
        return self._parts(x)[1].sum(axis=-1)

    def deriv(self, x):
        z, dens = self._parts(x)
        return (-z / self.variances * dens).sum(axis=-1)

    @property
    def mean(self) -> float:
        return float(self.weights @ self.means)

    @property
    def variance(self) -> float:
        return float(self.weights @ (self.variances + self.means**2)) - self.mean**2

    def scaled(self, t: float) -> "GaussianMixtureDensity":
        """Density of t * E when E has this density."""
        return GaussianMixtureDensity(self.weights, t * self.means, t * t * self.variances)

    def convolve(self, other: "GaussianMixtureDensity") -> "GaussianMixtureDensity":
        w = np.multiply.outer(self.weights, other.weights).ravel()
        m = np.add.outer(self.means, other.means).ravel()
        v = np.add.outer(self.variances, other.variances).ravel()
        return GaussianMixtureDensity(w, m, v)

    def cdf(self, x):
        from scipy.special import ndtr
        x = np.asarray(x, dtype=float)
        z = (x[..., None] - self.means) / np.sqrt(self.variances)
        return (self.weights * ndtr(z)).sum(axis=-1)


class Innovation:
    """Mean-zero innovation law with density, derivative and sampler."""

    name = "innovation"

    def pdf(self, x):
        raise NotImplementedError

    def dpdf(self, x):
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size):
        raise NotImplementedError

    @property
    def variance(self) -> float:
        raise NotImplementedError

    @property
    def fourth_moment(self) -> float:
        raise NotImplementedError

    @property
    def sd(self) -> float:
        return math.sqrt(self.variance)

    def as_mixture(self) -> Optional[GaussianMixtureDensity]:
        return None

    def spec_string(self) -> str:
        return f"{self.name}:" + ",".join(repr(float(p)) for p in self.params)

    def __eq__(self, other):
        return type(self) is type(other) and self.params == other.params

    def __hash__(self):
        return hash((self.name, self.params))

    def __repr__(self):
        return f"{type(self).__name__}{self.params}"


class Gaussian(Innovation):
    name = "gaussian"

    def __init__(self, sigma2: float = 1.0):
        if not sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        self.sigma2 = float(sigma2)
        self._mix = GaussianMixtureDensity([1.0], [0.0], [self.sigma2])

    @property
    def params(self):
        return (self.sigma2,)

    def pdf(self, x):
        return self._mix(x)

    def dpdf(self, x):
        return self._mix.deriv(x)

    def sample(self, rng, size):
        return math.sqrt(self.sigma2) * rng.standard_normal(size)

    @property
    def variance(self):
        return self.sigma2

    @property
    def fourth_moment(self):
        return 3.0 * self.sigma2**2

    def as_mixture(self):
        return self._mix


class GaussianMixture(Innovation):
    """Two centered-by-construction normal components.

    Weights (w, 1 - w), means (mu, -w mu / (1 - w)), common variance v.
    """

    name = "mixture"

    def __init__(self, w: float = 0.5, mu: float = 1.0, v: float = 0.5):
        if not 0 < w < 1:
            raise ValueError("mixture weight must lie in (0, 1)")
        if not v > 0:
            raise ValueError("component variance must be positive")
        self.w, self.mu, self.v = float(w), float(mu), float(v)
        means = [self.mu, -self.w * self.mu / (1.0 - self.w)]
        self._mix = GaussianMixtureDensity([self.w, 1.0 - self.w], means, [self.v, self.v])

    @property
    def params(self):
        return (self.w, self.mu, self.v)

    def pdf(self, x):
        return self._mix(x)

    def dpdf(self, x):
        return self._mix.deriv(x)

    def sample(self, rng, size):
        comp = rng.random(size) >= self.w
        means = self._mix.means[comp.astype(int)]
        return means + math.sqrt(self.v) * rng.standard_normal(size)

    @property
    def variance(self):
        return self.v + self.w * self.mu**2 / (1.0 - self.w)

    @property
    def fourth_moment(self):
        m, v = self._mix.means, self.v
        return float(self._mix.weights @ (m**4 + 6 * m**2 * v + 3 * v**2))

    def as_mixture(self):
        return self._mix


class Logistic(Innovation):
    name = "logistic"

    def __init__(self, scale: float = 1.0):
        if not scale > 0:
            raise ValueError("logistic scale must be positive")
        self.scale = float(scale)

    @property
    def params(self):
        return (self.scale,)

    def pdf(self, x):
        z = np.abs(np.asarray(x, dtype=float)) / self.scale
        e = np.exp(-z)
        return e / (self.scale * (1.0 + e) ** 2)

    def dpdf(self, x):
        x = np.asarray(x, dtype=float)
        return -self.pdf(x) * np.tanh(x / (2.0 * self.scale)) / self.scale

    def sample(self, rng, size):
        return rng.logistic(0.0, self.scale, size)

    @property
    def variance(self):
        return (math.pi * self.scale) ** 2 / 3.0

    @property
    def fourth_moment(self):
        return 7.0 * math.pi**4 * self.scale**4 / 15.0


def parse_innovation(text: str) -> Innovation:
    """``'gaussian'``, ``'gaussian:2'``, ``'mixture:0.3,1.5,0.4'``, ``'logistic:0.5'``."""
    name, _, rest = text.partition(":")
    params = [float(v) for v in rest.split(",") if v.strip()]
    name = name.strip().lower()
    laws = {"gaussian": Gaussian, "normal": Gaussian, "mixture": GaussianMixture,
            "logistic": Logistic}
    if name not in laws:
        raise ValueError(f"unknown innovation law {name!r}")
    return laws[name](*params)


@dataclass(frozen=True)
class SamplePath:
    """Observations X_1..X_n with the innovations that generated them."""

    x: np.ndarray
    eps_truth: np.ndarray
    phi: MaCoefficients = field(repr=False)
    innovation: Innovation
    seed: int
    stream: tuple = ()

    def __post_init__(self):
        if len(self.x) != len(self.eps_truth):
            raise ValueError("x and eps_truth must have equal length")

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def y_truth(self) -> np.ndarray:
        return self.x - self.eps_truth


def sample_path(phi: MaCoefficients, innov: Innovation, n: int, seed: int,
                stream: Sequence[int] = ()) -> SamplePath:
    """Simulate X_t = e_t + sum_s phi_s e_{t-s} with S pre-sample innovations."""
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    n = int(n)
    S = len(phi.phi)
    rng = make_rng(seed, stream)
    eps = innov.sample(rng, n + S)
    weights = np.r_[1.0, phi.phi]
    if np.any(phi.phi):
        x = np.convolve(eps, weights, mode="valid")
    else:
        x = eps[S:].copy()
    return SamplePath(x, eps[S:], phi, innov, int(seed), tuple(stream))


# -- oracle densities ------------------------------------------------------

class UnsupportedOracle(ValueError):
    pass


class ScaledDensity:
    """Density of t * E: f(x / t) / |t|."""

    def __init__(self, f, t: float, df=None):
        self.f, self.t, self.df = f, float(t), df

    def __call__(self, x):
        return self.f(np.asarray(x, dtype=float) / self.t) / abs(self.t)

    def deriv(self, x):
        return self.df(np.asarray(x, dtype=float) / self.t) / (abs(self.t) * self.t)


class QuadratureConvolution:
    """Pointwise (a * c)(x) = integral a(x - y) c(y) dy by adaptive quadrature."""

    def __init__(self, a, c, c_halfwidth: float, tol: float = 1e-11):
        self.a, self.c, self.L, self.tol = a, c, float(c_halfwidth), tol

    def _one(self, x):
        val, _ = integrate.quad(lambda y: float(self.a(x - y)) * float(self.c(y)),
                                -self.L, self.L, epsabs=self.tol, epsrel=1e-11, limit=400)
        return val

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.array([self._one(v) for v in x.ravel()]).reshape(x.shape)
        return out if out.ndim else float(out)


def oracle_f(innov: Innovation):
    f = innov.as_mixture()
    if f is not None:
        return f
    return _Callable(innov.pdf, innov.dpdf)


class _Callable:
    def __init__(self, fn, dfn=None):
        self.fn, self.dfn = fn, dfn

    def __call__(self, x):
        return self.fn(x)

    def deriv(self, x):
        return self.dfn(x)


def _nonzero_terms(phi: MaCoefficients):
    nz = np.flatnonzero(phi.phi)
    return phi.phi[nz]


def _mixture_of_sum(weights_scales, mix: GaussianMixtureDensity) -> GaussianMixtureDensity:
    n_comp = len(mix.weights) ** len(weights_scales)
    if n_comp > MAX_MIXTURE_COMPONENTS:
        raise UnsupportedOracle(
            f"mixture enumeration needs {n_comp} components (cap {MAX_MIXTURE_COMPONENTS})")
    out = mix.scaled(weights_scales[0])
    for t in weights_scales[1:]:
        out = out.convolve(mix.scaled(t))
    return out


def oracle_g(phi: MaCoefficients, innov: Innovation):
    """Density g of Y_0 = sum_s phi_s e_{-s}."""
    terms = _nonzero_terms(phi)
    if terms.size == 0:
        raise UnsupportedOracle("g is degenerate for white noise (no nonzero phi_s)")
    if isinstance(innov, Gaussian):
        return GaussianMixtureDensity([1.0], [0.0], [innov.sigma2 * float(terms @ terms)])
    mix = innov.as_mixture()
    if mix is not None and phi.tail_bound == 0.0:
        return _mixture_of_sum(terms, mix)
    if phi.tail_bound == 0.0 and terms.size <= 2 and phi.order <= 2:
        f1 = ScaledDensity(innov.pdf, terms[0], innov.dpdf)
        if terms.size == 1:
            return f1
        f2 = ScaledDensity(innov.pdf, terms[1])
        return QuadratureConvolution(f1, f2, 12.0 * abs(terms[1]) * innov.sd)
    raise UnsupportedOracle(
        "no exact g: need Gaussian innovations, a finite-order MA with mixture "
        "innovations, or MA order <= 2")


def oracle_h(phi: MaCoefficients, innov: Innovation):
    """Stationary density h = f * g of X_0."""
    terms = _nonzero_terms(phi)
    if isinstance(innov, Gaussian):
        var = process_constants(phi, innov.sigma2).variance
        return GaussianMixtureDensity([1.0], [0.0], [var])
    if terms.size == 0:
        return oracle_f(innov)
    mix = innov.as_mixture()
    if mix is not None and phi.tail_bound == 0.0:
        return _mixture_of_sum(np.r_[1.0, terms], mix)
    g = oracle_g(phi, innov)
    return QuadratureConvolution(g, innov.pdf, 12.0 * innov.sd)
