"""Coefficient sequences of invertible linear processes.

Moving-average coefficients ``phi_1, phi_2, ...`` (with phi_0 = 1) and
autoregressive coefficients ``rho_1, rho_2, ...`` are related by
``(1 - sum rho_s z**s) (1 + sum phi_s z**s) = 1``. The three parametric
families AR(p), MA(1) and ARMA(1,1) have closed forms for both.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.signal import lfilter

INVERTIBILITY_MARGIN = 1e-9
DEFAULT_TAIL_TOL = 1e-12
MAX_TRUNCATION = 10_000


@dataclass(frozen=True)
class MaCoefficients:
    """Truncated MA(infinity) coefficients phi_1..phi_S."""

    phi: np.ndarray
    tail_bound: float = 0.0

    def __post_init__(self):
        phi = np.atleast_1d(np.asarray(self.phi, dtype=float))
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        if self.tail_bound < 0:
            raise ValueError("tail_bound must be nonnegative")

    def __len__(self):
        return len(self.phi)

    @property
    def order(self) -> int:
        """Index of the last nonzero coefficient (0 for white noise)."""
        nz = np.flatnonzero(self.phi)
        return int(nz[-1]) + 1 if nz.size else 0


@dataclass(frozen=True)
class ArCoefficients:
    """Truncated AR(infinity) coefficients rho_1..rho_S."""

    rho: np.ndarray
    tail_bound: float = 0.0

    def __post_init__(self):
        rho = np.atleast_1d(np.asarray(self.rho, dtype=float))
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)
        if self.tail_bound < 0:
            raise ValueError("tail_bound must be nonnegative")

    def __len__(self):
        return len(self.rho)


def _series_tail(coeffs_fn, S: int) -> float:
    """Numerical tail sum of |c_s| for s > S, by extending the series."""
    extra = max(4 * S, 200)
    c = coeffs_fn(S + extra)
    return float(np.abs(c[S:]).sum())


class ParametricFamily:
    """Base class of the parametric models; subclasses are immutable."""

    name = "family"

    @property
    def params(self) -> tuple:
        raise NotImplementedError

    def validate(self) -> None:
        raise NotImplementedError

    def _phi(self, S: int) -> np.ndarray:
        raise NotImplementedError

    def _rho(self, S: int) -> np.ndarray:
        raise NotImplementedError

    def _phi_tail(self, S: int) -> float:
        return _series_tail(self._phi, S)

    def _rho_tail(self, S: int) -> float:
        return _series_tail(self._rho, S)

    def gradient_coeffs(self, S: int) -> np.ndarray:
        """Gradients of rho_s with respect to the parameter, shape (S, dim)."""
        raise NotImplementedError

    def ma_coeffs(self, S: Optional[int] = None) -> MaCoefficients:
        self.validate()
        S = self.default_truncation() if S is None else _check_count(S)
        return MaCoefficients(self._phi(S), self._phi_tail(S))

    def ar_coeffs(self, S: Optional[int] = None) -> ArCoefficients:
        self.validate()
        S = self.default_truncation() if S is None else _check_count(S)
        return ArCoefficients(self._rho(S), self._rho_tail(S))

    def default_truncation(self, tol: float = DEFAULT_TAIL_TOL) -> int:
        """Smallest S whose MA tail bound is below ``tol`` (capped)."""
        self.validate()
        S = 1
        while S < MAX_TRUNCATION:
            if self._phi_tail(S) < tol:
                return S
            S = S + 1 if S < 64 else int(S * 1.25)
        return MAX_TRUNCATION

    def spec_string(self) -> str:
        return f"{self.name}:" + ",".join(repr(float(p)) for p in self.params)

    def __eq__(self, other):
        return type(self) is type(other) and self.params == other.params

    def __hash__(self):
        return hash((type(self).__name__, self.params))

    def __repr__(self):
        return f"{type(self).__name__}{self.params}"


def _check_count(S) -> int:
    if int(S) != S or S < 1:
        raise ValueError("coefficient count must be a positive integer")
    return int(S)


class MA1(ParametricFamily):
    """X_t = e_t + theta e_{t-1}."""

    name = "ma1"

    def __init__(self, theta: float):
        self.theta = float(theta)

    @property
    def params(self):
        return (self.theta,)

    def validate(self):
        if not abs(self.theta) < 1:
            raise ValueError(f"MA(1) requires |theta| < 1, got {self.theta}")
        if self.theta == 0:
            raise ValueError("MA(1) requires theta != 0")

    def _phi(self, S):
        phi = np.zeros(S)
        phi[0] = self.theta
        return phi

    def _phi_tail(self, S):
        return 0.0

    def _rho(self, S):
        s = np.arange(1, S + 1)
        return -((-self.theta) ** s)

    def _rho_tail(self, S):
        a = abs(self.theta)
        return a ** (S + 1) / (1 - a)

    def default_truncation(self, tol=DEFAULT_TAIL_TOL):
        self.validate()
        return 1

    def gradient_coeffs(self, S):
        self.validate()
        s = np.arange(1, _check_count(S) + 1)
        return (s * (-self.theta) ** (s - 1)).reshape(-1, 1)


class ARMA11(ParametricFamily):
    """X_t = alpha X_{t-1} + e_t + beta e_{t-1}."""

    name = "arma11"

    def __init__(self, alpha: float, beta: float):
        self.alpha = float(alpha)
        self.beta = float(beta)

    @property
    def params(self):
        return (self.alpha, self.beta)

    def validate(self):
        if not abs(self.alpha) < 1:
            raise ValueError(f"ARMA(1,1) requires |alpha| < 1, got {self.alpha}")
        if not abs(self.beta) < 1:
            raise ValueError(f"ARMA(1,1) requires |beta| < 1, got {self.beta}")
        if self.alpha + self.beta == 0:
            raise ValueError("ARMA(1,1) requires alpha + beta != 0")

    def _phi(self, S):
        s = np.arange(1, S + 1)
        return (self.alpha + self.beta) * self.alpha ** (s - 1)

    def _phi_tail(self, S):
        a = abs(self.alpha)
        return abs(self.alpha + self.beta) * a**S / (1 - a)

    def _rho(self, S):
        s = np.arange(1, S + 1)
        return (self.alpha + self.beta) * (-self.beta) ** (s - 1)

    def _rho_tail(self, S):
        b = abs(self.beta)
        return abs(self.alpha + self.beta) * b**S / (1 - b)

    def gradient_coeffs(self, S):
        self.validate()
        s = np.arange(1, _check_count(S) + 1).astype(float)
        a, b = self.alpha, self.beta
        d_alpha = (-b) ** (s - 1)
        # (s-1) * alpha * (-beta)**(s-2) vanishes at s = 1; avoid 0 * inf at beta = 0
        prev = np.where(s >= 2, (-b) ** np.maximum(s - 2, 0), 0.0)
        d_beta = -(s - 1) * a * prev + s * (-b) ** (s - 1)
        return np.column_stack([d_alpha, d_beta])


class AR(ParametricFamily):
    """X_t = theta_1 X_{t-1} + ... + theta_p X_{t-p} + e_t."""

    name = "ar"

    def __init__(self, *theta: float):
        if len(theta) == 1 and np.ndim(theta[0]) == 1:
            theta = tuple(theta[0])
        if not theta:
            raise ValueError("AR(p) needs at least one coefficient")
        self.theta = tuple(float(t) for t in theta)

    @property
    def p(self) -> int:
        return len(self.theta)

    @property
    def params(self):
        return self.theta

    def validate(self):
        if self.theta[-1] == 0:
            raise ValueError("AR(p) requires theta_p != 0")
        roots = np.roots(np.r_[-np.asarray(self.theta)[::-1], 1.0])
        if np.any(np.abs(roots) <= 1 + INVERTIBILITY_MARGIN):
            raise ValueError("AR polynomial has a root in the closed unit disk")

    def _phi(self, S):
        return invert_ar_to_ma(ArCoefficients(self._rho(S)), S).phi

    def _rho(self, S):
        rho = np.zeros(S)
        k = min(S, self.p)
        rho[:k] = self.theta[:k]
        return rho

    def _rho_tail(self, S):
        return float(np.abs(self.theta[S:]).sum()) if S < self.p else 0.0

    def gradient_coeffs(self, S):
        self.validate()
        S = _check_count(S)
        grad = np.zeros((S, self.p))
        for i in range(min(S, self.p)):
            grad[i, i] = 1.0
        return grad


def parse_family(text: str, params=None) -> ParametricFamily:
    """Build a family from ``'ma1:0.5'`` or ``('arma11', [0.5, 0.3])``."""
    if params is None:
        name, _, rest = text.partition(":")
        params = [float(v) for v in rest.split(",") if v.strip()]
    else:
        name = text
        params = [float(v) for v in np.atleast_1d(params)]
    name = name.strip().lower()
    if name in ("ma1", "ma(1)"):
        fam = MA1(*params)
    elif name in ("arma11", "arma(1,1)"):
        fam = ARMA11(*params)
    elif name in ("ar", "arp"):
        fam = AR(*params)
    else:
        raise ValueError(f"unknown family {name!r}")
    fam.validate()
    return fam


def ma_coeffs(fam: ParametricFamily, S: Optional[int] = None) -> MaCoefficients:
    return fam.ma_coeffs(S)


def ar_coeffs(fam: ParametricFamily, S: Optional[int] = None) -> ArCoefficients:
    return fam.ar_coeffs(S)


def gradient_coeffs(fam: ParametricFamily, S: int):
    """Gradients rdot_1..rdot_S and their squared-norm sum."""
    grad = fam.gradient_coeffs(S)
    return grad, float((grad**2).sum())


def _impulse(denominator: np.ndarray, S: int) -> np.ndarray:
    # coefficients of 1 / denominator(z) up to z**S
    impulse = np.zeros(S + 1)
    impulse[0] = 1.0
    return lfilter([1.0], denominator, impulse)


def _geometric_tail(c: np.ndarray, rate: float, S: int) -> float:
    if rate >= 1.0:
        return math.inf
    if rate == 0.0 or not np.any(c):
        return 0.0
    # bound the tail by continuing |c| at the observed decay rate
    window = np.abs(c[max(0, S - 8):S])
    scale = window.max() if window.size else 0.0
    return float(scale * rate / (1.0 - rate))


def invert_ma_to_ar(phi: MaCoefficients, S: int) -> ArCoefficients:
    """rho_k = phi_k - sum_{j<k} rho_j phi_{k-j}, from rho(z) phi(z) = 1."""
    S = _check_count(S)
    report = check_invertibility(phi)
    if not report.invertible:
        raise ValueError("moving-average polynomial is not invertible "
                         f"(min root modulus {report.min_root_modulus:.6g})")
    rho = -_impulse(np.r_[1.0, phi.phi], S)[1:]
    rate = 1.0 / report.min_root_modulus if np.isfinite(report.min_root_modulus) else 0.0
    return ArCoefficients(rho, _geometric_tail(rho, rate, S))


def invert_ar_to_ma(rho: ArCoefficients, S: int) -> MaCoefficients:
    """phi_k = rho_k + sum_{j<k} phi_{k-j} rho_j, from phi(z) = 1 / rho(z)."""
    S = _check_count(S)
    poly = np.r_[1.0, -rho.rho]
    phi = _impulse(poly, S)[1:]
    nz = np.flatnonzero(rho.rho)
    if nz.size:
        roots = np.roots(poly[: nz[-1] + 2][::-1])
        min_mod = np.abs(roots).min()
        if min_mod <= 1 + INVERTIBILITY_MARGIN:
            raise ValueError("autoregressive polynomial has a root in the closed unit disk")
        tail = _geometric_tail(phi, 1.0 / min_mod, S)
    else:
        tail = 0.0
    return MaCoefficients(phi, tail)


@dataclass(frozen=True)
class InvertibilityReport:
    invertible: bool
    min_root_modulus: float
    min_abs_on_circle: float
    roots: np.ndarray = field(repr=False)
    white_noise: bool = False


def check_invertibility(phi: MaCoefficients, n_circle: int = 4096) -> InvertibilityReport:
    """Root test on the truncated polynomial 1 + sum phi_s z**s.

    White noise (all phi zero) counts as invertible; ``white_noise`` flags
    that the non-degeneracy condition fails.
    """
    order = phi.order
    z = np.exp(2j * np.pi * np.arange(n_circle) / n_circle)
    if order == 0:
        return InvertibilityReport(True, math.inf, 1.0, np.array([]), white_noise=True)
    coeffs = np.r_[1.0, phi.phi[:order]]
    roots = np.roots(coeffs[::-1])
    min_mod = float(np.abs(roots).min())
    on_circle = float(np.abs(np.polynomial.polynomial.polyval(z, coeffs)).min())
    return InvertibilityReport(min_mod > 1 + INVERTIBILITY_MARGIN, min_mod, on_circle, roots)


@dataclass(frozen=True)
class ProcessConstants:
    variance: float
    n_nonzero: int
    tau: Optional[int]

    @property
    def white_noise(self) -> bool:
        return self.n_nonzero == 0


def process_constants(phi: MaCoefficients, sigma2: float = 1.0) -> ProcessConstants:
    """Stationary variance, number N of nonzero phi_s and first index tau."""
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    nz = np.flatnonzero(phi.phi)
    variance = sigma2 * (1.0 + float(np.dot(phi.phi, phi.phi)))
    tau = int(nz[0]) + 1 if nz.size else None
    return ProcessConstants(variance, int(nz.size), tau)


def ar_tail_sum(rho: np.ndarray, p_n: int) -> float:
    """Direct sum of |rho_s| over s > p_n for a truncated sequence."""
    return float(np.abs(np.asarray(rho)[p_n:]).sum())
