"""Autoregression fits, residuals and the differences Y-hat."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
from numpy.lib.stride_tricks import sliding_window_view
from scipy.optimize import brentq

from .process import ARMA11, MA1, AR

GRAM_COND_LIMIT = 1e12
RIDGE_SCALE = 1e-10
MA1_CLAMP = 1.0 - 1e-6


@dataclass(frozen=True)
class ArFit:
    """Fitted rho-hat together with residuals e-hat_j and Y-hat_j = X_j - e-hat_j.

    Residual arrays cover j = p_n + 1, ..., n (1-based), i.e. ``x[p_n:]``.
    """

    p_n: int
    rho_hat: np.ndarray
    residuals: np.ndarray
    y_hat: np.ndarray
    gram_condition: float
    method: str
    theta_hat: Optional[tuple] = None
    ridge: bool = False
    notes: tuple = field(default=())

    def to_dict(self) -> dict:
        return {
            "p_n": self.p_n,
            "rho_hat": [float(r) for r in self.rho_hat],
            "gram_condition": float(self.gram_condition),
            "method": self.method,
            "theta_hat": None if self.theta_hat is None else [float(t) for t in self.theta_hat],
            "ridge": self.ridge,
            "notes": list(self.notes),
        }


def pn_rule(n: int) -> int:
    """ceil(log n * log log n), clamped to [1, n // 4]."""
    if n < 30:
        raise ValueError("pn_rule needs n >= 30")
    p = math.ceil(math.log(n) * math.log(math.log(n)))
    return int(min(max(p, 1), n // 4))


def lag_matrix(x: np.ndarray, p_n: int) -> np.ndarray:
    """Rows (X_{j-1}, ..., X_{j-p_n}) for j = p_n + 1, ..., n."""
    x = np.asarray(x, dtype=float)
    windows = sliding_window_view(x[:-1], p_n)
    return windows[:, ::-1]


def residuals(x: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """e-hat_j = X_j - sum_i rho_i X_{j-i} for j = p + 1, ..., n."""
    x = np.asarray(x, dtype=float)
    rho = np.asarray(rho, dtype=float)
    p = len(rho)
    return x[p:] - lag_matrix(x, p) @ rho


def _make_fit(x, rho, method, gram_condition, theta_hat=None, ridge=False, notes=()):
    x = np.asarray(x, dtype=float)
    rho = np.asarray(rho, dtype=float)
    eps_hat = residuals(x, rho)
    y_hat = x[len(rho):] - eps_hat
    return ArFit(len(rho), rho, eps_hat, y_hat, float(gram_condition), method,
                 theta_hat, ridge, tuple(notes))


def _gram(x, p):
    X = lag_matrix(x, p)
    rows = X.shape[0]
    M = X.T @ X / rows
    rhs = X.T @ np.asarray(x, dtype=float)[p:] / rows
    return M, rhs


def _solve_normal(M, rhs):
    cond = float(np.linalg.cond(M))
    ridge = False
    if not np.isfinite(cond) or cond > GRAM_COND_LIMIT:
        p = M.shape[0]
        M = M + RIDGE_SCALE * np.trace(M) / p * np.eye(p)
        ridge = True
    try:
        sol = scipy.linalg.cho_solve(scipy.linalg.cho_factor(M), rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(M, rhs, rcond=None)[0]
        ridge = True
    return sol, cond, ridge


def fit_least_squares(x, p_n: int) -> ArFit:
    """Least-squares rho-hat over rows j = p_n + 1..n via the sample Gram matrix."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if p_n < 1:
        raise ValueError("p_n must be positive")
    if n - p_n <= p_n:
        raise ValueError(f"need n - p_n > p_n rows, got n={n}, p_n={p_n}")
    M, rhs = _gram(x, p_n)
    rho, cond, ridge = _solve_normal(M, rhs)
    notes = ("ridge fallback: Gram matrix numerically singular",) if ridge else ()
    return _make_fit(x, rho, "ls", cond, ridge=ridge, notes=notes)


def sample_autocorrelation(x, lag: int) -> float:
    """Lag autocorrelation without mean correction (the model mean is zero)."""
    x = np.asarray(x, dtype=float)
    return float(x[lag:] @ x[:-lag] / (x @ x))


def estimate_ma1(x) -> tuple[float, list]:
    """Moment estimator solving r1 = theta / (1 + theta**2), |theta| < 1."""
    r1 = sample_autocorrelation(x, 1)
    notes = []
    if abs(r1) >= 0.5:
        msg = f"|r1| = {abs(r1):.4f} >= 0.5: MA(1) moment equation unsolvable, clamped"
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
        notes.append(msg)
        return math.copysign(MA1_CLAMP, r1), notes
    if r1 == 0.0:
        return 0.0, notes
    return (1.0 - math.sqrt(1.0 - 4.0 * r1 * r1)) / (2.0 * r1), notes


def _arma_r1(alpha, beta):
    return (1 + alpha * beta) * (alpha + beta) / (1 + 2 * alpha * beta + beta * beta)


def estimate_arma11(x) -> tuple[float, float]:
    """alpha-hat = r2 / r1, then beta-hat from the lag-one autocorrelation."""
    r1 = sample_autocorrelation(x, 1)
    r2 = sample_autocorrelation(x, 2)
    if r1 == 0.0:
        raise ValueError("ARMA(1,1) fit failed: r1 = 0")
    alpha = r2 / r1
    if not abs(alpha) < 1:
        raise ValueError(f"ARMA(1,1) fit failed: alpha-hat = {alpha:.4f} outside (-1, 1)")
    lo, hi = -MA1_CLAMP, MA1_CLAMP
    fn = lambda b: _arma_r1(alpha, b) - r1  # noqa: E731
    if fn(lo) * fn(hi) > 0:
        raise ValueError("ARMA(1,1) fit failed: no beta root in (-1, 1)")
    beta = brentq(fn, lo, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps)
    return alpha, beta


def parse_method(method: str):
    """``'ls'``, ``'ma1'``, ``'arma11'`` or ``'ar:p'``."""
    name, _, arg = method.partition(":")
    name = name.lower()
    if name == "ar":
        return "ar", int(arg)
    if name in ("ls", "ma1", "arma11"):
        return name, None
    raise ValueError(f"unknown fit method {method!r}")


def fit_parametric(x, family: str, p_n: int) -> ArFit:
    """Plug-in fit rho-hat_i = r_i(theta-hat), i <= p_n.

    ``family`` is ``'ma1'``, ``'arma11'`` or ``'ar:p'`` (AR uses least
    squares on exactly p lags, padded with zeros up to p_n).
    """
    x = np.asarray(x, dtype=float)
    kind, order = parse_method(family)
    notes = []
    if kind == "ma1":
        theta, notes = estimate_ma1(x)
        theta_hat = (theta,)
        s = np.arange(1, p_n + 1)
        rho = -((-theta) ** s)
    elif kind == "arma11":
        alpha, beta = estimate_arma11(x)
        theta_hat = (alpha, beta)
        rho = ARMA11(alpha, beta)._rho(p_n)
    elif kind == "ar":
        if order < 1 or order > p_n:
            raise ValueError("AR order must satisfy 1 <= p <= p_n")
        M, rhs = _gram(x, order)
        theta, _, _ = _solve_normal(M, rhs)
        theta_hat = tuple(float(t) for t in theta)
        rho = np.zeros(p_n)
        rho[:order] = theta
    else:
        raise ValueError("fit_parametric needs a parametric family, not 'ls'")
    M, _ = _gram(x, p_n)
    return _make_fit(x, rho, family, np.linalg.cond(M), theta_hat, notes=notes)


def fit(x, p_n: int, method: str = "ls") -> ArFit:
    if method == "ls":
        return fit_least_squares(x, p_n)
    return fit_parametric(x, method, p_n)


def method_for_family(family) -> str:
    if isinstance(family, MA1):
        return "ma1"
    if isinstance(family, ARMA11):
        return "arma11"
    if isinstance(family, AR):
        return f"ar:{family.p}"
    raise ValueError(f"no parametric method for {family!r}")


@dataclass(frozen=True)
class ResidualDiagnostics:
    rms: float
    max_abs: float
    mean_dev: float


def residual_diagnostics(fit: ArFit, truth) -> ResidualDiagnostics:
    """Compare e-hat_j with the true innovations over j = p_n + 1..n."""
    eps = np.asarray(getattr(truth, "eps_truth", truth), dtype=float)
    if len(eps) - fit.p_n != len(fit.residuals):
        raise ValueError("fit and truth have incompatible lengths")
    d = fit.residuals - eps[fit.p_n:]
    return ResidualDiagnostics(float(np.sqrt(np.mean(d * d))), float(np.abs(d).max()),
                               float(abs(d.mean())))
