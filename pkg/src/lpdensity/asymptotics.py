"""Limit objects behind the n**-1/2 expansion of h-hat, and their checks.

Covers psi_0/psi_1 (densities of phi_tau e_0 and its first-moment
weighting), the functions delta_i, the correction Lambda, the centered
empirical processes F_n and G_n, the remainder of the first-order
expansion, and the limiting covariance for MA(1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate

from .arfit import fit_parametric, pn_rule
from .estimators import bandwidth_rule, conv_estimate, default_grid
from .kernels import build_kernel
from .process import MA1, MaCoefficients, ParametricFamily, process_constants
from .simulate import (Gaussian, Innovation, make_rng, oracle_f, oracle_g, oracle_h,
                       sample_path)

QUAD_SPAN = 10.0
QUAD_TOL = 1e-9
MC_CHUNK = 100_000


def _first_nonzero(phi: MaCoefficients):
    consts = process_constants(phi)
    if consts.tau is None:
        raise ValueError("white noise has no first nonzero coefficient; psi is undefined")
    return consts.tau, float(phi.phi[consts.tau - 1])


def psi_functions(phi: MaCoefficients, innov: Innovation):
    """psi_0 = density of phi_tau e_0 and psi_1(x) = (x / phi_tau) psi_0(x)."""
    _, c = _first_nonzero(phi)
    f = innov.pdf

    def psi0(x):
        x = np.asarray(x, dtype=float)
        return f(x / c) / abs(c)

    def psi1(x):
        x = np.asarray(x, dtype=float)
        return (x / c) * f(x / c) / abs(c)

    return psi0, psi1


@dataclass(frozen=True)
class MonteCarloValue:
    """Pointwise estimate with its standard error (zero for closed forms)."""

    values: np.ndarray
    stderr: np.ndarray
    method: str


class _Moments:
    """Running sum and sum of squares over chunks of iid draws."""

    def __init__(self, shape):
        self.s = np.zeros(shape)
        self.s2 = np.zeros(shape)
        self.count = 0

    def add(self, block):
        # block has draws on axis 0
        self.s += block.sum(axis=0)
        self.s2 += (block * block).sum(axis=0)
        self.count += block.shape[0]

    def result(self, method):
        mean = self.s / self.count
        var = np.maximum(self.s2 / self.count - mean * mean, 0.0)
        return MonteCarloValue(mean, np.sqrt(var / self.count), method)


def _innovation_block(innov, rng, draws, lo, hi):
    """Draws of (e_lo, ..., e_hi); column c holds time lo + c."""
    return innov.sample(rng, (draws, hi - lo + 1))


def delta_i(phi: MaCoefficients, innov: Innovation, i: int, grid, method: str = "auto",
            draws: int = 10**6, seed: int = 0) -> MonteCarloValue:
    """delta_i(x) = 1[i = tau] E psi_1(x - Z_0) + E[X_0 psi_0(x - Z_i)].

    Z_j = sum_{s > tau} phi_s e_{j-s}. With a single nonzero coefficient
    Z vanishes and the closed form is delta_tau = psi_1, delta_i = 0 else.
    """
    if i < 1:
        raise ValueError("i must be a positive integer")
    grid = np.asarray(grid, dtype=float)
    tau, _ = _first_nonzero(phi)
    psi0, psi1 = psi_functions(phi, innov)
    single = process_constants(phi).n_nonzero == 1 and phi.tail_bound == 0.0
    if method == "auto":
        method = "closed" if single else "mc"
    if method == "closed":
        if not single:
            raise ValueError("closed-form delta needs a single nonzero MA coefficient")
        vals = psi1(grid) if i == tau else np.zeros_like(grid)
        return MonteCarloValue(vals, np.zeros_like(grid), "closed")
    if method != "mc":
        raise ValueError("method must be 'auto', 'closed' or 'mc'")
    if phi.tail_bound > 0:
        raise ValueError("Monte Carlo delta supports finite-order MA coefficients only")
    S = phi.order
    coef = np.r_[1.0, phi.phi[:S]]
    lo, hi = -S, max(0, i - tau - 1)
    rng = make_rng(seed, (i,))
    acc = _Moments(grid.shape)
    col = lambda t: t - lo  # noqa: E731
    remaining = draws
    while remaining > 0:
        m = min(MC_CHUNK, remaining)
        E = _innovation_block(innov, rng, m, lo, hi)
        x0 = sum(coef[s] * E[:, col(-s)] for s in range(S + 1))
        zi = sum((coef[s] * E[:, col(i - s)] for s in range(tau + 1, S + 1)), np.zeros(m))
        z0 = sum((coef[s] * E[:, col(-s)] for s in range(tau + 1, S + 1)), np.zeros(m))
        block = x0[:, None] * psi0(grid[None, :] - zi[:, None])
        if i == tau:
            block = block + psi1(grid[None, :] - z0[:, None])
        acc.add(block)
        remaining -= m
    return acc.result("mc")


def _lambda_quad_ma1(theta, innov, x):
    f, df = innov.pdf, innov.dpdf
    L = QUAD_SPAN * innov.sd
    val, _ = integrate.quad(lambda e: e * float(df(x - theta * e)) * float(f(e)), -L, L,
                            epsabs=QUAD_TOL * 1e-1, epsrel=1e-10, limit=400)
    return val


def lambda_fn(family: ParametricFamily, innov: Innovation, grid, method: str = "auto",
              draws: int = 10**6, seed: int = 0, terms: Optional[int] = None) -> MonteCarloValue:
    """Lambda(x) = sum_i rdot_i E[X_0 f'(x - Y_i)], shape (dim, len(grid)).

    For MA(1) this is E[e_0 f'(x - theta e_0)], computed by adaptive
    quadrature; other families (and ``method='mc'``) use Monte Carlo.
    """
    grid = np.asarray(grid, dtype=float)
    if method == "auto":
        method = "quad" if isinstance(family, MA1) else "mc"
    if method == "quad":
        if not isinstance(family, MA1):
            raise ValueError("quadrature Lambda is implemented for MA(1) only")
        vals = np.array([_lambda_quad_ma1(family.theta, innov, x) for x in grid])
        return MonteCarloValue(vals[None, :], np.zeros((1, len(grid))), "quad")
    if method != "mc":
        raise ValueError("method must be 'auto', 'quad' or 'mc'")
    df = innov.dpdf
    if isinstance(family, MA1):
        theta = family.theta
        rng = make_rng(seed, (0,))
        acc = _Moments(grid.shape)
        remaining = draws
        while remaining > 0:
            m = min(MC_CHUNK, remaining)
            e = innov.sample(rng, m)
            acc.add(e[:, None] * df(grid[None, :] - theta * e[:, None]))
            remaining -= m
        res = acc.result("mc")
        return MonteCarloValue(res.values[None, :], res.stderr[None, :], "mc")
    phi = family.ma_coeffs()
    S = len(phi.phi)
    if terms is None:
        grad = family.gradient_coeffs(4 * S + 50)
        big = np.flatnonzero(np.abs(grad).max(axis=1) > 1e-10)
        terms = int(big[-1]) + 1 if big.size else 1
    grad = family.gradient_coeffs(terms)
    coef = np.r_[1.0, phi.phi]
    lo, hi = -S, terms - 1
    col = lambda t: t - lo  # noqa: E731
    rng = make_rng(seed, (1,))
    dim = grad.shape[1]
    acc = _Moments((dim, len(grid)))
    remaining = draws
    chunk = max(1, MC_CHUNK // max(terms, 1))
    while remaining > 0:
        m = min(chunk, remaining)
        E = _innovation_block(innov, rng, m, lo, hi)
        x0 = sum(coef[s] * E[:, col(-s)] for s in range(S + 1))
        block = np.zeros((m, dim, len(grid)))
        for i in range(1, terms + 1):
            yi = sum(coef[s] * E[:, col(i - s)] for s in range(1, S + 1) if i - s >= lo)
            term = x0[:, None] * df(grid[None, :] - yi[:, None])
            block += grad[i - 1][None, :, None] * term[:, None, :]
        acc.add(block)
        remaining -= m
    return acc.result("mc")


def _mean_of(fn, grid, points):
    out = np.empty(len(grid))
    rows = max(1, 2_000_000 // max(len(points), 1))
    for start in range(0, len(grid), rows):
        g = grid[start:start + rows]
        out[start:start + rows] = fn(g[:, None] - points[None, :]).mean(axis=1)
    return out


def empirical_processes(path, p_n: int, grid, f=None, g=None, h=None):
    """Centered averages F_n(x) = mean f(x - Y_j) - h(x), G_n(x) = mean g(x - e_j) - h(x).

    Averages run over j = p_n + 1..n. Both centerings equal h because
    E f(x - Y) = (f * g)(x) = E g(x - e).
    """
    grid = np.asarray(grid, dtype=float)
    eps = getattr(path, "eps_truth", None)
    if eps is None:
        raise ValueError("empirical processes need the true innovations")
    f = f or oracle_f(path.innovation)
    g = g or oracle_g(path.phi, path.innovation)
    h = h or oracle_h(path.phi, path.innovation)
    centre = h(grid)
    F = _mean_of(f, grid, path.y_truth[p_n:]) - centre
    G = _mean_of(g, grid, eps[p_n:]) - centre
    return F, G


def centering_by_quadrature(g, f, x, span: float) -> float:
    """E g(x - e) = integral g(x - e) f(e) de, independent check of the centering."""
    val, _ = integrate.quad(lambda e: float(g(x - e)) * float(f(e)), -span, span,
                            epsabs=QUAD_TOL, epsrel=1e-10, limit=400)
    return val


# -- MA(1) Gaussian checks -----------------------------------------------------

@dataclass
class TheoryConfig:
    theta: float = 0.5
    sigma2: float = 1.0
    m: int = 2
    c: float = 1.0
    n_list: Sequence[int] = (1000, 4000, 16000)
    reps: int = 50
    seed: int = 20070415
    coverage: float = 8.0
    step_fraction: float = 0.1
    ablation: bool = False

    def __post_init__(self):
        self.family = MA1(self.theta)
        self.innov = Gaussian(self.sigma2)
        self.phi = self.family.ma_coeffs()

    @classmethod
    def from_dict(cls, data: dict) -> "TheoryConfig":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class RemainderTable:
    rows: list = field(default_factory=list)

    def by_n(self):
        out = {}
        for row in self.rows:
            out.setdefault(row["n"], []).append(row)
        return out

    def medians(self, key="sqrt_n_sup_remainder"):
        return {n: float(np.median([r[key] for r in rows])) for n, rows in self.by_n().items()}

    def summary(self):
        out = []
        for n, rows in sorted(self.by_n().items()):
            rem = np.array([r["sqrt_n_sup_remainder"] for r in rows])
            err = np.array([r["sqrt_n_sup_error"] for r in rows])
            out.append({
                "n": n, "reps": len(rows),
                "remainder_quantiles": dict(zip(("q10", "q50", "q90"),
                                                np.quantile(rem, [0.1, 0.5, 0.9]).tolist())),
                "error_quantiles": dict(zip(("q10", "q50", "q90"),
                                            np.quantile(err, [0.1, 0.5, 0.9]).tolist())),
            })
        return out


def _ma1_rep(cfg: TheoryConfig, n: int, r: int, route: int):
    path = sample_path(cfg.phi, cfg.innov, n, cfg.seed, (n, r, route))
    p_n = pn_rule(n)
    fit = fit_parametric(path.x, "ma1", p_n)
    return path, p_n, fit


def remainder_check(cfg: TheoryConfig) -> RemainderTable:
    """sqrt(n) sup|h-hat - h - F_n - G_n + (theta-hat - theta) Lambda| per replication."""
    table = RemainderTable()
    if cfg.reps <= 0:
        return table
    k = build_kernel(cfg.m)
    f, g, h = oracle_f(cfg.innov), oracle_g(cfg.phi, cfg.innov), oracle_h(cfg.phi, cfg.innov)
    sd = math.sqrt(process_constants(cfg.phi, cfg.sigma2).variance)
    for n in cfg.n_list:
        b = bandwidth_rule(n, cfg.m, cfg.c)
        grid = default_grid(mean=0.0, sd=sd, coverage=cfg.coverage, step=b * cfg.step_fraction)
        lam = lambda_fn(cfg.family, cfg.innov, grid, "quad").values[0]
        h_grid = h(grid)
        for r in range(cfg.reps):
            path, p_n, fit = _ma1_rep(cfg, n, r, 0)
            if cfg.ablation:
                eps_hat, y_hat, dtheta = path.eps_truth[p_n:], path.y_truth[p_n:], 0.0
            else:
                eps_hat, y_hat = fit.residuals, fit.y_hat
                dtheta = fit.theta_hat[0] - cfg.theta
            hh = conv_estimate(eps_hat, y_hat, k, b, grid, "binned").values
            F, G = empirical_processes(path, p_n, grid, f, g, h)
            R = hh - h_grid - F - G + dtheta * lam
            table.rows.append({
                "n": n, "rep": r,
                "sqrt_n_sup_remainder": math.sqrt(n) * float(np.abs(R).max()),
                "sqrt_n_sup_error": math.sqrt(n) * float(np.abs(hh - h_grid).max()),
            })
    return table


@dataclass(frozen=True)
class CovarianceEstimate:
    estimate: float
    stderr: float
    reps: int


def _cov_with_se(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    prod = (a - a.mean()) * (b - b.mean())
    n = len(prod)
    est = float(prod.sum() / (n - 1))
    se = float(prod.std(ddof=1) / math.sqrt(n))
    return CovarianceEstimate(est, se, n)


def linear_term_ma1(cfg: TheoryConfig, points, n: int, reps: int, route: int = 1) -> np.ndarray:
    """Replications of sqrt(n) (F_n + G_n - (theta-hat - theta) Lambda) at ``points``."""
    points = np.asarray(points, dtype=float)
    f, g, h = oracle_f(cfg.innov), oracle_g(cfg.phi, cfg.innov), oracle_h(cfg.phi, cfg.innov)
    lam = lambda_fn(cfg.family, cfg.innov, points, "quad").values[0]
    out = np.empty((reps, len(points)))
    for r in range(reps):
        path, p_n, fit = _ma1_rep(cfg, n, r, route)
        F, G = empirical_processes(path, p_n, points, f, g, h)
        out[r] = math.sqrt(n) * (F + G - (fit.theta_hat[0] - cfg.theta) * lam)
    return out


def covariance_ma1(cfg: TheoryConfig, s: float, t: float, n: int = 4000, reps: int = 500,
                   ) -> CovarianceEstimate:
    """Monte Carlo Cov(Z_n(s), Z_n(t)) with Z_n the linear part of sqrt(n)(h-hat - h)."""
    if reps < 2:
        raise ValueError("need at least two replications")
    Z = linear_term_ma1(cfg, [s, t], n, reps)
    return _cov_with_se(Z[:, 0], Z[:, 1])


def hhat_pointwise_spread(cfg: TheoryConfig, x: float, n: int = 4000, reps: int = 500,
                          route: int = 2) -> CovarianceEstimate:
    """Replication variance of sqrt(n)(h-hat(x) - h(x)) with a parametric fit."""
    k = build_kernel(cfg.m)
    b = bandwidth_rule(n, cfg.m, cfg.c)
    h0 = float(oracle_h(cfg.phi, cfg.innov)(np.array([x]))[0])
    vals = np.empty(reps)
    for r in range(reps):
        path, p_n, fit = _ma1_rep(cfg, n, r, route)
        est = conv_estimate(fit.residuals, fit.y_hat, k, b, np.array([x]), "binned")
        vals[r] = math.sqrt(n) * (est.values[0] - h0)
    return _cov_with_se(vals, vals)
