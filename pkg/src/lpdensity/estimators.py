"""Kernel, residual-based and convolution density estimators.

The convolution estimator h-hat = f-hat * g-hat is evaluated as the
V-statistic

    h-hat(x) = (n - p_n)**-2 sum_i sum_j K_b(x - e-hat_i - Y-hat_j),

with K = k * k. The direct double sum is the reference path. The binned
path linearly bins both point sets on a common lattice of width ``b /
bin_fraction``, convolves the two weight vectors to get the binned
distribution of all pairwise sums, and then runs one kernel pass.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .kernels import Kernel, self_convolution

DIRECT_BUDGET = 5e7
CHUNK_ELEMENTS = 2_000_000
DEFAULT_BIN_FRACTION = 50


@dataclass(frozen=True)
class DensityEstimate:
    grid: np.ndarray
    values: np.ndarray
    bandwidth: float
    kind: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.grid) != len(self.values):
            raise ValueError("grid and values must have equal length")
        if len(self.grid) > 1 and not np.all(np.diff(self.grid) > 0):
            raise ValueError("grid must be strictly increasing")

    def mass(self) -> float:
        return float(np.trapezoid(self.values, self.grid))


def bandwidth_rule(n: int, m: int, c: float = 1.0) -> float:
    """c * n**(-1 / (2m))."""
    if n <= 0 or m <= 0 or c <= 0:
        raise ValueError("bandwidth_rule needs positive n, m and c")
    return c * n ** (-1.0 / (2 * m))


def parse_grid(text: str) -> np.ndarray:
    """``'lo:hi:step'`` -> lo, lo + step, ... up to hi inclusive."""
    lo, hi, step = (float(v) for v in text.split(":"))
    if step <= 0 or hi <= lo:
        raise ValueError("grid needs lo < hi and step > 0")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count)


def default_grid(data=None, *, mean: Optional[float] = None, sd: Optional[float] = None,
                 coverage: float = 8.0, step: float = 0.01) -> np.ndarray:
    """Symmetric grid about the mean spanning +-coverage standard deviations.

    Pass observations as ``data`` or the moments directly as ``mean``/``sd``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if coverage < 4:
        raise ValueError("coverage must be at least 4 standard deviations")
    if data is not None:
        data = np.asarray(data, dtype=float)
        mean = float(data.mean())
        sd = float(data.std())
    if mean is None or sd is None:
        raise ValueError("need data or both mean and sd")
    if not sd > 0:
        raise ValueError("standard deviation is zero; cannot size the grid")
    count = int(math.floor(2.0 * coverage * sd / step)) + 1
    return mean + step * (np.arange(count) - (count - 1) / 2.0)


def _pairwise_kernel_sum(grid, points, kern: Callable, b: float) -> np.ndarray:
    """sum_j kern_b(grid_g - points_j) for every g, fixed index-order summation."""
    grid = np.asarray(grid, dtype=float)
    points = np.asarray(points, dtype=float)
    out = np.empty(len(grid))
    rows = max(1, CHUNK_ELEMENTS // max(len(points), 1))
    for start in range(0, len(grid), rows):
        g = grid[start:start + rows]
        out[start:start + rows] = kern((g[:, None] - points[None, :]) / b).sum(axis=1)
    return out / b


def kde(points, k: Kernel, b: float, grid, kind: str = "h_tilde",
        meta: Optional[dict] = None) -> DensityEstimate:
    """(1 / |points|) sum_j k_b(x - point_j) on the grid."""
    points = np.asarray(points, dtype=float)
    if points.size == 0:
        raise ValueError("kde needs at least one point")
    if not b > 0:
        raise ValueError("bandwidth must be positive")
    grid = np.asarray(grid, dtype=float)
    values = _pairwise_kernel_sum(grid, points, k.eval, b) / points.size
    meta = dict(meta or {})
    meta.setdefault("n_points", int(points.size))
    meta.setdefault("m", k.order_m)
    return DensityEstimate(grid, values, float(b), kind, meta)


def _linear_bin(points: np.ndarray, delta: float):
    """Linear binning on the lattice delta * Z; returns (first index, weights)."""
    u = points / delta
    lo = np.floor(u)
    frac = u - lo
    idx = lo.astype(np.int64)
    first = int(idx.min())
    idx -= first
    w = np.zeros(int(idx.max()) + 2)
    np.add.at(w, idx, 1.0 - frac)
    np.add.at(w, idx + 1, frac)
    return first, w, idx, frac


def _binned_pair_sum(grid, a, c, kern: Callable, b: float, bin_fraction: float,
                     exclude_diagonal: bool = False) -> np.ndarray:
    """Approximate sum_{i,j} kern_b(x - a_i - c_j) through binned pair sums."""
    delta = b / bin_fraction
    fa, wa, ia, ra = _linear_bin(a, delta)
    fc, wc, ic, rc = _linear_bin(c, delta)
    w = np.convolve(wa, wc)
    if exclude_diagonal:
        base = ia + ic
        np.add.at(w, base, -(1 - ra) * (1 - rc))
        np.add.at(w, base + 1, -((1 - ra) * rc + ra * (1 - rc)))
        np.add.at(w, base + 2, -ra * rc)
    keep = np.flatnonzero(w)
    nodes = delta * (fa + fc + keep)
    return _weighted_kernel_sum(grid, nodes, w[keep], kern, b)


def _weighted_kernel_sum(grid, nodes, weights, kern, b):
    out = np.empty(len(grid))
    rows = max(1, CHUNK_ELEMENTS // max(len(nodes), 1))
    for start in range(0, len(grid), rows):
        g = grid[start:start + rows]
        out[start:start + rows] = kern((g[:, None] - nodes[None, :]) / b) @ weights
    return out / b


def _direct_pair_sum(grid, a, c, kern, b, exclude_diagonal=False):
    out = np.empty(len(grid))
    for g, x in enumerate(grid):
        t = ((x - a)[:, None] - c[None, :]) / b
        vals = kern(t)
        if exclude_diagonal:
            np.fill_diagonal(vals, 0.0)
        out[g] = vals.sum()
    return out / b


def _choose_method(method, n_pairs, n_grid):
    if method == "auto":
        return "direct" if n_pairs * n_grid <= DIRECT_BUDGET else "binned"
    if method not in ("direct", "binned"):
        raise ValueError("method must be 'auto', 'direct' or 'binned'")
    return method


def conv_estimate(eps_hat, y_hat, k: Kernel, b: float, grid, method: str = "auto",
                  bin_fraction: float = DEFAULT_BIN_FRACTION,
                  meta: Optional[dict] = None) -> DensityEstimate:
    """The V-statistic h-hat with kernel K = k * k (diagonal included)."""
    eps_hat = np.asarray(eps_hat, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if len(eps_hat) != len(y_hat):
        raise ValueError("eps_hat and y_hat must have equal length")
    if len(eps_hat) < 2:
        raise ValueError("need at least two residuals")
    if not b > 0:
        raise ValueError("bandwidth must be positive")
    grid = np.asarray(grid, dtype=float)
    K = self_convolution(k)
    N = len(eps_hat)
    method = _choose_method(method, N * N, len(grid))
    if method == "direct":
        total = _direct_pair_sum(grid, eps_hat, y_hat, K.eval, b)
    else:
        total = _binned_pair_sum(grid, eps_hat, y_hat, K.eval, b, bin_fraction)
    meta = dict(meta or {})
    meta.update(n_points=N, m=k.order_m, path=method)
    return DensityEstimate(grid, total / (N * N), float(b), "h_hat", meta)


def h_sw_ustat(eps_hat, theta_hat: float, k: Kernel, b: float, grid, method: str = "auto",
               bin_fraction: float = DEFAULT_BIN_FRACTION,
               meta: Optional[dict] = None) -> DensityEstimate:
    """U-statistic sum_{i != j} k_b(x - e_i - theta e_j) / (N (N - 1)) for MA(1)."""
    eps_hat = np.asarray(eps_hat, dtype=float)
    N = len(eps_hat)
    if N < 2:
        raise ValueError("need at least two residuals")
    if not b > 0:
        raise ValueError("bandwidth must be positive")
    grid = np.asarray(grid, dtype=float)
    scaled = theta_hat * eps_hat
    method = _choose_method(method, N * N, len(grid))
    if method == "direct":
        total = _direct_pair_sum(grid, eps_hat, scaled, k.eval, b, exclude_diagonal=True)
    else:
        total = _binned_pair_sum(grid, eps_hat, scaled, k.eval, b, bin_fraction,
                                 exclude_diagonal=True)
    meta = dict(meta or {})
    meta.update(n_points=N, m=k.order_m, path=method, theta_hat=float(theta_hat))
    return DensityEstimate(grid, total / (N * (N - 1)), float(b), "h_sw", meta)


def sup_error(est: DensityEstimate, oracle: Callable) -> float:
    """max over the grid of |estimate - oracle|."""
    return float(np.max(np.abs(est.values - np.asarray(oracle(est.grid), dtype=float))))


ESTIMATORS = ("htilde", "hhat", "fhat", "ghat", "hsw")


def estimate(kind: str, x, fit, k: Kernel, b: float, grid, method: str = "auto",
             bin_fraction: float = DEFAULT_BIN_FRACTION) -> DensityEstimate:
    """Dispatch by estimator name; ``fit`` is an ArFit (unused for htilde)."""
    x = np.asarray(x, dtype=float)
    meta = {"n": int(len(x)), "p_n": None if fit is None else fit.p_n, "m": k.order_m}
    if kind == "htilde":
        return kde(x, k, b, grid, "h_tilde", meta)
    if fit is None:
        raise ValueError(f"{kind} needs an autoregression fit")
    if kind == "fhat":
        return kde(fit.residuals, k, b, grid, "f_hat", meta)
    if kind == "ghat":
        return kde(fit.y_hat, k, b, grid, "g_hat", meta)
    if kind == "hhat":
        return conv_estimate(fit.residuals, fit.y_hat, k, b, grid, method, bin_fraction, meta)
    if kind == "hsw":
        if fit.theta_hat is None or len(fit.theta_hat) != 1:
            raise ValueError("hsw needs an MA(1) parametric fit")
        return h_sw_ustat(fit.residuals, fit.theta_hat[0], k, b, grid, method,
                          bin_fraction, meta)
    raise ValueError(f"unknown estimator {kind!r}; choose from {ESTIMATORS}")
