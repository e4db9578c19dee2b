"""Acceptance suite: nine criteria, one PASS/FAIL line each.

Runs the canonical configuration (MA(1), theta = 0.5, standard Gaussian
innovations, m = 2, b_n = n**-1/4, p_n from the log-log rule, pinned seed).
Lines are printed as each check finishes and repeated in the terminal
summary.
"""
import math
import time

import numpy as np
import pytest
from scipy import integrate, stats

from lpdensity.arfit import fit, pn_rule, residual_diagnostics
from lpdensity.asymptotics import TheoryConfig, delta_i, remainder_check
from lpdensity.estimators import bandwidth_rule, conv_estimate
from lpdensity.experiment import (ExperimentConfig, bandwidth_sweep, report_csvs,
                                  run_experiment)
from lpdensity.kernels import build_kernel, self_convolution
from lpdensity.process import ARMA11, MA1, MaCoefficients, invert_ar_to_ma, invert_ma_to_ar
from lpdensity.simulate import Gaussian, GaussianMixture, oracle_f, oracle_g, oracle_h, sample_path

SEED = 20070415
CANONICAL = ExperimentConfig(family="ma1", params=[0.5], innovation="gaussian:1.0",
                             n_list=[1000, 2000, 4000, 8000], reps=100, m=2, c=1.0,
                             estimators=["htilde", "hhat"], seed=SEED)


def verdict(log, number, title, checks, detail=""):
    failed = [name for name, ok in checks.items() if not ok]
    line = f"[{'PASS' if not failed else 'FAIL'}] {number}. {title}"
    if detail:
        line += f" | {detail}"
    if failed:
        line += f" | failed: {', '.join(failed)}"
    print(line)
    log.append(line)
    assert not failed, line


def composite_gl(fn, lo, hi, panels=64, order=32):
    """Integral of fn over [lo, hi] by panel-wise Gauss-Legendre; fn is vectorised over y."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    mid, half = (edges[1:] + edges[:-1]) / 2, (edges[1:] - edges[:-1]) / 2
    y = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    w = (half[:, None] * weights[None, :]).ravel()
    return fn(y) @ w


@pytest.fixture(scope="module")
def canonical_report():
    t0 = time.perf_counter()
    report = run_experiment(CANONICAL, jobs=1)
    return report, time.perf_counter() - t0


def test_1_kernel_suite(acceptance_log):
    t0 = time.perf_counter()
    worst_closed = worst_quad = worst_add = 0.0
    for m in range(1, 7):
        k = build_kernel(m)
        K = self_convolution(k)
        for i in range(0, m + 1):
            target = 1.0 if i == 0 else 0.0
            q, _ = integrate.quad(lambda t: t**i * k(t), -12, 12, epsabs=1e-11, epsrel=1e-10,
                                  limit=200)
            worst_closed = max(worst_closed, abs(k.moment(i) - target))
            worst_quad = max(worst_quad, abs(q - target))
        for i in range(0, m + 3):
            additive = sum(math.comb(i, j) * k.moment(j) * k.moment(i - j) for j in range(i + 1))
            q, _ = integrate.quad(lambda t: t**i * K(t), -17, 17, epsabs=1e-11, epsrel=1e-10,
                                  limit=200)
            worst_add = max(worst_add, abs(K.moment(i) - additive), abs(q - additive))
    elapsed = time.perf_counter() - t0
    verdict(acceptance_log, 1, "kernel moments m=1..6 and self-convolution additivity",
            {"closed form <= 1e-8": worst_closed <= 1e-8, "quadrature <= 1e-8": worst_quad <= 1e-8,
             "additivity <= 1e-8": worst_add <= 1e-8, "runtime < 5 s": elapsed < 5},
            f"max errors {worst_closed:.1e}/{worst_quad:.1e}/{worst_add:.1e}, {elapsed:.2f} s")


def _random_invertible(rng, order):
    roots = []
    while len(roots) < order:
        mod = rng.uniform(1.2, 3.0)
        if order - len(roots) >= 2 and rng.random() < 0.5:
            ang = rng.uniform(0.1, np.pi - 0.1)
            roots += [mod * np.exp(1j * ang), mod * np.exp(-1j * ang)]
        else:
            roots.append(mod * rng.choice([-1.0, 1.0]))
    poly = np.real(np.poly(roots))[::-1]
    return MaCoefficients(poly[1:] / poly[0])


def test_2_inversion_suite(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    S = 200
    worst_rt = 0.0
    for _ in range(50):
        phi = _random_invertible(rng, int(rng.integers(1, 6)))
        back = invert_ar_to_ma(invert_ma_to_ar(phi, S), S).phi
        ref = np.zeros(S)
        ref[:len(phi)] = phi.phi
        worst_rt = max(worst_rt, np.abs(back - ref).max())
    worst_cf = 0.0
    for fam in (MA1(0.5), ARMA11(0.5, 0.3)):
        series = invert_ma_to_ar(MaCoefficients(fam.ma_coeffs(S).phi), S).rho
        worst_cf = max(worst_cf, np.abs(fam.ar_coeffs(S).rho - series).max())
    elapsed = time.perf_counter() - t0
    verdict(acceptance_log, 2, "MA/AR inversion roundtrip and closed forms",
            {"roundtrip <= 1e-10": worst_rt <= 1e-10, "closed form <= 1e-10": worst_cf <= 1e-10,
             "runtime < 5 s": elapsed < 5},
            f"roundtrip {worst_rt:.1e}, closed form {worst_cf:.1e}, {elapsed:.2f} s")


def test_3_oracle_suite(acceptance_log):
    t0 = time.perf_counter()
    phi = MA1(0.5).ma_coeffs()
    x = np.arange(-4.0, 4.0 + 5e-4, 1e-3)
    worst = 0.0
    for innov in (Gaussian(1.0), GaussianMixture(0.3, 1.5, 0.4)):
        f, g, h = oracle_f(innov), oracle_g(phi, innov), oracle_h(phi, innov)
        L = 14 * innov.sd
        ref = np.array([composite_gl(lambda y: f(xi - y) * g(y), -L, L) for xi in x[::25]])
        worst = max(worst, np.abs(h(x[::25]) - ref).max())
        # remaining grid points through one vectorised pass
        nodes, weights = np.polynomial.legendre.leggauss(400)
        y, w = L * nodes, L * weights
        dense = (f(x[:, None] - y[None, :]) * g(y)[None, :]) @ w
        worst = max(worst, np.abs(h(x) - dense).max())
    n = 10**5
    path = sample_path(phi, Gaussian(), n, SEED)
    ks = stats.kstest(path.x, oracle_h(phi, Gaussian()).cdf).statistic
    elapsed = time.perf_counter() - t0
    verdict(acceptance_log, 3, "oracle h = f * g and simulated KS distance",
            {"h vs quadrature <= 1e-6": worst <= 1e-6, "KS < 2/sqrt(n)": ks < 2 / math.sqrt(n),
             "runtime < 30 s": elapsed < 30},
            f"max |h - quad| {worst:.1e}, KS {ks:.4f} vs {2 / math.sqrt(n):.4f}, {elapsed:.1f} s")


def _kernel_density(points, k, b):
    """u -> mean_j k((u - points_j) / b) / b for any array u."""
    def dens(u):
        u = np.asarray(u, dtype=float)
        out = np.empty(u.shape)
        for s in range(0, len(u), 4000):
            out[s:s + 4000] = k((u[s:s + 4000, None] - points[None, :]) / b).mean(axis=1) / b
        return out
    return dens


def test_4_v_statistic_identity(acceptance_log):
    t0 = time.perf_counter()
    k = build_kernel(2)
    n = 500
    b = bandwidth_rule(n, 2)
    grid = np.arange(-4.0, 4.0 + 1e-9, 0.2)
    nodes, weights = np.polynomial.legendre.leggauss(32)
    worst = 0.0
    for seed in range(10):
        path = sample_path(MA1(0.5).ma_coeffs(), Gaussian(), n, SEED + seed)
        ar = fit(path.x, pn_rule(n))
        h_hat = conv_estimate(ar.residuals, ar.y_hat, k, b, grid, "direct").values
        f_hat = _kernel_density(ar.residuals, k, b)
        g_hat = _kernel_density(ar.y_hat, k, b)
        edges = np.linspace(ar.y_hat.min() - 12 * b, ar.y_hat.max() + 12 * b, 81)
        mid, half = (edges[1:] + edges[:-1]) / 2, (edges[1:] - edges[:-1]) / 2
        y = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
        gw = g_hat(y) * (half[:, None] * weights[None, :]).ravel()
        quad = np.array([f_hat(xv - y) @ gw for xv in grid])
        worst = max(worst, float(np.abs(quad - h_hat).max()))
    elapsed = time.perf_counter() - t0
    verdict(acceptance_log, 4, "V-statistic equals quadrature f-hat * g-hat (n=500, 10 seeds)",
            {"sup-norm <= 1e-6": worst <= 1e-6, "runtime < 60 s": elapsed < 60},
            f"max gap {worst:.1e}, {elapsed:.1f} s")


def test_5_rate_experiment(acceptance_log, canonical_report):
    report, elapsed = canonical_report
    s_tilde = report.rate("htilde").slope
    s_hat = report.rate("hhat").slope
    means_ok = all(report.aggregate("hhat", n)["mean"] < report.aggregate("htilde", n)["mean"]
                   for n in CANONICAL.n_list)
    counts_ok = all(a["count"] == CANONICAL.reps for a in report.aggregates)
    medians_ok = True
    for name in ("htilde", "hhat"):
        med = [report.aggregate(name, n)["median"] for n in CANONICAL.n_list]
        medians_ok &= sum(b > a for a, b in zip(med, med[1:])) <= 1
    sweep = bandwidth_sweep(CANONICAL.model_copy(update={"n_list": [4000], "reps": 50}),
                            [0.5, 1.0, 2.0], jobs=1)
    sweep_ok = all(r.aggregate("hhat", 4000)["mean"] < r.aggregate("htilde", 4000)["mean"]
                   for r in sweep.values())
    sweep_txt = ", ".join(f"c={c:g}: {r.aggregate('hhat', 4000)['mean']:.4f} < "
                          f"{r.aggregate('htilde', 4000)['mean']:.4f}" for c, r in sweep.items())
    verdict(acceptance_log, 5, "rate experiment and bandwidth sweep",
            {"slope(h-hat) in [-0.65, -0.38]": -0.65 <= s_hat <= -0.38,
             "slope(h-tilde) in [-0.50, -0.30]": -0.50 <= s_tilde <= -0.30,
             "slope(h-hat) < slope(h-tilde)": s_hat < s_tilde,
             "mean h-hat < mean h-tilde at every n": means_ok,
             "sweep keeps h-hat < h-tilde": sweep_ok,
             "aggregate counts equal reps": counts_ok,
             "medians nonincreasing (one exception allowed)": medians_ok},
            f"slopes h-hat {s_hat:.3f}, h-tilde {s_tilde:.3f}; {sweep_txt}; {elapsed:.0f} s")


def test_6_expansion_remainder(acceptance_log):
    t0 = time.perf_counter()
    table = remainder_check(TheoryConfig(reps=50, seed=SEED))
    rem = table.medians()
    err = table.medians("sqrt_n_sup_error")
    ns = sorted(rem)
    decreasing = all(rem[b] < 1.1 * rem[a] for a, b in zip(ns, ns[1:])) and rem[ns[-1]] < rem[ns[0]]
    stable = err[ns[-1]] >= 0.5 * err[ns[0]]
    elapsed = time.perf_counter() - t0
    verdict(acceptance_log, 6, "first-order expansion remainder",
            {"median sqrt(n) sup|R| decreasing (10% slack)": decreasing,
             "sqrt(n) sup|h-hat - h| not vanishing": stable},
            "remainder " + ", ".join(f"{n}: {rem[n]:.4f}" for n in ns)
            + "; error " + ", ".join(f"{n}: {err[n]:.3f}" for n in ns) + f"; {elapsed:.0f} s")


def test_7_residual_suite(acceptance_log):
    t0 = time.perf_counter()
    phi = MA1(0.5).ma_coeffs()
    ratios, txt = {}, []
    for method in ("ls", "ma1"):
        vals = []
        for n in (10**3, 10**4, 10**5):
            p_n = pn_rule(n)
            per_rep = []
            for r in range(5):
                path = sample_path(phi, Gaussian(), n, SEED, (n, r))
                d = residual_diagnostics(fit(path.x, p_n, method), path)
                per_rep.append(math.sqrt(n) * d.rms / math.sqrt(p_n))
            vals.append(float(np.median(per_rep)))
        ratios[method] = max(vals) / min(vals)
        txt.append(f"{method}: " + "/".join(f"{v:.3f}" for v in vals))
    elapsed = time.perf_counter() - t0
    verdict(acceptance_log, 7, "residual accuracy scales as sqrt(p_n / n)",
            {"LS ratio <= 3": ratios["ls"] <= 3, "parametric ratio <= 3": ratios["ma1"] <= 3,
             "runtime < 60 s": elapsed < 60},
            "; ".join(txt) + f"; ratios {ratios['ls']:.2f}, {ratios['ma1']:.2f}; {elapsed:.1f} s")


def test_8_delta_sparsity(acceptance_log):
    t0 = time.perf_counter()
    phi = MA1(0.5).ma_coeffs()
    grid = np.linspace(-3, 3, 25)
    sparse = max(np.abs(delta_i(phi, Gaussian(), i, grid).values).max() for i in (2, 3, 4))
    psi1 = (grid / 0.5) * stats.norm.pdf(grid / 0.5) / 0.5
    d1_gap = np.abs(delta_i(phi, Gaussian(), 1, grid).values - psi1).max()
    worst_z = 0.0
    for i in (1, 2, 3, 4):
        closed = delta_i(phi, Gaussian(), i, grid, "closed").values
        mc = delta_i(phi, Gaussian(), i, grid, "mc", draws=10**6, seed=SEED)
        worst_z = max(worst_z, float((np.abs(mc.values - closed) / mc.stderr).max()))
    elapsed = time.perf_counter() - t0
    verdict(acceptance_log, 8, "MA(1) delta_i sparsity",
            {"sup|delta_i| < 1e-6 for i=2,3,4": sparse < 1e-6,
             "delta_1 = psi_1 to 1e-8": d1_gap <= 1e-8,
             "Monte Carlo within 3 SE": worst_z < 3, "runtime < 60 s": elapsed < 60},
            f"sparse {sparse:.1e}, delta_1 gap {d1_gap:.1e}, max z {worst_z:.2f}, {elapsed:.1f} s")


def test_9_determinism(acceptance_log, canonical_report):
    report, _ = canonical_report
    t0 = time.perf_counter()
    rerun = run_experiment(CANONICAL, jobs=2)
    first, second = report_csvs(report), report_csvs(rerun)
    same = {name: first[name].encode() == second[name].encode() for name in first}
    elapsed = time.perf_counter() - t0
    verdict(acceptance_log, 9, "byte-identical CSV across worker counts (1 vs 2)",
            {f"{name} identical": ok for name, ok in same.items()},
            f"rerun {elapsed:.0f} s")
