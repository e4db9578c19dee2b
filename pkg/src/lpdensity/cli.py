"""Command-line entry point: ``lpdensity <subcommand>``."""
from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click
import numpy as np
from pydantic import ValidationError

from . import asymptotics as asy
from .arfit import fit as fit_series, pn_rule
from .estimators import ESTIMATORS, bandwidth_rule, default_grid, estimate as run_estimate, parse_grid
from .experiment import (ExperimentAborted, ExperimentConfig, bandwidth_sweep, emit_report,
                         run_experiment, sweep_summary)
from .kernels import build_kernel, self_convolution
from .process import check_invertibility, parse_family
from .simulate import UnsupportedOracle, parse_innovation, sample_path


def _write_csv(path, header, rows):
    fh = open(path, "w", newline="") if path else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    finally:
        if path:
            fh.close()


def _emit_json(obj, path=None):
    text = json.dumps(obj, indent=2)
    if path:
        Path(path).write_text(text + "\n")
    else:
        click.echo(text)


def _read_series(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "x" not in rows[0]:
        raise click.BadParameter(f"{path} needs a header with column 'x'")
    return np.array([float(r["x"]) for r in rows])


def _parse_params(text):
    return [float(v) for v in text.split(",")] if text else None


def _pn(value: str, n: int) -> int:
    return pn_rule(n) if value == "auto" else int(value)


@click.group()
def main():
    """Density estimation for sums of linear-process components."""


@main.command()
@click.option("--order", "m", type=int, required=True, help="kernel order m")
@click.option("--grid", "grid_spec", default="-6:6:0.01", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def kernel(m, grid_spec, out):
    """Tabulate k, k', k'' and K = k * k."""
    k = build_kernel(m)
    K = self_convolution(k)
    x = parse_grid(grid_spec)
    cols = (x, k(x), k(x, 1), k(x, 2), K(x))
    _write_csv(out, ("x", "k", "k_prime", "k_double_prime", "K_selfconv"), zip(*cols))


@main.command()
@click.option("--family", required=True, help="ma1 | arma11 | ar")
@click.option("--params", required=True, help="comma-separated parameters")
@click.option("--count", "S", type=int, default=20, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def coeffs(family, params, S, out):
    """MA coefficients phi_s and AR coefficients rho_s for s = 1..S."""
    fam = parse_family(family, _parse_params(params))
    phi = np.zeros(S)
    src = fam.ma_coeffs(S).phi[:S]
    phi[:len(src)] = src
    rho = fam.ar_coeffs(S).rho[:S]
    _write_csv(out, ("s", "phi", "rho"), ((s + 1, phi[s], rho[s]) for s in range(S)))
    rep = check_invertibility(fam.ma_coeffs(S))
    if not rep.invertible:
        click.echo(f"warning: not invertible (min root modulus {rep.min_root_modulus})", err=True)


@main.command()
@click.option("--family", required=True)
@click.option("--params", default=None)
@click.option("--innov", default="gaussian:1.0", show_default=True)
@click.option("--n", type=int, required=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--with-truth", is_flag=True, help="add the true innovations as column eps")
def simulate(family, params, innov, n, seed, out, with_truth):
    """Write a simulated path, one observation per line."""
    fam = parse_family(family, _parse_params(params))
    path = sample_path(fam.ma_coeffs(), parse_innovation(innov), n, seed)
    if with_truth:
        _write_csv(out, ("x", "eps"), zip(path.x, path.eps_truth))
    else:
        _write_csv(out, ("x",), ((v,) for v in path.x))


@main.command()
@click.option("--in", "src", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--pn", default="auto", show_default=True)
@click.option("--method", default="ls", show_default=True, help="ls | ma1 | ar:p | arma11")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="JSON destination")
@click.option("--residuals", type=click.Path(dir_okay=False), default=None,
              help="also write (j, eps_hat, y_hat) CSV")
def fit(src, pn, method, out, residuals):
    """Fit an autoregression and report rho-hat."""
    x = _read_series(src)
    p_n = _pn(pn, len(x))
    ar = fit_series(x, p_n, method)
    _emit_json(ar.to_dict(), out)
    if residuals:
        j = np.arange(p_n + 1, len(x) + 1)
        _write_csv(residuals, ("j", "eps_hat", "y_hat"),
                   zip(j.tolist(), ar.residuals, ar.y_hat))


@main.command()
@click.option("--in", "src", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--estimator", type=click.Choice(ESTIMATORS), required=True)
@click.option("--m", type=int, default=2, show_default=True)
@click.option("--bandwidth", default="auto", show_default=True, help="auto | positive number")
@click.option("--grid", "grid_spec", default="auto", show_default=True, help="auto | lo:hi:step")
@click.option("--pn", default="auto", show_default=True)
@click.option("--method", default=None, help="fit method; ls unless the estimator is hsw")
@click.option("--conv", type=click.Choice(["auto", "direct", "binned"]), default="auto")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def estimate(src, estimator, m, bandwidth, grid_spec, pn, method, conv, out):
    """Evaluate one estimator on a grid; CSV (x, value) plus a .json sidecar."""
    x = _read_series(src)
    n = len(x)
    b = bandwidth_rule(n, m) if bandwidth == "auto" else float(bandwidth)
    grid = default_grid(x, step=b / 10) if grid_spec == "auto" else parse_grid(grid_spec)
    method = method or ("ma1" if estimator == "hsw" else "ls")
    ar = None if estimator == "htilde" else fit_series(x, _pn(pn, n), method)
    est = run_estimate(estimator, x, ar, build_kernel(m), b, grid, conv)
    _write_csv(out, ("x", "value"), zip(est.grid, est.values))
    meta = {"estimator": estimator, "kind": est.kind, "bandwidth": est.bandwidth, "n": n,
            "fit": None if ar is None else ar.to_dict(), **{k: v for k, v in est.meta.items()
                                                            if k not in ("n",)}}
    _emit_json(meta, Path(out).with_suffix(".json"))


def _theory_report(check, data):
    cfg = asy.TheoryConfig.from_dict(data)
    if check == "remainder":
        table = asy.remainder_check(cfg)
        out = {"check": "remainder", "summary": table.summary(),
               "median_sqrt_n_sup_remainder": table.medians(),
               "median_sqrt_n_sup_error": table.medians("sqrt_n_sup_error")}
        if data.get("with_ablation", False):
            abl = asy.remainder_check(asy.TheoryConfig.from_dict({**data, "ablation": True}))
            out["ablation_medians"] = abl.medians()
        return out
    if check == "covariance":
        c = data.get("covariance", {})
        s, t = float(c.get("s", 0.0)), float(c.get("t", 0.0))
        n, reps = int(c.get("n", 4000)), int(c.get("reps", 500))
        cov = asy.covariance_ma1(cfg, s, t, n, reps)
        out = {"check": "covariance", "s": s, "t": t, "n": n, "reps": reps,
               "estimate": cov.estimate, "stderr": cov.stderr}
        if s == t:
            spread = asy.hhat_pointwise_spread(cfg, s, n, reps)
            out["hhat_replication_variance"] = {"estimate": spread.estimate,
                                                "stderr": spread.stderr}
        return out
    d = data.get("delta", {})
    grid = parse_grid(d.get("grid", "-4:4:0.5"))
    draws = int(d.get("draws", 10**5))
    rows = []
    for i in d.get("indices", [1, 2, 3, 4]):
        closed = asy.delta_i(cfg.phi, cfg.innov, i, grid, "closed")
        mc = asy.delta_i(cfg.phi, cfg.innov, i, grid, "mc", draws, cfg.seed)
        z = np.abs(mc.values - closed.values) / np.maximum(mc.stderr, 1e-300)
        rows.append({"i": i, "sup_closed": float(np.abs(closed.values).max()),
                     "sup_mc": float(np.abs(mc.values).max()),
                     "max_stderr": float(mc.stderr.max()), "max_z": float(z.max())})
    return {"check": "delta", "draws": draws, "rows": rows}


@main.command()
@click.option("--check", type=click.Choice(["remainder", "covariance", "delta"]), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="JSON; MA(1) Gaussian settings")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def theory(check, config_path, out):
    """MA(1) checks of the linear expansion and its limit."""
    data = json.loads(Path(config_path).read_text()) if config_path else {}
    _emit_json(_theory_report(check, data), out)


def _load_config(path, **overrides):
    try:
        data = json.loads(Path(path).read_text())
        data.update({k: v for k, v in overrides.items() if v is not None})
        return ExperimentConfig.model_validate(data)
    except (ValidationError, ValueError, UnsupportedOracle) as exc:
        raise click.ClickException(f"invalid config: {exc}") from exc


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--jobs", type=int, default=None, help="worker processes (env LPDENSITY_JOBS)")
@click.option("--out", "out_dir", default=None, help="output directory")
def experiment(config_path, jobs, out_dir):
    """Monte Carlo sup-error rates for the configured estimators."""
    cfg = _load_config(config_path, out_dir=out_dir)
    try:
        report = run_experiment(cfg, jobs)
    except ExperimentAborted as exc:
        raise click.ClickException(str(exc)) from exc
    target = cfg.out_dir or "results"
    for p in emit_report(report, target):
        click.echo(str(p))
    for r in report.rates:
        click.echo(f"{r.estimator}: slope {r.slope:.4f} +- {r.slope_stderr:.4f}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--bandwidths", required=True, help="comma-separated constants c")
@click.option("--jobs", type=int, default=None)
@click.option("--out", "out_dir", default=None)
def sweep(config_path, bandwidths, jobs, out_dir):
    """Repeat the experiment for several bandwidth constants."""
    cfg = _load_config(config_path, out_dir=out_dir)
    c_list = [float(c) for c in bandwidths.split(",")]
    try:
        reports = bandwidth_sweep(cfg, c_list, jobs)
    except ExperimentAborted as exc:
        raise click.ClickException(str(exc)) from exc
    root = Path(cfg.out_dir or "results")
    for c, rep in reports.items():
        emit_report(rep, root / f"c_{c:g}")
    rows = sweep_summary(reports)
    _emit_json(rows, root / "sweep.json")
    for row in rows:
        verdict = "hhat better" if row["hhat_better"] else "htilde better"
        click.echo(f"c={row['c']:g} n={row['n']}: hhat {row['hhat_mean']:.5f} "
                   f"htilde {row['htilde_mean']:.5f} ({verdict})")


@main.command()
def schema():
    """Print the experiment config JSON schema."""
    click.echo(json.dumps(ExperimentConfig.model_json_schema(), indent=2))


if __name__ == "__main__":
    main()
