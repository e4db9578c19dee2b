"""Monte Carlo rate experiments: h-tilde versus h-hat in sup-norm.

Each replication ``r`` at sample size ``n`` draws its path from substream
``(n, r)`` of the configured seed, so results do not depend on the order
in which a worker pool finishes them. Results land in slots indexed by
``(n, r)`` and are reduced in a fixed order.
"""
from __future__ import annotations

import csv
import functools
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import stats

from .arfit import fit, method_for_family, pn_rule
from .estimators import DEFAULT_BIN_FRACTION, bandwidth_rule, default_grid, estimate
from .kernels import build_kernel
from .process import MA1, parse_family, process_constants
from .simulate import oracle_h, parse_innovation, sample_path

log = logging.getLogger(__name__)

JOBS_ENV = "LPDENSITY_JOBS"
FAILURE_LIMIT = 0.01
EXPERIMENT_ESTIMATORS = ("htilde", "hhat", "hsw")


class GridPolicy(BaseModel):
    model_config = ConfigDict(extra="forbid")

    coverage: float = Field(8.0, ge=4, description="half-width in stationary standard deviations")
    step_fraction: float = Field(0.1, gt=0, le=0.1,
                                 description="grid step as a fraction of the bandwidth")


class ExperimentConfig(BaseModel):
    """Monte Carlo rate experiment. Field names double as the JSON schema."""

    model_config = ConfigDict(extra="forbid")

    family: str = Field("ma1", description="ma1 | arma11 | ar")
    params: list[float] = Field(default_factory=lambda: [0.5])
    innovation: str = Field("gaussian:1.0",
                            description="gaussian:s2 | mixture:w,mu,v | logistic:s")
    n_list: list[int] = Field(default_factory=lambda: [1000, 2000, 4000, 8000])
    reps: int = Field(100, ge=1)
    m: int = Field(2, ge=2, description="kernel order")
    c: float = Field(1.0, gt=0, description="bandwidth constant in c * n^(-1/(2m))")
    pn: Union[Literal["auto"], int] = "auto"
    fit_method: str = Field("ls", description="ls | parametric | ma1 | arma11 | ar:p")
    grid: GridPolicy = Field(default_factory=GridPolicy)
    seed: int = 20070415
    estimators: list[Literal["htilde", "hhat", "hsw"]] = Field(
        default_factory=lambda: ["htilde", "hhat"])
    conv_method: Literal["auto", "direct", "binned"] = "binned"
    bin_fraction: float = Field(DEFAULT_BIN_FRACTION, gt=1)
    out_dir: Optional[str] = None

    @field_validator("n_list")
    @classmethod
    def _increasing(cls, v):
        if not v:
            raise ValueError("n_list must not be empty")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("n_list must be strictly increasing")
        if v[0] < 30:
            raise ValueError("sample sizes must be at least 30")
        return v

    @model_validator(mode="after")
    def _consistent(self):
        fam = self.process_family()
        innov = parse_innovation(self.innovation)
        phi = fam.ma_coeffs()
        n_nonzero = process_constants(phi).n_nonzero
        if phi.tail_bound == 0.0 and n_nonzero < self.m - 1:
            raise ValueError(f"kernel order m={self.m} needs N >= m - 1 nonzero MA "
                             f"coefficients, the family has N={n_nonzero}")
        oracle_h(phi, innov)
        if "hsw" in self.estimators and not (
                isinstance(fam, MA1) and self.resolved_method() == "ma1"):
            raise ValueError("hsw needs the MA(1) family with a parametric fit")
        if isinstance(self.pn, int) and self.pn < 1:
            raise ValueError("pn must be 'auto' or a positive integer")
        return self

    def process_family(self):
        return parse_family(self.family, self.params)

    def resolved_method(self) -> str:
        if self.fit_method == "parametric":
            return method_for_family(self.process_family())
        return self.fit_method

    def p_n(self, n: int) -> int:
        return pn_rule(n) if self.pn == "auto" else int(self.pn)

    def q_n(self, n: int) -> float:
        return float(self.p_n(n)) if self.resolved_method() == "ls" else 1.0


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get(JOBS_ENV, "1")))
    except ValueError:
        return 1


# -- bandwidth / lag-order rate diagnostic -------------------------------------

def check_condition_B(n: int, m: int, b: float, p_n: int, q_n: float = 1.0,
                      zeta: float = 1.0, small: float = 1.0, bounded: float = 10.0) -> dict:
    """Finite-n surrogates for the joint bandwidth / lag-order rate condition.

    ``small`` is the threshold for quantities that should tend to zero,
    ``bounded`` for those that should stay O(1).
    """
    if min(n, m, b, p_n, q_n, zeta) <= 0:
        raise ValueError("rate diagnostic inputs must be positive")
    s_n = (b**-0.5 * n**-0.5 + p_n * q_n * b**-2.5 / n
           + b**-1.5 * n ** (-zeta - 0.5))
    out = {
        "n": n, "m": m, "b": b, "p_n": p_n, "q_n": q_n, "zeta": zeta, "s_n": s_n,
        "pq_over_b_sqrt_n": p_n * q_n / (b * math.sqrt(n)),
        "n_b_2m": n * b ** (2 * m),
        "n_quarter_s_n": n**0.25 * s_n,
        "sqrt_n_b_s_n": math.sqrt(n) * b * s_n,
    }
    flags = [key for key in ("pq_over_b_sqrt_n", "n_quarter_s_n") if out[key] > small]
    flags += [key for key in ("n_b_2m", "sqrt_n_b_s_n") if out[key] > bounded]
    out["flags"] = flags
    return out


# -- rate fit ------------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    estimator: str
    slope: float
    intercept: float
    slope_stderr: float


def rate_fit(ns, errors, estimator: str = "") -> RateFit:
    """OLS of log(error) on log(n)."""
    ns = np.asarray(ns, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if len(np.unique(ns)) < 3:
        raise ValueError("rate_fit needs at least three distinct sample sizes")
    res = stats.linregress(np.log(ns), np.log(errors))
    return RateFit(estimator, float(res.slope), float(res.intercept), float(res.stderr))


# -- replications --------------------------------------------------------------

@functools.lru_cache(maxsize=32)
def _setup(cfg_json: str, n: int):
    cfg = ExperimentConfig.model_validate_json(cfg_json)
    fam = cfg.process_family()
    innov = parse_innovation(cfg.innovation)
    phi = fam.ma_coeffs()
    h = oracle_h(phi, innov)
    b = bandwidth_rule(n, cfg.m, cfg.c)
    sd = math.sqrt(process_constants(phi, innov.variance).variance)
    grid = default_grid(mean=0.0, sd=sd, coverage=cfg.grid.coverage,
                        step=b * cfg.grid.step_fraction)
    return cfg, phi, innov, build_kernel(cfg.m), b, grid, np.asarray(h(grid), dtype=float)


def run_replication(cfg_json: str, n: int, rep: int) -> dict:
    """sup-errors of every configured estimator for path (n, rep)."""
    cfg, phi, innov, k, b, grid, h_grid = _setup(cfg_json, n)
    path = sample_path(phi, innov, n, cfg.seed, (n, rep))
    needs_fit = any(e != "htilde" for e in cfg.estimators)
    ar = fit(path.x, cfg.p_n(n), cfg.resolved_method()) if needs_fit else None
    out = {}
    for name in cfg.estimators:
        est = estimate(name, path.x, ar, k, b, grid, cfg.conv_method, cfg.bin_fraction)
        out[name] = float(np.max(np.abs(est.values - h_grid)))
    return out


def _safe_replication(args):
    cfg_json, n, rep = args
    try:
        return n, rep, run_replication(cfg_json, n, rep), None
    except Exception as exc:  # recorded per replication, threshold checked later
        return n, rep, None, f"{type(exc).__name__}: {exc}"


class ExperimentAborted(RuntimeError):
    pass


@dataclass
class ExperimentReport:
    config: dict
    raw: list = field(default_factory=list)
    aggregates: list = field(default_factory=list)
    rates: list = field(default_factory=list)
    condition_b: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    wall_clock: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rates"] = [asdict(r) if isinstance(r, RateFit) else r for r in self.rates]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        rates = [RateFit(**r) for r in d.get("rates", [])]
        return cls(d["config"], list(d.get("raw", [])), list(d.get("aggregates", [])), rates,
                   list(d.get("condition_b", [])), list(d.get("failures", [])),
                   dict(d.get("wall_clock", {})))

    def aggregate(self, estimator: str, n: int) -> dict:
        for row in self.aggregates:
            if row["estimator"] == estimator and row["n"] == n:
                return row
        raise KeyError((estimator, n))

    def rate(self, estimator: str) -> RateFit:
        for r in self.rates:
            if r.estimator == estimator:
                return r
        raise KeyError(estimator)


def _aggregate(raw, n_list, estimators):
    rows = []
    for n in n_list:
        for name in estimators:
            vals = np.array([r["sup_error"] for r in raw if r["n"] == n and r["estimator"] == name])
            if vals.size == 0:
                continue
            se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
            rows.append({"n": n, "estimator": name, "mean": float(vals.mean()),
                         "median": float(np.median(vals)), "stderr": se,
                         "count": int(vals.size)})
    return rows


def run_experiment(cfg: ExperimentConfig, jobs: Optional[int] = None) -> ExperimentReport:
    """Simulate, fit, estimate and score every (n, rep); aggregate and rate-fit."""
    jobs = default_jobs() if jobs is None else max(1, int(jobs))
    cfg_json = cfg.model_dump_json()
    tasks = [(cfg_json, n, r) for n in cfg.n_list for r in range(cfg.reps)]
    slots = {}
    t0 = time.perf_counter()
    if jobs == 1:
        results = map(_safe_replication, tasks)
        for res in results:
            slots[res[:2]] = res
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunk = max(1, len(tasks) // (4 * jobs))
            for res in pool.map(_safe_replication, tasks, chunksize=chunk):
                slots[res[:2]] = res
    elapsed = time.perf_counter() - t0

    raw, failures = [], []
    for n in cfg.n_list:
        for r in range(cfg.reps):
            _, _, errs, msg = slots[(n, r)]
            if msg is not None:
                failures.append({"n": n, "rep": r, "error": msg})
                continue
            for name in cfg.estimators:
                raw.append({"n": n, "rep": r, "estimator": name, "sup_error": errs[name]})
    if len(failures) > FAILURE_LIMIT * len(tasks):
        raise ExperimentAborted(f"{len(failures)} of {len(tasks)} replications failed; "
                                f"first: {failures[0]['error']}")
    for fail in failures:
        log.warning("replication n=%s rep=%s failed: %s", fail["n"], fail["rep"], fail["error"])

    aggregates = _aggregate(raw, cfg.n_list, cfg.estimators)
    rates = []
    if len(cfg.n_list) >= 3:
        for name in cfg.estimators:
            rows = [a for a in aggregates if a["estimator"] == name]
            rates.append(rate_fit([a["n"] for a in rows], [a["median"] for a in rows], name))
    cond = [check_condition_B(n, cfg.m, bandwidth_rule(n, cfg.m, cfg.c), cfg.p_n(n),
                              cfg.q_n(n)) for n in cfg.n_list]
    wall = {"seconds": elapsed, "jobs": jobs,
            "per_replication": elapsed / max(len(tasks), 1)}
    return ExperimentReport(cfg.model_dump(), raw, aggregates, rates, cond, failures, wall)


def bandwidth_sweep(cfg: ExperimentConfig, c_list, jobs: Optional[int] = None) -> dict:
    """One experiment per bandwidth constant; keys are the constants."""
    c_list = list(c_list)
    if not c_list:
        raise ValueError("c_list must not be empty")
    return {c: run_experiment(cfg.model_copy(update={"c": float(c)}), jobs) for c in c_list}


def sweep_summary(reports: dict) -> list:
    """Per (c, n): mean sup-errors of h-hat and h-tilde and whether h-hat wins."""
    rows = []
    for c, rep in reports.items():
        for n in rep.config["n_list"]:
            try:
                hh, ht = rep.aggregate("hhat", n)["mean"], rep.aggregate("htilde", n)["mean"]
            except KeyError:
                continue
            rows.append({"c": c, "n": n, "hhat_mean": hh, "htilde_mean": ht,
                         "hhat_better": hh < ht,
                         "condition_b_flags": next(d["flags"] for d in rep.condition_b
                                                   if d["n"] == n)})
    return rows


# -- output --------------------------------------------------------------------

RAW_HEADER = ("n", "rep", "estimator", "sup_error")
AGG_HEADER = ("n", "estimator", "mean", "median", "stderr")
RATE_HEADER = ("estimator", "slope", "slope_stderr")


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(row[h]) for h in header])
    return buf.getvalue()


def report_csvs(report: ExperimentReport) -> dict:
    rates = [asdict(r) for r in report.rates]
    return {
        "raw.csv": _csv_text(RAW_HEADER, report.raw),
        "aggregate.csv": _csv_text(AGG_HEADER, report.aggregates),
        "rates.csv": _csv_text(RATE_HEADER, rates),
    }


def _svg(report: ExperimentReport, path: Path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "lpdensity"
    fig, ax = plt.subplots(figsize=(5, 4))
    for name in report.config["estimators"]:
        rows = [a for a in report.aggregates if a["estimator"] == name]
        if not rows:
            continue
        ns = np.array([a["n"] for a in rows], dtype=float)
        med = np.array([a["median"] for a in rows])
        pts = ax.loglog(ns, med, "o", label=name)[0]
        try:
            rf = report.rate(name)
        except KeyError:
            continue
        ax.loglog(ns, np.exp(rf.intercept) * ns**rf.slope, "-", color=pts.get_color(),
                  label=f"{name} slope {rf.slope:.3f}")
    ax.set_xlabel("n")
    ax.set_ylabel("median sup-norm error")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit_report(report: ExperimentReport, out_dir, formats=("csv", "json", "svg")) -> list:
    """Write raw/aggregate/rates CSVs, a JSON mirror and a log-log SVG."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written = []
    if "csv" in formats:
        for name, text in report_csvs(report).items():
            (out / name).write_text(text)
            written.append(out / name)
    if "json" in formats:
        (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2))
        written.append(out / "report.json")
    if "svg" in formats:
        _svg(report, out / "rates.svg")
        written.append(out / "rates.svg")
    return written


def load_report(path) -> ExperimentReport:
    return ExperimentReport.from_dict(json.loads(Path(path).read_text()))


def load_config(path) -> ExperimentConfig:
    return ExperimentConfig.model_validate_json(Path(path).read_text())
