"""Monte-Carlo experiment drivers.

Every replicate draws from its own stream, keyed by the master seed, the
replicate index and the cell ``(M, N, theta_star index)``.  Results are
gathered in replicate order, so output files do not depend on ``threads``.
"""

from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional

import numpy as np

from ..errors import ConfigError, DegenerateCV
from ..loss import expected_loss_exact, limit_loss, pseudo_loss
from ..models import DiscreteTabularModel
from ..optimize import minimize_scalar
from ..sampling import SeedSpec, simulate_broken
from .config import ExperimentConfig
from .io import write_csv

__all__ = ["EstimateRow", "SummaryRow", "RunResult", "LimitTable", "run_simulate",
           "run_loss_curves", "run_cv_sweep", "run_limit_convergence", "summarize",
           "resolve_threads"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EstimateRow:
    theta_star: float
    replicate: int
    M: int
    N: int
    theta_hat: float
    loss_at_hat: float
    wall_time: float

    def csv(self):
        return (self.theta_star, self.replicate, self.M, self.N, self.theta_hat,
                self.loss_at_hat)


@dataclass(frozen=True)
class SummaryRow:
    theta_star: float
    M: int
    N: int
    replicates: int
    mean: float
    sd: Optional[float]
    cv: Optional[float]
    median_abs_err: float

    def csv(self):
        return (self.theta_star, self.M, self.N, self.replicates, self.mean, self.sd,
                self.cv, self.median_abs_err)


@dataclass
class RunResult:
    rows: List[EstimateRow]
    summary: List[SummaryRow]
    curves: dict = field(default_factory=dict)  # (theta_star, M, N) -> (grid, loss array)
    limit_curves: dict = field(default_factory=dict)  # theta_star -> (grid, values)
    files: List[Path] = field(default_factory=list)

    def estimates(self, M: int, N: int, theta_star: Optional[float] = None) -> np.ndarray:
        return np.array([r.theta_hat for r in self.rows if r.M == M and r.N == N
                         and (theta_star is None or r.theta_star == theta_star)])

    def cell(self, M: int, N: int, theta_star: Optional[float] = None) -> SummaryRow:
        for s in self.summary:
            if s.M == M and s.N == N and (theta_star is None or s.theta_star == theta_star):
                return s
        raise KeyError((M, N, theta_star))


def resolve_threads(threads: int) -> int:
    if threads < 0:
        raise ConfigError("--threads must be >= 0")
    return threads or (os.cpu_count() or 1)


def _map(fn: Callable, items: list, threads: int) -> list:
    threads = resolve_threads(threads)
    if threads == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def summarize(rows: List[EstimateRow], require_cv: bool = False) -> List[SummaryRow]:
    """Per-cell mean, unbiased sd, coefficient of variation and median error."""
    cells = {}
    for r in rows:
        cells.setdefault((r.theta_star, r.M, r.N), []).append(r.theta_hat)
    out = []
    for (ts, M, N), vals in cells.items():
        v = np.asarray(vals)
        mean = math.fsum(v) / v.size
        sd = float(np.std(v, ddof=1)) if v.size > 1 else None
        if abs(mean) < 1e-300:
            if require_cv:
                raise DegenerateCV(f"mean estimate is zero at theta*={ts}, M={M}, N={N}")
            cv = None
        else:
            cv = None if sd is None else sd / mean
        out.append(SummaryRow(ts, M, N, v.size, mean, sd, cv,
                              float(np.median(np.abs(v - ts)))))
    return out


def _estimate(model, M, N, seed: SeedSpec, replicate, tags, opts, theta_star,
              curve_grid=None):
    t0 = time.perf_counter()
    data = simulate_broken(model, M, N, seed.stream(replicate, *tags))

    def objective(theta):
        return pseudo_loss(model, theta, data).value

    res = minimize_scalar(objective, model.domain, opts)
    curve = None
    if curve_grid is not None:
        curve = np.array([objective(t) for t in curve_grid])
    row = EstimateRow(theta_star, replicate, M, N, float(res.arg), res.value,
                      time.perf_counter() - t0)
    return row, curve


def _require_scalar(model):
    if model.d != 1:
        raise ConfigError("Monte-Carlo experiments need a 1-dim parameter model")


def _run_cells(config: ExperimentConfig, threads: int, cells, curve_grid=None):
    rows, curves = [], {}
    for star_idx, theta_star, M, N in cells:
        model = config.model_for(theta_star)
        _require_scalar(model)
        seed = SeedSpec(config.seed)
        log.info("cell theta*=%g M=%d N=%d (%d replicates)", theta_star, M, N,
                 config.replicates)

        def job(r, model=model, M=M, N=N, theta_star=theta_star, star_idx=star_idx):
            return _estimate(model, M, N, seed, r, (M, N, star_idx), config.optimizer,
                             theta_star, curve_grid)

        results = _map(job, list(range(config.replicates)), threads)
        rows.extend(r for r, _ in results)
        if curve_grid is not None:
            curves[(theta_star, M, N)] = (curve_grid, np.stack([c for _, c in results]))
    return rows, curves


def _write_estimates(out: Path, stem: str, rows, summary) -> List[Path]:
    return [
        write_csv(out / f"{stem}_estimates.csv", "estimates", [r.csv() for r in rows]),
        write_csv(out / f"{stem}_summary.csv", "summary", [s.csv() for s in summary]),
        write_csv(out / f"{stem}_timing.csv", "timing",
                  [(r.theta_star, r.replicate, r.M, r.N, r.wall_time) for r in rows]),
    ]


def run_simulate(config: ExperimentConfig, M: Optional[int] = None,
                 N: Optional[int] = None, threads: int = 1,
                 write: bool = True) -> RunResult:
    """Estimate ``theta`` on ``replicates`` broken datasets of one ``(M, N)`` cell."""
    M = config.M_list[0] if M is None else M
    N = config.N_list[0] if N is None else N
    cells = [(i, ts, M, N) for i, ts in enumerate(config.true_values())]
    rows, _ = _run_cells(config, threads, cells)
    result = RunResult(rows, summarize(rows))
    if write:
        result.files = _write_estimates(Path(config.out_dir), "simulate", rows, result.summary)
    return result


def run_loss_curves(config: ExperimentConfig, threads: int = 1,
                    write: bool = True) -> RunResult:
    """Empirical pseudo-loss curves, their minimisers and the limit curve.

    For every ``(M, N)`` cell and replicate the pseudo loss is evaluated on
    the configured theta grid; the limit loss is evaluated on the same grid.
    """
    grid = config.grid().points()
    stars = config.true_values()
    cells = [(i, ts, M, N) for i, ts in enumerate(stars)
             for N in config.N_list for M in config.M_list]
    rows, curves = _run_cells(config, threads, cells, curve_grid=grid)
    result = RunResult(rows, summarize(rows), curves=curves)
    for ts in stars:
        model = config.model_for(ts)
        result.limit_curves[ts] = (grid, np.array([limit_loss(model, t) for t in grid]))
    if write:
        out = Path(config.out_dir)
        files = _write_estimates(out, "loss_curve", rows, result.summary)
        curve_rows = [(ts, M, N, r, float(t), float(v))
                      for (ts, M, N), (g, vals) in curves.items()
                      for r, line in enumerate(vals) for t, v in zip(g, line)]
        files.append(write_csv(out / "loss_curves.csv", "loss_curves", curve_rows))
        lim_rows = [(ts, float(t), float(v)) for ts, (g, vals) in result.limit_curves.items()
                    for t, v in zip(g, vals)]
        files.append(write_csv(out / "limit_curve.csv", "limit_curve", lim_rows))
        result.files = files
    return result


def run_cv_sweep(config: ExperimentConfig, threads: int = 1,
                 write: bool = True) -> RunResult:
    """Coefficient of variation of the estimator over a ``(theta*, N, M)`` grid."""
    cells = [(i, ts, M, N) for i, ts in enumerate(config.true_values())
             for N in config.N_list for M in config.M_list]
    rows, _ = _run_cells(config, threads, cells)
    result = RunResult(rows, summarize(rows, require_cv=True))
    if write:
        out = Path(config.out_dir)
        files = _write_estimates(out, "cv", rows, result.summary)
        files.append(write_csv(out / "cv.csv", "summary", [s.csv() for s in result.summary]))
        result.files = files
    return result


@dataclass
class LimitTable:
    M_list: tuple
    thetas: tuple
    truth: float
    errors: dict  # theta -> array of |E f_M - limit| over M_list
    expected: dict
    limits: dict
    slopes: dict
    files: List[Path] = field(default_factory=list)

    def ratio(self, theta, M_hi=64, M_lo=8) -> float:
        e = self.errors[theta]
        return e[self.M_list.index(M_hi)] / e[self.M_list.index(M_lo)]


def _loglog_slope(M_list, errs) -> float:
    return float(np.polyfit(np.log(M_list), np.log(errs), 1)[0])


def run_limit_convergence(config: ExperimentConfig, write: bool = True) -> LimitTable:
    """Distance between the exact expected loss and its large-``M`` limit.

    Rows cover the configured theta grid plus the true parameter; each theta
    gets the least-squares slope of ``log error`` against ``log M``.
    """
    model = config.model_for(config.theta_star[0] if config.theta_star else None)
    if not isinstance(model, DiscreteTabularModel) or model.d != 1:
        raise ConfigError("limit-convergence needs a 1-dim discrete_tabular model")
    truth = float(model.true_param)
    thetas = tuple(float(t) for t in config.grid().points())
    if truth not in thetas:
        thetas = thetas + (truth,)
    M_list = tuple(config.M_list)
    errors, expected, limits, slopes = {}, {}, {}, {}
    for th in thetas:
        lim = limit_loss(model, th)
        ef = np.array([expected_loss_exact(model, th, M) for M in M_list])
        limits[th] = lim
        expected[th] = ef
        errors[th] = np.abs(ef - lim)
        slopes[th] = (_loglog_slope(M_list, errors[th]) if np.all(errors[th] > 0)
                      else float("nan"))
    table = LimitTable(M_list, thetas, truth, errors, expected, limits, slopes)
    if write:
        out = Path(config.out_dir)
        rows = [(th, th == truth, M, float(expected[th][i]), limits[th],
                 float(errors[th][i])) for th in thetas for i, M in enumerate(M_list)]
        srows = []
        for th in thetas:
            ratio = table.ratio(th) if {8, 64} <= set(M_list) and errors[th][
                M_list.index(8)] > 0 else None
            srows.append((th, th == truth, slopes[th], ratio))
        table.files = [write_csv(out / "limit_convergence.csv", "limit_convergence", rows),
                       write_csv(out / "limit_slopes.csv", "limit_slopes", srows)]
    return table
