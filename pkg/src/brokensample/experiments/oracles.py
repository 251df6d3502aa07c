"""Cross-validation of the estimator's building blocks against independent routes.

Each check reports the largest deviation it saw and the tolerance it is held
to; :func:`run_oracle_checks` collects them into a pass/fail table.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .. import loss as _loss
from ..core import Dataset
from ..models import BivariateNormalRatioModel, DiscreteTabularModel, TorusWrappedGaussianModel
from ..optimize import finite_diff_grad
from ..sampling import SeedSpec, generate_dataset
from .config import DEFAULT_CONFIGS, ExperimentConfig, build_model
from .io import write_csv

__all__ = ["OracleResult", "TOLERANCES", "run_oracle_checks", "gauss_hermite_inner",
           "torus_trapezoid_inner", "discrete_2x2_model", "relative_error"]

TOLERANCES = {
    "bruteforce_vs_exact": 1e-12,
    "limit_decay_ratio": 0.25,
    "limit_slope_from_minus_1.1": 0.4,   # slope within [-1.5, -0.7]
    "kl_identity": 1e-10,
    "gradient_torus": 1e-6,
    "gradient_bivariate": 1e-6,
    "permutation_invariance": 1e-10,
    "m1_collapse": 0.0,
    "permanent_vs_enumeration": 1e-12,
    "bivariate_gauss_hermite": 1e-6,
    "bivariate_spot_values": 1e-12,
    "torus_trapezoid": 1e-8,
    "torus_kernel_vs_reference": 1e-12,
    "discrete_marginals": 1e-12,
}


@dataclass(frozen=True)
class OracleResult:
    check: str
    max_deviation: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.max_deviation <= self.tolerance)

    def csv(self):
        return (self.check, self.max_deviation, self.tolerance, self.passed)


def relative_error(a, b) -> float:
    a, b = np.atleast_1d(np.asarray(a, dtype=float)), np.atleast_1d(np.asarray(b, dtype=float))
    scale = np.maximum(np.abs(a), np.abs(b))
    scale[scale == 0] = 1.0
    return float(np.max(np.abs(a - b) / scale))


def discrete_2x2_model() -> DiscreteTabularModel:
    """Uniform marginals, ``p* = [[1.5, 0.5], [0.5, 1.5]]``."""
    return DiscreteTabularModel([[1.0, -1.0], [-1.0, 1.0]], [0.5, 0.5], [0.5, 0.5],
                                ([-2.0], [2.0]), true_param=[math.log(3.0) / 2])


def _theta_points(model, n=5) -> list:
    lo, hi = model.domain.lower[0], model.domain.upper[0]
    return [float(t) for t in np.linspace(lo, hi, n + 2)[1:-1]]


def gauss_hermite_inner(model: BivariateNormalRatioModel, rho, rho2, nodes=60) -> float:
    """``<p^rho, p^rho2>`` in ``L2(N(0,1) x N(0,1))`` by tensor Gauss-Hermite."""
    x, w = hermegauss(nodes)
    w = w / math.sqrt(2.0 * math.pi)
    X, Y = np.meshgrid(x, x, indexing="ij")
    vals = model.density(rho, X[..., None], Y[..., None]) * model.density(
        rho2, X[..., None], Y[..., None])
    return float(np.sum(np.outer(w, w) * vals))


def torus_trapezoid_inner(model: TorusWrappedGaussianModel, s, s2, n=512) -> float:
    """``<p^s, p^s2>`` by the periodic trapezoid rule on an ``n x n`` grid.

    Both densities depend on ``x - y`` only, so one torus integral suffices.
    """
    g = np.arange(n) / n
    Z = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1)
    zero = np.zeros(2)
    return float(np.mean(model.density(s, Z, zero) * model.density(s2, Z, zero)))


def _shuffled(ds: Dataset, rng) -> Dataset:
    xs = np.array([x[rng.permutation(ds.M)] for x in ds.xs])
    ys = np.array([y[rng.permutation(ds.M)] for y in ds.ys])
    return Dataset.from_arrays(xs, ys)


def _discrete_models(config: ExperimentConfig) -> list:
    block = config.model if config.model.get("kind") == "discrete_tabular" \
        else DEFAULT_CONFIGS["oracle-check"]["model"]
    return [discrete_2x2_model(), build_model(block)]


def check_bruteforce(models) -> float:
    dev = 0.0
    for model in models:
        for M in (2, 3):
            for th in _theta_points(model):
                dev = max(dev, abs(_loss.expected_loss_exact(model, th, M)
                                   - _loss.expected_loss_bruteforce(model, th, M)))
    return dev


def check_limit_decay(model, thetas):
    ratios, slopes = [], []
    Ms = [2, 4, 8, 16, 32, 64, 128, 256]
    for th in thetas:
        lim = _loss.limit_loss(model, th)
        e = np.array([abs(_loss.expected_loss_exact(model, th, M) - lim) for M in Ms])
        ratios.append(e[Ms.index(64)] / e[Ms.index(8)])
        slopes.append(np.polyfit(np.log(Ms), np.log(e), 1)[0])
    return max(ratios), max(abs(s + 1.1) for s in slopes)


def check_kl_identity(models) -> float:
    dev = 0.0
    for model in models:
        ths = _theta_points(model)
        for M in (2, 3, 5):
            for a, b in itertools.combinations(ths, 2):
                lhs = _loss.expected_loss_exact(model, a, M) - _loss.expected_loss_exact(model, b, M)
                rhs = M * M * (_loss.mixture_kl(model, a, M) - _loss.mixture_kl(model, b, M))
                dev = max(dev, abs(lhs - rhs))
    return dev


def check_gradient(model, seed: SeedSpec, tag: int) -> float:
    rng = seed.stream(0, tag)
    data = generate_dataset(model, 10, 5, rng)
    h = 1e-5
    lo, hi = model.domain.lower[0] + 10 * h, model.domain.upper[0] - 10 * h
    thetas = rng.uniform(lo, hi, size=10)
    worst = 0.0
    for th in thetas:
        analytic = _loss.pseudo_loss_grad(model, th, data).gradient
        fd = finite_diff_grad(lambda t: _loss.pseudo_loss(model, t, data).value, th, h)
        worst = max(worst, relative_error(analytic, fd))
    return worst


def check_permutation(models_and_theta, seed: SeedSpec) -> float:
    worst = 0.0
    for idx, (model, th) in enumerate(models_and_theta):
        rng = seed.stream(1, idx)
        data = generate_dataset(model, 6, 3, rng)
        base = [f(model, th, data).value for f in
                (_loss.pseudo_loss, _loss.mixture_pseudo_loss, _loss.full_nll_permanent)]
        for _ in range(20):
            sh = _shuffled(data, rng)
            vals = [f(model, th, sh).value for f in
                    (_loss.pseudo_loss, _loss.mixture_pseudo_loss, _loss.full_nll_permanent)]
            worst = max(worst, relative_error(base, vals))
    return worst


def check_m1_collapse(models_and_theta, seed: SeedSpec, count=100) -> float:
    worst = 0.0
    for idx, (model, th) in enumerate(models_and_theta):
        rng = seed.stream(2, idx)
        for _ in range(count):
            data = generate_dataset(model, 1, int(rng.integers(1, 6)), rng)
            a = _loss.pseudo_loss(model, th, data).value
            b = _loss.mixture_pseudo_loss(model, th, data).value
            c = _loss.full_nll_permanent(model, th, data).value
            worst = max(worst, abs(a - b), abs(a - c))
    return worst


def check_permanent(seed: SeedSpec) -> float:
    rng = seed.stream(3)
    worst = 0.0
    for n in range(1, 7):
        A = rng.uniform(0.1, 3.0, size=(n, n))
        brute = math.fsum(math.prod(A[i, s[i]] for i in range(n))
                          for s in itertools.permutations(range(n)))
        worst = max(worst, abs(_loss.permanent(A) - brute) / brute)
    return worst


_RHOS = (-0.8, -0.5, 0.0, 0.3, 0.7)
_SIGMAS = (0.05, 0.1, 0.2)


def check_gauss_hermite() -> float:
    worst = 0.0
    for rs in _RHOS:
        model = BivariateNormalRatioModel(true_rho=rs)
        for r in _RHOS:
            quad = (gauss_hermite_inner(model, r, r) + gauss_hermite_inner(model, rs, rs)
                    - 2 * gauss_hermite_inner(model, r, rs))
            worst = max(worst, abs(quad - model.l2_dist_sq(r)),
                        abs(gauss_hermite_inner(model, rs, rs) - model.l2_norm_sq_true()))
    return worst


def check_bivariate_spot() -> float:
    model = BivariateNormalRatioModel(true_rho=-0.5)
    return max(abs(model.l2_norm_sq_true() - 4 / 3), abs(model.l2_dist_sq(0.0) - 1 / 3))


def check_torus_trapezoid() -> float:
    model = TorusWrappedGaussianModel(true_sigma=0.1)
    return max(abs(torus_trapezoid_inner(model, a, b) - model.l2_inner(a, b))
               for a in _SIGMAS for b in _SIGMAS)


def check_torus_kernel(seed: SeedSpec) -> float:
    model = TorusWrappedGaussianModel(true_sigma=0.1)
    data = generate_dataset(model, 20, 4, seed.stream(4))
    worst = 0.0
    # spans both the lattice and the Fourier kernel branches
    for s in (0.021, 0.05, 0.1, 0.2, 0.35, 0.499):
        fast = _loss.pseudo_loss_grad(model, s, data)
        ref = _loss.pseudo_loss_grad(model, s, data, generic=True)
        worst = max(worst, relative_error(fast.value, ref.value),
                    relative_error(fast.gradient, ref.gradient))
    return worst


def check_discrete_marginals(models) -> float:
    worst = 0.0
    for model in models:
        for th in _theta_points(model):
            P = model.table(th)
            worst = max(worst, np.abs(model.mu @ P - 1).max(), np.abs(P @ model.nu - 1).max())
    return worst


def run_oracle_checks(config: ExperimentConfig, write: bool = True) -> List[OracleResult]:
    seed = SeedSpec(config.seed)
    discrete = _discrete_models(config)
    torus = TorusWrappedGaussianModel(true_sigma=0.1)
    biv = BivariateNormalRatioModel(true_rho=-0.5)
    m1_models = [(torus, 0.13), (biv, 0.4), (discrete[1], 0.3)]
    big = discrete[1]
    ratio, slope_dev = check_limit_decay(
        big, [float(t) for t in np.linspace(-1.2, 1.6, 5)])
    measured: dict = {
        "bruteforce_vs_exact": lambda: check_bruteforce(discrete),
        "limit_decay_ratio": lambda: ratio,
        "limit_slope_from_minus_1.1": lambda: slope_dev,
        "kl_identity": lambda: check_kl_identity(discrete),
        "gradient_torus": lambda: check_gradient(torus, seed, 10),
        "gradient_bivariate": lambda: check_gradient(biv, seed, 11),
        "permutation_invariance": lambda: check_permutation(m1_models, seed),
        "m1_collapse": lambda: check_m1_collapse(m1_models, seed),
        "permanent_vs_enumeration": lambda: check_permanent(seed),
        "bivariate_gauss_hermite": check_gauss_hermite,
        "bivariate_spot_values": check_bivariate_spot,
        "torus_trapezoid": check_torus_trapezoid,
        "torus_kernel_vs_reference": lambda: check_torus_kernel(seed),
        "discrete_marginals": lambda: check_discrete_marginals(discrete),
    }
    results = [OracleResult(name, float(fn()), TOLERANCES[name])
               for name, fn in measured.items()]
    if write:
        write_csv(Path(config.out_dir) / "oracle_check.csv", "oracle_check",
                  [r.csv() for r in results])
    return results
