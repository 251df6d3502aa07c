"""Parametric density-ratio families.

Every density here is taken with respect to the product of the known
marginals, so for each family ``integral p(x, y') dnu(y') == 1`` and likewise in
``x``.  Densities are evaluated in log-space; ``density`` exponentiates.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from .core import DensityModel, ParamDomain, ThetaLike
from .errors import NoClosedForm

__all__ = [
    "TorusWrappedGaussianModel",
    "BivariateNormalRatioModel",
    "DiscreteTabularModel",
    "exact_expectation",
]

# Lattice terms are dropped once they fall below exp(-_TAIL_EXPONENT) relative
# to the dominant one; exp(-40) ~ 4e-18.
_TAIL_EXPONENT = 40.0


def _wrap(d: np.ndarray) -> np.ndarray:
    """Minimum-image representative of ``d`` modulo 1, in ``[-0.5, 0.5]``."""
    return d - np.round(d)


class TorusWrappedGaussianModel(DensityModel):
    r"""Wrapped isotropic Gaussian transition on the flat 2-torus.

    ``X`` is uniform on ``[0, 1)^2`` and ``Y = X + sigma * Z (mod 1)``.  The
    density w.r.t. the uniform product measure is the lattice sum

    .. math:: p^\sigma(x, y) = \sum_{k} (2\pi\sigma^2)^{-1}
              \exp(-\lVert x - y + k\rVert^2 / 2\sigma^2)

    which factorises over the two axes.  The lattice is truncated at
    ``|k_i| <= truncation_radius``; fewer terms are used when the dropped ones
    are below ``exp(-40)`` of the leading term.
    """

    x_dim = 2
    y_dim = 2

    def __init__(self, true_sigma: Optional[float] = 0.1,
                 sigma_domain: Sequence[float] = (0.02, 0.5),
                 truncation_radius: int = 4):
        domain = ParamDomain.interval(*sigma_domain)
        if domain.lower[0] <= 0:
            raise ValueError("sigma domain must be positive")
        if truncation_radius < 1:
            raise ValueError("truncation_radius must be a positive integer")
        self.truncation_radius = int(truncation_radius)
        super().__init__(domain, true_sigma)
        # U: density maximum over the domain, attained at x == y and smallest sigma
        self.density_bound = float(np.exp(self._log_density(
            domain.lower[0], np.zeros(2), np.zeros(2))))

    def _radius(self, sigma: float) -> int:
        # smallest K with K(K+1) / (2 sigma^2) >= tail exponent, capped
        need = math.ceil((-1 + math.sqrt(1 + 8 * _TAIL_EXPONENT * sigma ** 2)) / 2)
        return max(1, min(self.truncation_radius, need))

    def _log_axis_sums(self, sigma: float, d: np.ndarray, with_grad: bool = False):
        """Per-axis ``log sum_k exp(-(d+k)^2 / 2 sigma^2)`` for wrapped ``d``.

        With the minimum image the ``k = 0`` term dominates, so the remainder
        enters through ``log1p`` of terms bounded by one.
        """
        s2 = 2.0 * sigma * sigma
        lead = -(d * d) / s2
        rest = np.zeros_like(d)
        mom = d * d if with_grad else None
        for k in range(1, self._radius(sigma) + 1):
            for kk in (k, -k):
                term = np.exp(-(2.0 * d * kk + kk * kk) / s2)
                rest += term
                if with_grad:
                    mom += term * (d + kk) ** 2
        log_s = lead + np.log1p(rest)
        if with_grad:
            # E_w[(d+k)^2] under lattice weights, feeds d/dsigma
            return log_s, mom / (1.0 + rest)
        return log_s

    def _log_density(self, sigma: float, x, y) -> np.ndarray:
        d = _wrap(np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64))
        log_s = self._log_axis_sums(sigma, d)
        return log_s.sum(axis=-1) - math.log(2.0 * math.pi * sigma * sigma)

    def log_density(self, theta, x, y):
        return self._log_density(float(theta[0]), x, y)

    def grad_log_density(self, theta: ThetaLike, x, y) -> np.ndarray:
        sigma = float(self.domain.check(theta)[0])
        d = _wrap(np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64))
        _, mom = self._log_axis_sums(sigma, d, with_grad=True)
        g = mom.sum(axis=-1) / sigma ** 3 - 2.0 / sigma
        return g[..., None]

    def grad_density(self, theta: ThetaLike, x, y) -> np.ndarray:
        return self.density(theta, x, y)[..., None] * self.grad_log_density(theta, x, y)

    def l2_inner(self, theta: ThetaLike, theta2: ThetaLike) -> float:
        """``<p^s, p^s'>`` via the convolution identity.

        Both densities depend on ``x - y`` only, so the inner product is the
        wrapped Gaussian with variance ``s^2 + s'^2`` evaluated at zero.
        """
        s1 = float(self.domain.check(theta)[0])
        s2 = float(self.domain.check(theta2)[0])
        var = s1 * s1 + s2 * s2
        kmax = math.ceil(math.sqrt(2 * _TAIL_EXPONENT * var)) + 1
        k = np.arange(-kmax, kmax + 1, dtype=np.float64)
        axis = math.fsum(np.exp(-k * k / (2 * var)))
        return axis * axis / (2 * math.pi * var)

    def pseudo_batch_sums(self, theta: np.ndarray, xs: np.ndarray, ys: np.ndarray,
                          want_grad: bool):
        """Compiled per-batch pseudo-likelihood sums, used for ``M >= 2``."""
        from ._kernels import torus_fourier_sums, torus_lattice_sums

        sigma = float(theta[0])
        xs = np.ascontiguousarray(xs)
        ys = np.ascontiguousarray(ys)
        nterms = self._fourier_terms(sigma)
        if nterms <= self.fourier_max_terms:
            sums, gsums = torus_fourier_sums(xs, ys, sigma, nterms, want_grad)
        else:
            sums, gsums = torus_lattice_sums(xs, ys, sigma, self._radius(sigma), want_grad)
        return sums, (gsums[:, None] if want_grad else None)

    #: switch to the Fourier series once it needs at most this many terms
    fourier_max_terms = 24

    @staticmethod
    def _fourier_terms(sigma: float) -> int:
        # drop n once exp(-2 pi^2 sigma^2 n^2) < exp(-40)
        return max(1, math.ceil(math.sqrt(_TAIL_EXPONENT / (2 * math.pi ** 2)) / sigma))

    def sample_pairs(self, rng: np.random.Generator, n: int):
        sigma = float(self.true_param)
        xs = rng.random((n, 2))
        ys = np.mod(xs + sigma * rng.standard_normal((n, 2)), 1.0)
        ys[ys >= 1.0] = 0.0  # mod of a tiny negative rounds up to 1.0
        return xs, ys


class BivariateNormalRatioModel(DensityModel):
    """Ratio of a correlated standard bivariate normal to its marginals.

    ``p^rho(x, y) = phi_rho(x, y) / (phi(x) phi(y))`` with ``mu = nu = N(0, 1)``.
    ``p^0`` is identically one.
    """

    def __init__(self, true_rho: Optional[float] = -0.5, tau: float = 0.05):
        if not 0 < tau < 1:
            raise ValueError("tau must lie in (0, 1)")
        self.tau = float(tau)
        super().__init__(ParamDomain.interval(-1 + tau, 1 - tau), true_rho)

    @staticmethod
    def _split(x, y):
        x = np.asarray(x, dtype=np.float64)[..., 0]
        y = np.asarray(y, dtype=np.float64)[..., 0]
        return x, y

    def log_density(self, theta, x, y):
        rho = float(theta[0])
        x, y = self._split(x, y)
        one_m = 1.0 - rho * rho
        quad = rho * rho * (x * x + y * y) - 2.0 * rho * x * y
        return -0.5 * math.log(one_m) - quad / (2.0 * one_m)

    def grad_log_density(self, theta: ThetaLike, x, y) -> np.ndarray:
        rho = float(self.domain.check(theta)[0])
        x, y = self._split(x, y)
        one_m = 1.0 - rho * rho
        g = rho / one_m - (rho * (x * x + y * y) - (1 + rho * rho) * x * y) / one_m ** 2
        return g[..., None]

    def grad_density(self, theta: ThetaLike, x, y) -> np.ndarray:
        return self.density(theta, x, y)[..., None] * self.grad_log_density(theta, x, y)

    def l2_inner(self, theta: ThetaLike, theta2: ThetaLike) -> float:
        r1 = float(self.domain.check(theta)[0])
        r2 = float(self.domain.check(theta2)[0])
        return 1.0 / abs(r1 * r2 - 1.0)

    def l2_norm_sq_true(self) -> float:
        rs = float(self.true_param)
        return 1.0 / (1.0 - rs * rs)

    def l2_dist_sq(self, theta: ThetaLike) -> float:
        rho = float(self.domain.check(theta)[0])
        rs = float(self.true_param)
        return 1.0 / (1.0 - rho * rho) + 1.0 / (1.0 - rs * rs) - 2.0 / abs(rho * rs - 1.0)

    def sample_pairs(self, rng: np.random.Generator, n: int):
        rho = float(self.true_param)
        z = rng.standard_normal((n, 2))
        xs = z[:, :1]
        ys = rho * xs + math.sqrt(1.0 - rho * rho) * z[:, 1:]
        return xs.copy(), ys


def _ipf(kernel: np.ndarray, mu: np.ndarray, nu: np.ndarray,
         tol: float = 1e-13, max_sweeps: int = 10_000):
    """Scale ``kernel`` to ``r_a K_ab c_b`` with unit weighted row/column means.

    Returns the log scalings ``(alpha, beta)``.
    """
    r = np.ones(kernel.shape[0])
    c = np.ones(kernel.shape[1])
    for _ in range(max_sweeps):
        r = 1.0 / (kernel @ (nu * c))
        c = 1.0 / (kernel.T @ (mu * r))
        p = r[:, None] * kernel * c[None, :]
        err = np.abs(p @ nu - 1.0).max()
        if err < tol:
            break
    else:
        raise RuntimeError(f"IPF did not reach tol={tol} (residual {err:.3g})")
    return np.log(r), np.log(c)


class DiscreteTabularModel(DensityModel):
    r"""Exponential-tilt family on finite alphabets.

    ``p^theta(a, b) = exp(theta . g(a, b) + alpha_a + beta_b)`` where the
    scalings are fixed by iterative proportional fitting so that
    ``sum_a mu_a p(a, b) == 1`` and ``sum_b nu_b p(a, b) == 1``.  Points are the
    integer symbols stored as 1-d float coordinates.

    Parameters
    ----------
    features : array_like, shape (d, nx, ny) or (nx, ny)
        Tilt feature tables ``g``.
    mu, nu : array_like
        Marginal probability vectors.
    theta_domain : pair of array_like
        Lower and upper corners of the parameter box.
    true_param : array_like, optional
    """

    def __init__(self, features, mu, nu, theta_domain, true_param=None):
        g = np.asarray(features, dtype=np.float64)
        if g.ndim == 2:
            g = g[None]
        self.features = g
        self.features.setflags(write=False)
        self.mu = np.asarray(mu, dtype=np.float64)
        self.nu = np.asarray(nu, dtype=np.float64)
        if g.shape[1:] != (self.mu.size, self.nu.size):
            raise ValueError("feature tables must have shape (d, len(mu), len(nu))")
        for name, v in (("mu", self.mu), ("nu", self.nu)):
            if np.any(v <= 0) or abs(v.sum() - 1.0) > 1e-12:
                raise ValueError(f"{name} must be a positive probability vector")
        lo, hi = theta_domain
        domain = ParamDomain(lo, hi)
        if domain.dim != g.shape[0]:
            raise ValueError("theta_domain dimension does not match features")
        self._table = lru_cache(maxsize=256)(self._table_uncached)
        super().__init__(domain, true_param)

    @property
    def nx(self) -> int:
        return self.mu.size

    @property
    def ny(self) -> int:
        return self.nu.size

    def _table_uncached(self, key: tuple):
        theta = np.array(key)
        logk = np.tensordot(theta, self.features, axes=1)
        logk -= logk.max()
        alpha, beta = _ipf(np.exp(logk), self.mu, self.nu)
        logp = logk + alpha[:, None] + beta[None, :]
        logp.setflags(write=False)
        return logp

    def log_table(self, theta: ThetaLike) -> np.ndarray:
        t = self.domain.check(theta)
        return self._table(tuple(float(v) for v in t))

    def table(self, theta: ThetaLike) -> np.ndarray:
        return np.exp(self.log_table(theta))

    def true_table(self) -> np.ndarray:
        return self.table(self.true_param)

    @staticmethod
    def _index(x, y):
        a = np.asarray(x)[..., 0].astype(np.intp)
        b = np.asarray(y)[..., 0].astype(np.intp)
        return a, b

    def log_density(self, theta, x, y):
        a, b = self._index(x, y)
        return self.log_table(theta)[a, b]

    def grad_log_table(self, theta: ThetaLike) -> np.ndarray:
        """``d log p / d theta`` for every cell, shape ``(d, nx, ny)``.

        Differentiating the two marginal constraints gives a linear system for
        the derivatives of the log scalings (rank-deficient by one gauge
        direction, which cancels in ``alpha_a + beta_b``).
        """
        p = self.table(theta)
        nx, ny = self.nx, self.ny
        A = np.zeros((nx + ny, nx + ny))
        A[:nx, :nx] = np.eye(nx)
        A[:nx, nx:] = p * self.nu[None, :]
        A[nx:, :nx] = (p * self.mu[:, None]).T
        A[nx:, nx:] = np.eye(ny)
        out = np.empty(self.features.shape)
        for l, g in enumerate(self.features):
            rhs = np.concatenate([-(p * g) @ self.nu, -(self.mu @ (p * g))])
            sol = np.linalg.lstsq(A, rhs, rcond=None)[0]
            out[l] = g + sol[:nx, None] + sol[None, nx:]
        return out

    def grad_log_density(self, theta: ThetaLike, x, y) -> np.ndarray:
        a, b = self._index(x, y)
        return np.moveaxis(self.grad_log_table(theta)[:, a, b], 0, -1)

    def grad_density(self, theta: ThetaLike, x, y) -> np.ndarray:
        return self.density(theta, x, y)[..., None] * self.grad_log_density(theta, x, y)

    def l2_inner(self, theta: ThetaLike, theta2: ThetaLike) -> float:
        w = np.outer(self.mu, self.nu)
        return math.fsum((w * self.table(theta) * self.table(theta2)).ravel())

    def joint_probabilities(self) -> np.ndarray:
        """Cell probabilities of the true joint law, ``mu_a nu_b p*(a, b)``."""
        return np.outer(self.mu, self.nu) * self.true_table()

    def sample_pairs(self, rng: np.random.Generator, n: int):
        probs = self.joint_probabilities().ravel()
        cells = rng.choice(probs.size, size=n, p=probs / probs.sum())
        a, b = np.divmod(cells, self.ny)
        return a[:, None].astype(np.float64), b[:, None].astype(np.float64)


def exact_expectation(model: DiscreteTabularModel,
                      f: Callable[[int, int], float]) -> float:
    """``E_pi f(X, Y)`` as an exact finite sum over the alphabet."""
    w = model.joint_probabilities()
    return math.fsum(w[a, b] * f(a, b) for a in range(model.nx) for b in range(model.ny))
