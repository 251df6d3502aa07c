"""Deterministic minimisers over a parameter box."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import ParamDomain, ParamPoint
from .errors import NonFiniteObjective, ParamOutOfDomain

__all__ = ["MinimizeOptions", "MinimizeResult", "minimize_scalar", "minimize_box",
           "finite_diff_grad"]

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class MinimizeOptions:
    grid_points: int = 61
    refine_tol: float = 1e-6
    max_refine_iters: int = 200

    def __post_init__(self):
        if self.grid_points < 3:
            raise ValueError("grid_points must be >= 3")
        if not self.refine_tol > 0:
            raise ValueError("refine_tol must be positive")
        if self.max_refine_iters < 1:
            raise ValueError("max_refine_iters must be >= 1")


@dataclass(frozen=True)
class MinimizeResult:
    arg: ParamPoint
    value: float
    evals: int
    converged: bool


class _Counted:
    def __init__(self, fn):
        self.fn = fn
        self.evals = 0

    def __call__(self, theta):
        self.evals += 1
        v = float(self.fn(theta))
        if not math.isfinite(v):
            raise NonFiniteObjective(f"objective is {v} at theta={theta}")
        return v


def _better(v, t, best_v, best_t):
    # strict improvement, ties go to the smaller theta
    return v < best_v or (v == best_v and t < best_t)


def minimize_scalar(objective: Callable[[float], float], domain: ParamDomain,
                    opts: Optional[MinimizeOptions] = None) -> MinimizeResult:
    """Grid scan followed by golden-section search around the best grid point.

    The returned point is the best of every evaluated point, so the value is
    never worse than the grid minimum.  Ties resolve to the smaller ``theta``.

    Parameters
    ----------
    objective : callable
        Maps a float ``theta`` to a finite float.
    domain : ParamDomain
        One-dimensional search interval (inclusive).
    opts : MinimizeOptions, optional
    """
    opts = opts or MinimizeOptions()
    if domain.dim != 1:
        raise ValueError("minimize_scalar needs a 1-dim domain")
    f = _Counted(objective)
    lo, hi = domain.lower[0], domain.upper[0]
    n = opts.grid_points
    grid = [lo + (hi - lo) * i / (n - 1) for i in range(n)]
    grid[-1] = hi
    values = [f(t) for t in grid]
    ib = int(np.argmin(values))  # first occurrence = smallest theta
    best_t, best_v = grid[ib], values[ib]

    a = grid[max(ib - 1, 0)]
    b = grid[min(ib + 1, n - 1)]
    x1 = b - _INV_PHI * (b - a)
    x2 = a + _INV_PHI * (b - a)
    f1, f2 = f(x1), f(x2)
    for t, v in ((x1, f1), (x2, f2)):
        if _better(v, t, best_v, best_t):
            best_t, best_v = t, v
    iters = 0
    while b - a > opts.refine_tol and iters < opts.max_refine_iters:
        iters += 1
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INV_PHI * (b - a)
            f1 = f(x1)
            t, v = x1, f1
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INV_PHI * (b - a)
            f2 = f(x2)
            t, v = x2, f2
        if _better(v, t, best_v, best_t):
            best_t, best_v = t, v
    return MinimizeResult(ParamPoint((best_t,)), best_v, f.evals, b - a <= opts.refine_tol)


def minimize_box(objective: Callable[[np.ndarray], float],
                 gradient: Callable[[np.ndarray], np.ndarray],
                 domain: ParamDomain,
                 opts: Optional[MinimizeOptions] = None,
                 x0=None, tol: float = 1e-6) -> MinimizeResult:
    """Projected gradient descent with Armijo backtracking.

    Starts at the box centre unless ``x0`` is given and stops once the
    projected-gradient step ``||theta - P(theta - grad)||`` drops below ``tol``.
    """
    opts = opts or MinimizeOptions()
    f = _Counted(objective)
    theta = domain.project(domain.center if x0 is None else x0)
    fx = f(theta)
    step = 1.0
    converged = False
    for _ in range(opts.max_refine_iters):
        g = np.asarray(gradient(theta), dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise NonFiniteObjective(f"gradient is not finite at theta={theta}")
        if np.linalg.norm(theta - domain.project(theta - g)) < tol:
            converged = True
            break
        t = min(1.0, 2.0 * step)
        while True:
            cand = domain.project(theta - t * g)
            fc = f(cand)
            if fc <= fx + 1e-4 * float(g @ (cand - theta)):
                break
            t *= 0.5
            if t < 1e-16:
                break
        if t < 1e-16 or np.array_equal(cand, theta):
            # no representable descent left
            converged = np.linalg.norm(theta - domain.project(theta - g)) < tol
            break
        theta, fx, step = cand, fc, t
    return MinimizeResult(ParamPoint(tuple(theta)), fx, f.evals, converged)


def finite_diff_grad(objective: Callable[[np.ndarray], float], theta, h: float = 1e-5,
                     domain: Optional[ParamDomain] = None) -> np.ndarray:
    """Central differences ``(f(theta + h e_i) - f(theta - h e_i)) / 2h``."""
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    grad = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        plus, minus = theta + e, theta - e
        if domain is not None and not (domain.contains(plus) and domain.contains(minus)):
            raise ParamOutOfDomain(f"theta +- h leaves the domain in coordinate {i}")
        grad[i] = (float(objective(plus)) - float(objective(minus))) / (2 * h)
    return grad
