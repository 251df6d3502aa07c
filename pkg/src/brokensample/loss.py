"""Loss functionals for batched broken samples.

All empirical losses are symmetric in the within-batch order of ``xs`` and of
``ys``.  Per-batch partial sums are formed with a fixed reduction order and
combined across batches with :func:`math.fsum`, so a value never depends on
how batches were chunked or scheduled.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .core import Dataset, DensityModel, ThetaLike
from .errors import BatchTooLarge, NonFiniteLoss, StateSpaceTooLarge
from .models import DiscreteTabularModel

__all__ = [
    "LossReport",
    "pseudo_loss",
    "pseudo_loss_grad",
    "mixture_pseudo_loss",
    "full_nll_permanent",
    "limit_loss",
    "expected_loss_exact",
    "expected_loss_bruteforce",
    "mixture_kl",
    "permanent",
    "log_permanent",
    "MAX_PERMANENT_SIZE",
    "MAX_BRUTEFORCE_STATES",
]

MAX_PERMANENT_SIZE = 12
MAX_BRUTEFORCE_STATES = 10**6
# density evaluations per vectorised chunk
_CHUNK_PAIRS = 1 << 18


@dataclass(frozen=True)
class LossReport:
    value: float
    gradient: Optional[np.ndarray] = None
    eval_count: int = 0

    def __float__(self):
        return self.value


def _chunks(N: int, per_batch: int):
    step = max(1, _CHUNK_PAIRS // max(per_batch, 1))
    for start in range(0, N, step):
        yield slice(start, min(N, start + step))


def _pair_log_density(model, t, xs, ys):
    return model.log_density(t, xs[:, :, None, :], ys[:, None, :, :])


def _pseudo_batch_sums(model: DensityModel, t: np.ndarray, xs: np.ndarray,
                       ys: np.ndarray, want_grad: bool = False, generic: bool = False):
    """Per-batch ``sum_ij log(p_ij / M + (M - 1) / M)`` and gradient sums.

    ``generic=True`` forces the vectorised path even when the model ships a
    compiled kernel.
    """
    N, M = xs.shape[0], xs.shape[1]
    fast = getattr(model, "pseudo_batch_sums", None)
    if M >= 2 and fast is not None and not generic:
        return fast(t, xs, ys, want_grad)
    sums = np.empty(N)
    gsums = np.empty((N, model.d)) if want_grad else None
    for sl in _chunks(N, M * M):
        L = _pair_log_density(model, t, xs[sl], ys[sl])
        C = L.shape[0]
        if M == 1:
            terms = L
        else:
            p = np.exp(L)
            terms = np.log1p((p - 1.0) / M)
        sums[sl] = terms.reshape(C, -1).sum(axis=1)
        if want_grad:
            G = model.grad_log_density(t, xs[sl][:, :, None, :], ys[sl][:, None, :, :])
            if M > 1:
                G = (p / (p + (M - 1.0)))[..., None] * G
            gsums[sl] = G.reshape(C, -1, model.d).sum(axis=1)
    return sums, gsums


def _finish(batch_sums: np.ndarray, N: int, what: str) -> float:
    value = -math.fsum(batch_sums) / N
    if not math.isfinite(value):
        raise NonFiniteLoss(f"{what} is not finite")
    return value


def _finish_grad(gsums: np.ndarray, N: int) -> np.ndarray:
    g = np.array([-math.fsum(gsums[:, l]) / N for l in range(gsums.shape[1])])
    if not np.all(np.isfinite(g)):
        raise NonFiniteLoss("gradient is not finite")
    return g


def pseudo_loss(model: DensityModel, theta: ThetaLike, dataset: Dataset,
                *, generic: bool = False) -> LossReport:
    r"""Negative pseudo-log-likelihood of ``dataset`` at ``theta``.

    .. math:: f(\theta) = -\frac1N \sum_k \sum_{i,j}
              \log\Big(\frac{p^\theta(X_i^k, Y_j^k)}{M} + \frac{M-1}{M}\Big)

    Every cross pair is treated as a draw from the mixture of the joint law
    (weight ``1/M``) and the product of marginals.  At ``M == 1`` this is the
    ordinary negative log-likelihood.
    """
    t = model.domain.check(theta)
    sums, _ = _pseudo_batch_sums(model, t, dataset.xs, dataset.ys, generic=generic)
    return LossReport(_finish(sums, dataset.N, "pseudo loss"), None,
                      dataset.N * dataset.M ** 2)


def pseudo_loss_grad(model: DensityModel, theta: ThetaLike, dataset: Dataset,
                     *, generic: bool = False) -> LossReport:
    """Pseudo loss together with its analytic gradient in ``theta``.

    Each cross pair contributes ``(dp/M) / (p/M + (M-1)/M)``; this is
    evaluated as ``p * dlog p / (p + M - 1)`` so tiny densities stay finite.
    """
    t = model.domain.check(theta, strict=True)
    sums, gsums = _pseudo_batch_sums(model, t, dataset.xs, dataset.ys,
                                     want_grad=True, generic=generic)
    return LossReport(_finish(sums, dataset.N, "pseudo loss"),
                      _finish_grad(gsums, dataset.N), dataset.N * dataset.M ** 2)


def mixture_pseudo_loss(model: DensityModel, theta: ThetaLike,
                        dataset: Dataset) -> LossReport:
    r"""Mixture variant: ``-(1/N) sum_k sum_j log((1/M) sum_i p(X_i^k, Y_j^k))``."""
    t = model.domain.check(theta)
    xs, ys = dataset.xs, dataset.ys
    N, M = dataset.N, dataset.M
    sums = np.empty(N)
    for sl in _chunks(N, M * M):
        L = _pair_log_density(model, t, xs[sl], ys[sl])
        if M == 1:
            terms = L[:, 0, :]
        else:
            terms = logsumexp(L, axis=1) - math.log(M)
        sums[sl] = terms.sum(axis=1)
    return LossReport(_finish(sums, N, "mixture pseudo loss"), None, N * M * M)


# -- permanents ----------------------------------------------------------------

def _ryser(A: np.ndarray) -> np.ndarray:
    """Permanent of the trailing square axes by Ryser's formula (Gray code)."""
    n = A.shape[-1]
    row_sums = np.zeros(A.shape[:-1])
    total = np.zeros(A.shape[:-2])
    member = [False] * n
    size = 0
    for k in range(1, 1 << n):
        j = (k & -k).bit_length() - 1
        if member[j]:
            row_sums -= A[..., :, j]
            size -= 1
        else:
            row_sums += A[..., :, j]
            size += 1
        member[j] = not member[j]
        prod = np.prod(row_sums, axis=-1)
        if size % 2:
            total -= prod
        else:
            total += prod
    return total if n % 2 == 0 else -total


def permanent(A) -> float:
    """Permanent of a square matrix, ``sum_sigma prod_i A[i, sigma(i)]``."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("permanent needs a square matrix")
    if A.shape[0] > 20:
        raise BatchTooLarge("Ryser permanent limited to n <= 20")
    return float(_ryser(A))


def log_permanent(log_A: np.ndarray) -> np.ndarray:
    """``log perm(exp(log_A))`` over trailing square axes, with row scaling."""
    rowmax = log_A.max(axis=-1)
    perm = _ryser(np.exp(log_A - rowmax[..., None]))
    return rowmax.sum(axis=-1) + np.log(perm)


def full_nll_permanent(model: DensityModel, theta: ThetaLike,
                       dataset: Dataset) -> LossReport:
    """Exact broken-sample negative log-likelihood.

    Averages the joint density over all ``M!`` pairings, i.e.
    ``-(1/N) sum_k log(perm(A_k) / M!)`` with ``A_k[i, j] = p(X_i^k, Y_j^k)``.
    Cost grows as ``2^M``, so batches are limited to ``M <= 12``.
    """
    M = dataset.M
    if M > MAX_PERMANENT_SIZE:
        raise BatchTooLarge(f"M={M} exceeds {MAX_PERMANENT_SIZE} for the permanent")
    t = model.domain.check(theta)
    N = dataset.N
    sums = np.empty(N)
    log_mfact = math.lgamma(M + 1)
    for sl in _chunks(N, M * M * (1 << M)):
        L = _pair_log_density(model, t, dataset.xs[sl], dataset.ys[sl])
        sums[sl] = log_permanent(L) - log_mfact
    return LossReport(_finish(sums, N, "permanent likelihood"), None, N * M * M)


# -- population-level losses ---------------------------------------------------

def limit_loss(model: DensityModel, theta: ThetaLike) -> float:
    """Large-``M`` limit of the expected pseudo loss.

    ``(||p^theta - p*||^2 - ||p*||^2 + 1) / 2`` in ``L2(mu x nu)``; minimised at
    the L2 projection of the truth onto the family.
    """
    return 0.5 * (model.l2_dist_sq(theta) - model.l2_norm_sq_true() + 1.0)


def _mixture_log(p_or_logp: np.ndarray, M: int, is_log: bool = False) -> np.ndarray:
    """Elementwise ``log(p/M + (M-1)/M)``, exact ``log p`` at ``M == 1``."""
    if M == 1:
        return p_or_logp if is_log else np.log(p_or_logp)
    p = np.exp(p_or_logp) if is_log else p_or_logp
    return np.log1p((p - 1.0) / M)


def expected_loss_exact(model: DiscreteTabularModel, theta: ThetaLike, M: int) -> float:
    r"""Exact expectation of the single-batch pseudo loss on finite alphabets.

    Integrating out all but one (diagonal) or two (off-diagonal) pairs leaves

    .. math:: E f = -M^2 \sum_{a,b} \mu_a \nu_b
              \log\Big(1 + \frac{p^\theta_{ab} - 1}{M}\Big)
              \Big(\frac{p^*_{ab}}{M} + \frac{M-1}{M}\Big)
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    logp = model.log_table(theta)
    pstar = model.true_table()
    w = np.outer(model.mu, model.nu) * (pstar / M + (M - 1.0) / M)
    return -M * M * math.fsum((w * _mixture_log(logp, M, is_log=True)).ravel())


def expected_loss_bruteforce(model: DiscreteTabularModel, theta: ThetaLike,
                             M: int) -> float:
    """Expected single-batch pseudo loss by enumerating every batch.

    Sums the pseudo loss of each of the ``(nx*ny)^M`` possible batches of
    pairs, weighted by its probability under the true joint law.  Shares no
    algebra with :func:`expected_loss_exact`.
    """
    ncell = model.nx * model.ny
    if ncell ** M > MAX_BRUTEFORCE_STATES:
        raise StateSpaceTooLarge(
            f"{ncell}^{M} batches exceeds {MAX_BRUTEFORCE_STATES}")
    t = model.domain.check(theta)
    probs = model.joint_probabilities().ravel()
    cells = np.array(list(itertools.product(range(ncell), repeat=M)), dtype=np.intp)
    a, b = np.divmod(cells, model.ny)
    xs = a[..., None].astype(np.float64)
    ys = b[..., None].astype(np.float64)
    batch_sums, _ = _pseudo_batch_sums(model, t, xs, ys, generic=True)
    weights = np.prod(probs[cells], axis=1)
    return -math.fsum(weights * batch_sums)


def mixture_kl(model: DiscreteTabularModel, theta: ThetaLike, M: int) -> float:
    """KL divergence between the true and candidate pair mixtures.

    Each mixture is ``(p/M + (M-1)/M) * (mu x nu)``, the law of a uniformly
    chosen cross pair.
    """
    w = np.outer(model.mu, model.nu)
    log_true = _mixture_log(np.log(model.true_table()), M, is_log=True)
    log_cand = _mixture_log(model.log_table(theta), M, is_log=True)
    m_true = np.exp(log_true)
    return math.fsum((w * m_true * (log_true - log_cand)).ravel())
