"""Compiled inner loops for the torus pseudo-likelihood.

Two equivalent evaluations of the per-axis wrapped Gaussian are used:

* lattice form, ``sum_k exp(-(d+k)^2 / 2 s^2)`` on the minimum image, cheap for
  small ``s`` where one or two terms survive;
* Fourier form, ``1 + 2 sum_n exp(-2 pi^2 s^2 n^2) cos(2 pi n d)`` (already
  divided by ``sqrt(2 pi) s``), cheap for large ``s``.  ``cos(2 pi d)`` splits
  into per-point cosines and sines and ``cos(2 pi n d)`` follows by the
  Chebyshev recurrence, so no transcendental is evaluated per pair.

Work is done one row ``i`` at a time over buffers of length ``M`` so the
arithmetic vectorises; each row is then folded into the batch total with
Neumaier compensation in ``j`` order.  The vectorised numpy path in
:mod:`brokensample.loss` is the reference implementation.
"""

import math

import numpy as np
from numba import njit

# relative size below which lattice or Fourier terms are dropped
_TAIL = 40.0


@njit(cache=True)
def _fold(acc, comp, row):
    for term in row:
        t = acc + term
        if abs(acc) >= abs(term):
            comp += (acc - t) + term
        else:
            comp += (term - t) + acc
        acc = t
    return acc, comp


@njit(cache=True)
def _lattice_axis(d, s2, radius, rest, mom):
    # rest = sum_{k != 0} w_k, mom = sum_k w_k (d+k)^2, weights relative to k = 0
    n = d.size
    for j in range(n):
        rest[j] = 0.0
        mom[j] = d[j] * d[j]
    for k in range(1, radius + 1):
        kf = float(k)
        # shift +k matters only for d < lim, shift -k only for d > -lim
        lim = (_TAIL * s2 - kf * kf) / (2.0 * kf)
        if lim <= -0.5:
            break
        for j in range(n):
            if d[j] < lim:
                w = math.exp(-(2.0 * d[j] * kf + kf * kf) / s2)
                rest[j] += w
                mom[j] += w * (d[j] + kf) * (d[j] + kf)
        for j in range(n):
            if d[j] > -lim:
                w = math.exp(-(kf * kf - 2.0 * d[j] * kf) / s2)
                rest[j] += w
                mom[j] += w * (d[j] - kf) * (d[j] - kf)


@njit(cache=True)
def torus_lattice_sums(xs, ys, sigma, radius, want_grad):
    """Per-batch sums of ``log1p((p_ij - 1)/M)`` and of ``dp/(p + M - 1)``.

    ``xs``, ``ys`` have shape ``(N, M, 2)``; requires ``M >= 2``.
    """
    N, M = xs.shape[0], xs.shape[1]
    s2 = 2.0 * sigma * sigma
    log_norm = math.log(2.0 * math.pi * sigma * sigma)
    inv_s3 = 1.0 / (sigma * sigma * sigma)
    sums = np.zeros(N)
    gsums = np.zeros(N)
    d0 = np.empty(M)
    d1 = np.empty(M)
    r0 = np.empty(M)
    r1 = np.empty(M)
    m0 = np.empty(M)
    m1 = np.empty(M)
    terms = np.empty(M)
    gterms = np.empty(M)
    for k in range(N):
        acc = 0.0
        comp = 0.0
        gacc = 0.0
        gcomp = 0.0
        for i in range(M):
            for j in range(M):
                a = xs[k, i, 0] - ys[k, j, 0]
                d0[j] = a - np.rint(a)
                b = xs[k, i, 1] - ys[k, j, 1]
                d1[j] = b - np.rint(b)
            _lattice_axis(d0, s2, radius, r0, m0)
            _lattice_axis(d1, s2, radius, r1, m1)
            for j in range(M):
                p = math.exp(-(d0[j] * d0[j] + d1[j] * d1[j]) / s2 - log_norm) \
                    * (1.0 + r0[j]) * (1.0 + r1[j])
                terms[j] = math.log1p((p - 1.0) / M)
                if want_grad:
                    dlog = (m0[j] / (1.0 + r0[j]) + m1[j] / (1.0 + r1[j])) * inv_s3 \
                        - 2.0 / sigma
                    gterms[j] = p * dlog / (p + M - 1.0)
            acc, comp = _fold(acc, comp, terms)
            if want_grad:
                gacc, gcomp = _fold(gacc, gcomp, gterms)
        sums[k] = acc + comp
        gsums[k] = gacc + gcomp
    return sums, gsums


@njit(cache=True)
def _fourier_axis(c, qs, dqs, f, df, t_prev, t_cur, want_grad):
    # f = 1 + 2 sum_n q_n T_n(c); df likewise with dq_n = dq_n/dsigma
    M = c.size
    for j in range(M):
        t_prev[j] = 1.0
        t_cur[j] = c[j]
        f[j] = 1.0 + 2.0 * qs[0] * c[j]
        df[j] = 2.0 * dqs[0] * c[j]
    for n in range(1, qs.size):
        q2 = 2.0 * qs[n]
        dq2 = 2.0 * dqs[n]
        for j in range(M):
            t_next = 2.0 * c[j] * t_cur[j] - t_prev[j]
            t_prev[j] = t_cur[j]
            t_cur[j] = t_next
            f[j] += q2 * t_next
        if want_grad:
            for j in range(M):
                df[j] += dq2 * t_cur[j]


@njit(cache=True)
def torus_fourier_sums(xs, ys, sigma, nterms, want_grad):
    """Same sums as :func:`torus_lattice_sums` via the Fourier form."""
    N, M = xs.shape[0], xs.shape[1]
    two_pi = 2.0 * math.pi
    qs = np.empty(nterms)
    dqs = np.empty(nterms)
    for n in range(1, nterms + 1):
        a = 2.0 * math.pi * math.pi * n * n
        qs[n - 1] = math.exp(-a * sigma * sigma)
        dqs[n - 1] = -2.0 * a * sigma * qs[n - 1]
    sums = np.zeros(N)
    gsums = np.zeros(N)
    cy = np.empty((2, M))
    sy = np.empty((2, M))
    c0 = np.empty(M)
    c1 = np.empty(M)
    f0 = np.empty(M)
    f1 = np.empty(M)
    df0 = np.empty(M)
    df1 = np.empty(M)
    tp = np.empty(M)
    tc = np.empty(M)
    terms = np.empty(M)
    gterms = np.empty(M)
    for k in range(N):
        for j in range(M):
            for ax in range(2):
                cy[ax, j] = math.cos(two_pi * ys[k, j, ax])
                sy[ax, j] = math.sin(two_pi * ys[k, j, ax])
        acc = 0.0
        comp = 0.0
        gacc = 0.0
        gcomp = 0.0
        for i in range(M):
            cx0 = math.cos(two_pi * xs[k, i, 0])
            sx0 = math.sin(two_pi * xs[k, i, 0])
            cx1 = math.cos(two_pi * xs[k, i, 1])
            sx1 = math.sin(two_pi * xs[k, i, 1])
            for j in range(M):
                c0[j] = cx0 * cy[0, j] + sx0 * sy[0, j]
                c1[j] = cx1 * cy[1, j] + sx1 * sy[1, j]
            _fourier_axis(c0, qs, dqs, f0, df0, tp, tc, want_grad)
            _fourier_axis(c1, qs, dqs, f1, df1, tp, tc, want_grad)
            for j in range(M):
                p = f0[j] * f1[j]
                terms[j] = math.log1p((p - 1.0) / M)
                if want_grad:
                    gterms[j] = (df0[j] * f1[j] + f0[j] * df1[j]) / (p + M - 1.0)
            acc, comp = _fold(acc, comp, terms)
            if want_grad:
                gacc, gcomp = _fold(gacc, gcomp, gterms)
        sums[k] = acc + comp
        gsums[k] = gacc + gcomp
    return sums, gsums
