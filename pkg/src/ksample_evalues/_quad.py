"""Quadrature and summation grids over family supports.

Continuous expectations use Gauss-Legendre nodes, mapped through log space on
half-line supports so that a single grid resolves every scale in a range of
mean parameters.  Discrete expectations enumerate the support, truncated where
the remaining tail mass is below ``tail`` for every parameter under
consideration.  Tails are chosen far smaller than any tolerance used upstream.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .expfam import FamilySpec

TAIL = 1e-15


@lru_cache(maxsize=64)
def _leggauss(n: int):
    return np.polynomial.legendre.leggauss(n)


def _gl(lo: float, hi: float, n: int):
    x, w = _leggauss(n)
    mid = 0.5 * (hi + lo)
    half = 0.5 * (hi - lo)
    return mid + half * x, half * w


def support_nodes(spec: FamilySpec, mus, n: int = 2048, tail: float = TAIL):
    """Nodes and weights for integrals of smooth densities over the support.

    ``mus`` is the collection of mean parameters whose distributions the grid
    must resolve; sum(w * f(x)) approximates the Lebesgue/counting integral.
    """
    mus = np.atleast_1d(np.asarray(mus, dtype=float))
    s = spec.support
    if s.discrete:
        hi = max(spec.quantile(m, 1.0 - tail) for m in mus)
        if np.isfinite(s.hi):
            hi = min(hi, s.hi)
        x = np.arange(int(s.lo), int(hi) + 1, dtype=float)
        return x, np.ones_like(x)
    lo = min(spec.quantile(m, tail) for m in mus)
    hi = max(spec.quantile(m, 1.0 - tail) for m in mus)
    if np.isfinite(s.lo) and s.lo == 0.0 and lo > 0:
        # half line (0, inf): log-space nodes cover all scales uniformly
        t, w = _gl(np.log(lo) - 2.0, np.log(hi) + 0.2, n)
        x = np.exp(t)
        return x, w * x
    if np.isfinite(s.hi) and s.hi == 0.0 and hi < 0:
        # half line (-inf, 0): mirror of the positive case
        t, w = _gl(np.log(-hi) - 2.0, np.log(-lo) + 0.2, n)
        x = -np.exp(t)[::-1]
        return x, (w * np.exp(t))[::-1]
    span = hi - lo
    return _gl(lo - 0.05 * span, hi + 0.05 * span, n)


def sum_nodes(
    spec: FamilySpec,
    mus,
    k: int,
    n: int = 2048,
    tail: float = TAIL,
):
    """Grid for integrals over the support of Z = X_1 + ... + X_k.

    ``mus`` collects every mean parameter appearing in any of the k-vectors of
    interest; quantile envelopes of the equal-parameter sums bound the
    support of all heterogeneous sums between them.
    """
    mus = np.atleast_1d(np.asarray(mus, dtype=float))
    s = spec.support
    if s.discrete:
        hi = max(spec.sum_quantile(m, k, 1.0 - tail) for m in mus)
        if np.isfinite(s.hi):
            hi = min(hi, k * s.hi)
        z = np.arange(int(k * s.lo), int(hi) + 1, dtype=float)
        return z, np.ones_like(z)
    los = [spec.sum_quantile(m, k, tail) for m in mus]
    his = [spec.sum_quantile(m, k, 1.0 - tail) for m in mus]
    lo, hi = min(los), max(his)
    if np.isfinite(s.lo) and s.lo == 0.0:
        t, w = _gl(np.log(lo) - 2.0, np.log(hi) + 0.2, n)
        z = np.exp(t)
        return z, w * z
    if np.isfinite(s.hi) and s.hi == 0.0:
        t, w = _gl(np.log(-hi) - 2.0, np.log(-lo) + 0.2, n)
        z = -np.exp(t)[::-1]
        return z, (w * np.exp(t))[::-1]
    span = hi - lo
    return _gl(lo - 0.05 * span, hi + 0.05 * span, n)
