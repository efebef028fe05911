"""One-parameter exponential families in mean-value parameterization.

Every family here is indexed by its mean parameter mu = E[X], where X is the
sufficient statistic of the observed variable.  Working on the sufficient
statistic makes each family *natural*: the density of X with respect to the
family's base measure rho is

    p_mu(x) = exp(lambda(mu) * x - A(lambda(mu))),

where lambda(mu) is the canonical parameter dual to mu and A is the
log-normalizer.  The carrier function h of the usual textbook form is absorbed
into rho, so rho = h(x) dx (or h(x) * counting measure).  Two density views
are exposed:

* ``log_density(mu, x)``  -- log p_mu w.r.t. rho (carrier absorbed), i.e.
  exactly ``lambda(mu) * x - A(lambda(mu))``.
* ``log_pdf(mu, x)``      -- log density w.r.t. Lebesgue / counting measure,
  i.e. ``log_density + log h(x)``.  This is the view used for sampling checks,
  quadrature and Monte Carlo.

Likelihood ratios, KL divergences and e-values are invariant to this choice
because the carriers cancel; integrals are always taken in the
Lebesgue/counting view.

Supported families (mean space, sufficient statistic of the raw observation):

======================  ==============  =====================================
family                  mean space      sufficient statistic / conventions
======================  ==============  =====================================
bernoulli               (0, 1)          X = U in {0, 1}; rho = counting
gaussian_mean           (-inf, inf)     X = U, N(mu, sigma^2) with sigma^2
                                        fixed; rho = N(0, sigma^2)
gaussian_variance       (0, inf)        X = (U - m)^2 with the location m
                                        fixed; mu = sigma^2; rho has carrier
                                        x^(-1/2) / sqrt(2 pi)
poisson                 (0, inf)        X = U; rho has carrier 1/x!
exponential             (0, inf)        X = U, mean mu (rate 1/mu); rho =
                                        Lebesgue on (0, inf)
geometric               (0, inf)        X = U = number of failures before the
                                        first success; mu = (1-p)/p; rho =
                                        counting on {0, 1, ...}
beta_fixed_alpha        (-inf, 0)       X = log(1 - U) for U ~ Beta(alpha,
                                        beta) with alpha fixed; free shape
                                        beta is the canonical parameter
======================  ==============  =====================================

Pareto (fixed scale v) and log-normal observations reduce to the exponential
and Gaussian families via ``reduce_sufficient``.

All randomness goes through an explicit seed or ``numpy.random.Generator``;
integer seeds are expanded with the counter-based Philox bit generator so that
every stochastic operation is bit-reproducible.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg, special, stats


class MeanDomainError(ValueError):
    """A mean parameter lies outside the family's open mean space."""


class SupportError(ValueError):
    """An observation (or Z value) lies outside the support."""


class ComputationError(RuntimeError):
    """A numeric routine (quadrature, convolution) failed to converge."""


def as_generator(seed) -> np.random.Generator:
    """Return a counter-based generator for an int seed; pass through Generators."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def spawn_generator(seed: int, *stream: int) -> np.random.Generator:
    """Independent, reproducible sub-stream (e.g. one per trial or grid cell)."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(stream))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class Support:
    """Support of the sufficient statistic.

    kind is "finite" (finite integer set), "lattice" (integers >= lo) or
    "interval" (open real interval).
    """

    kind: str
    lo: float
    hi: float

    @property
    def discrete(self) -> bool:
        return self.kind in ("finite", "lattice")

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.discrete:
            ok = np.isclose(x, np.round(x)) & (x >= self.lo - 1e-9)
            if np.isfinite(self.hi):
                ok &= x <= self.hi + 1e-9
            return ok
        return (x > self.lo) & (x < self.hi)


class FamilySpec(ABC):
    """Base class for the concrete families.

    Subclasses provide the parameter maps and closed-form moments; everything
    that only depends on those (densities, KL, Fisher information, central
    moments) lives here.
    """

    family_id: str
    mean_space: tuple[float, float]
    support: Support
    base_measure: str

    # -- parameter maps -------------------------------------------------

    @abstractmethod
    def natural_from_mean(self, mu: float) -> float:
        """Canonical parameter lambda(mu); inverse of mean_from_natural."""

    @abstractmethod
    def mean_from_natural(self, lam: float) -> float:
        """Mean parameter A'(lambda)."""

    @abstractmethod
    def log_partition(self, lam) -> float:
        """Log-normalizer A(lambda)."""

    # -- moments ---------------------------------------------------------

    @abstractmethod
    def variance(self, mu: float) -> float:
        """Var[X] under P_mu, i.e. A''(lambda(mu))."""

    @abstractmethod
    def variance_d1(self, mu: float) -> float:
        """d Var / d mu."""

    @abstractmethod
    def variance_d2(self, mu: float) -> float:
        """d^2 Var / d mu^2."""

    def fisher_info(self, mu: float) -> float:
        """Fisher information for the mean parameter: 1 / Var[X]."""
        return 1.0 / self.variance(mu)

    def fisher_info_d1(self, mu: float) -> float:
        """d I / d mu = -Var' / Var^2."""
        v = self.variance(mu)
        return -self.variance_d1(mu) / (v * v)

    def central_moment3(self, mu: float) -> float:
        """E[(X - mu)^3] = Var'(mu) * Var(mu)."""
        return self.variance_d1(mu) * self.variance(mu)

    def central_moment4(self, mu: float) -> float:
        """E[(X - mu)^4] = 3 Var^2 + (Var'' Var + Var'^2) Var."""
        v = self.variance(mu)
        d1 = self.variance_d1(mu)
        d2 = self.variance_d2(mu)
        return 3.0 * v * v + (d2 * v + d1 * d1) * v

    # -- densities --------------------------------------------------------

    @abstractmethod
    def log_carrier(self, x) -> np.ndarray:
        """log h(x): density of rho w.r.t. Lebesgue / counting measure."""

    def check_mean(self, mu: float) -> float:
        lo, hi = self.mean_space
        mu = float(mu)
        if not (lo < mu < hi) or not math.isfinite(mu):
            raise MeanDomainError(
                f"mu={mu!r} outside mean space ({lo}, {hi}) of family "
                f"'{self.family_id}'"
            )
        return mu

    def check_support(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        ok = self.support.contains(x)
        if not np.all(ok):
            bad = np.asarray(x)[~ok]
            raise SupportError(
                f"value(s) {bad[:5]!r} outside support of family "
                f"'{self.family_id}' ({self.support.kind}, "
                f"[{self.support.lo}, {self.support.hi}])"
            )
        return x

    def log_density(self, mu: float, x) -> np.ndarray:
        """Log-density of X w.r.t. the base measure rho: lambda*x - A(lambda)."""
        mu = self.check_mean(mu)
        x = self.check_support(x)
        lam = self.natural_from_mean(mu)
        return lam * x - self.log_partition(lam)

    def log_pdf(self, mu: float, x) -> np.ndarray:
        """Log-density of X w.r.t. Lebesgue / counting measure."""
        return self.log_density(mu, x) + self.log_carrier(np.asarray(x, dtype=float))

    def kl(self, mu_a: float, mu_b: float) -> float:
        """KL divergence D(P_mu_a || P_mu_b), in nats."""
        mu_a = self.check_mean(mu_a)
        mu_b = self.check_mean(mu_b)
        la = self.natural_from_mean(mu_a)
        lb = self.natural_from_mean(mu_b)
        return (la - lb) * mu_a - self.log_partition(la) + self.log_partition(lb)

    # -- sampling and quantiles -------------------------------------------

    @abstractmethod
    def sample(self, mu: float, n: int, rng) -> np.ndarray:
        """n i.i.d. draws of the sufficient statistic under P_mu."""

    @abstractmethod
    def quantile(self, mu: float, q: float) -> float:
        """Quantile of X under P_mu (used for support truncation)."""

    @abstractmethod
    def sum_quantile(self, mu: float, k: int, q: float) -> float:
        """Quantile of Z = sum of k i.i.d. copies under P_mu."""

    # -- Z marginal ---------------------------------------------------------

    @abstractmethod
    def sum_log_pdf(self, mus: Sequence[float], z) -> np.ndarray:
        """Log-density (w.r.t. Lebesgue / counting) of Z = X_1 + ... + X_k
        for independent X_i ~ P_mu_i."""

    def check_sum_support(self, k: int, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        s = self.support
        if s.discrete:
            lo = k * s.lo
            hi = k * s.hi if np.isfinite(s.hi) else np.inf
            ok = np.isclose(z, np.round(z)) & (z >= lo - 1e-9) & (z <= hi + 1e-9)
        else:
            lo = k * s.lo if np.isfinite(s.lo) else -np.inf
            hi = k * s.hi if np.isfinite(s.hi) else np.inf
            ok = (z > lo) & (z < hi)
        if not np.all(ok):
            bad = z[~ok]
            raise SupportError(
                f"z value(s) {bad[:5]!r} outside the support of the "
                f"k={k} sum for family '{self.family_id}'"
            )
        return z

    # -- standard parameterization (used by the heatmap protocol) ----------

    std_param_name: str = "mu"

    def mean_from_std(self, s: float) -> float:
        return float(s)

    def std_from_mean(self, mu: float) -> float:
        return float(mu)

    def default_std_range(self) -> tuple[float, float]:
        """Default grid range in the standard parameterization.

        These endpoints are artifact choices (documented in the README); they
        are configurable everywhere they are used.
        """
        raise NotImplementedError

    # -- config -------------------------------------------------------------

    def fixed_params(self) -> dict:
        return {}

    def to_config(self, mean_params: Sequence[float] | None = None) -> dict:
        cfg = {"family": self.family_id, "fixed_params": self.fixed_params()}
        if mean_params is not None:
            cfg["mean_params"] = [float(m) for m in mean_params]
        return cfg

    def __repr__(self) -> str:
        fixed = ", ".join(f"{k}={v}" for k, v in self.fixed_params().items())
        return f"{type(self).__name__}({fixed})"


class Bernoulli(FamilySpec):
    family_id = "bernoulli"
    mean_space = (0.0, 1.0)
    support = Support("finite", 0, 1)
    base_measure = "counting measure on {0, 1}"
    std_param_name = "p"

    def natural_from_mean(self, mu):
        mu = self.check_mean(mu)
        return math.log(mu / (1.0 - mu))

    def mean_from_natural(self, lam):
        return float(special.expit(lam))

    def log_partition(self, lam):
        return np.logaddexp(0.0, lam)

    def variance(self, mu):
        mu = self.check_mean(mu)
        return mu * (1.0 - mu)

    def variance_d1(self, mu):
        return 1.0 - 2.0 * self.check_mean(mu)

    def variance_d2(self, mu):
        self.check_mean(mu)
        return -2.0

    def log_carrier(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def sample(self, mu, n, rng):
        mu = self.check_mean(mu)
        rng = as_generator(rng)
        return (rng.random(n) < mu).astype(float)

    def quantile(self, mu, q):
        return 0.0 if q < 1.0 - mu else 1.0

    def sum_quantile(self, mu, k, q):
        return float(stats.binom(k, mu).ppf(q))

    def sum_log_pdf(self, mus, z):
        mus = [self.check_mean(m) for m in mus]
        z = self.check_sum_support(len(mus), z)
        pmf = np.array([1.0])
        for m in mus:
            pmf = np.convolve(pmf, [1.0 - m, m])
        with np.errstate(divide="ignore"):
            out = np.log(pmf[np.round(z).astype(int)])
        return out

    def default_std_range(self):
        return (0.1, 0.9)


class GaussianFreeMean(FamilySpec):
    """Gaussian with free mean and fixed variance sigma^2."""

    family_id = "gaussian_mean"
    mean_space = (-math.inf, math.inf)
    support = Support("interval", -math.inf, math.inf)

    def __init__(self, sigma2: float = 1.0):
        if sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        self.sigma2 = float(sigma2)
        self.base_measure = f"N(0, {self.sigma2}) on the real line"

    def fixed_params(self):
        return {"sigma2": self.sigma2}

    def natural_from_mean(self, mu):
        return self.check_mean(mu) / self.sigma2

    def mean_from_natural(self, lam):
        return float(lam) * self.sigma2

    def log_partition(self, lam):
        return 0.5 * self.sigma2 * np.asarray(lam) ** 2

    def variance(self, mu):
        self.check_mean(mu)
        return self.sigma2

    def variance_d1(self, mu):
        self.check_mean(mu)
        return 0.0

    def variance_d2(self, mu):
        self.check_mean(mu)
        return 0.0

    def log_carrier(self, x):
        x = np.asarray(x, dtype=float)
        return -0.5 * x * x / self.sigma2 - 0.5 * math.log(2.0 * math.pi * self.sigma2)

    def sample(self, mu, n, rng):
        mu = self.check_mean(mu)
        rng = as_generator(rng)
        return rng.normal(mu, math.sqrt(self.sigma2), n)

    def quantile(self, mu, q):
        return float(stats.norm(mu, math.sqrt(self.sigma2)).ppf(q))

    def sum_quantile(self, mu, k, q):
        return float(stats.norm(k * mu, math.sqrt(k * self.sigma2)).ppf(q))

    def sum_log_pdf(self, mus, z):
        mus = [self.check_mean(m) for m in mus]
        z = self.check_sum_support(len(mus), z)
        var = len(mus) * self.sigma2
        return -0.5 * (z - sum(mus)) ** 2 / var - 0.5 * math.log(2.0 * math.pi * var)

    def default_std_range(self):
        return (-2.0, 2.0)


class GaussianFreeVariance(FamilySpec):
    """Gaussian with fixed location and free variance.

    The sufficient statistic is X = (U - m)^2 ~ Gamma(1/2, scale 2 mu) with
    mu = sigma^2, so the fixed location only matters when reducing raw data.
    """

    family_id = "gaussian_variance"
    mean_space = (0.0, math.inf)
    support = Support("interval", 0.0, math.inf)
    std_param_name = "sigma"

    def __init__(self, fixed_mean: float = 0.0):
        self.fixed_mean = float(fixed_mean)
        self.base_measure = "x^(-1/2)/sqrt(2 pi) dx on (0, inf)"

    def fixed_params(self):
        return {"fixed_mean": self.fixed_mean}

    def natural_from_mean(self, mu):
        return -0.5 / self.check_mean(mu)

    def mean_from_natural(self, lam):
        return -0.5 / float(lam)

    def log_partition(self, lam):
        return -0.5 * np.log(-2.0 * np.asarray(lam))

    def variance(self, mu):
        mu = self.check_mean(mu)
        return 2.0 * mu * mu

    def variance_d1(self, mu):
        return 4.0 * self.check_mean(mu)

    def variance_d2(self, mu):
        self.check_mean(mu)
        return 4.0

    def log_carrier(self, x):
        x = np.asarray(x, dtype=float)
        return -0.5 * np.log(x) - 0.5 * math.log(2.0 * math.pi)

    def sample(self, mu, n, rng):
        mu = self.check_mean(mu)
        rng = as_generator(rng)
        return mu * rng.chisquare(1, n)

    def quantile(self, mu, q):
        return float(stats.gamma(0.5, scale=2.0 * mu).ppf(q))

    def sum_quantile(self, mu, k, q):
        return float(stats.gamma(0.5 * k, scale=2.0 * mu).ppf(q))

    def sum_log_pdf(self, mus, z):
        mus = np.array([self.check_mean(m) for m in mus])
        k = len(mus)
        z = self.check_sum_support(k, z)
        if np.ptp(mus) <= 1e-12 * mus.mean():
            shape = 0.5 * k
            scale = 2.0 * mus.mean()
            return (
                (shape - 1.0) * np.log(z)
                - z / scale
                - special.gammaln(shape)
                - shape * math.log(scale)
            )
        if k == 2:
            # sum of Gamma(1/2, 2*mu_i): modified-Bessel closed form
            a0 = 0.25 / mus[0]
            a1 = 0.25 / mus[1]
            u = np.abs(z * (a0 - a1))
            v = z * (a0 + a1)
            return (
                np.log(special.i0e(u))
                + (u - v)
                - 0.5 * math.log(4.0 * mus[0] * mus[1])
            )
        return _convolve_log_pdf(self, mus, z)

    def default_std_range(self):
        return (0.6, 2.4)

    def mean_from_std(self, s):
        return float(s) ** 2

    def std_from_mean(self, mu):
        return math.sqrt(mu)


class Poisson(FamilySpec):
    family_id = "poisson"
    mean_space = (0.0, math.inf)
    support = Support("lattice", 0, math.inf)
    base_measure = "(1/x!) * counting measure on {0, 1, ...}"
    std_param_name = "rate"

    def natural_from_mean(self, mu):
        return math.log(self.check_mean(mu))

    def mean_from_natural(self, lam):
        return math.exp(lam)

    def log_partition(self, lam):
        return np.exp(lam)

    def variance(self, mu):
        return self.check_mean(mu)

    def variance_d1(self, mu):
        self.check_mean(mu)
        return 1.0

    def variance_d2(self, mu):
        self.check_mean(mu)
        return 0.0

    def log_carrier(self, x):
        return -special.gammaln(np.asarray(x, dtype=float) + 1.0)

    def sample(self, mu, n, rng):
        mu = self.check_mean(mu)
        rng = as_generator(rng)
        return rng.poisson(mu, n).astype(float)

    def quantile(self, mu, q):
        return float(stats.poisson(mu).ppf(q))

    def sum_quantile(self, mu, k, q):
        return float(stats.poisson(k * mu).ppf(q))

    def sum_log_pdf(self, mus, z):
        mus = [self.check_mean(m) for m in mus]
        z = self.check_sum_support(len(mus), z)
        lam = sum(mus)
        return z * math.log(lam) - lam - special.gammaln(z + 1.0)

    def default_std_range(self):
        return (0.5, 5.0)


class Exponential(FamilySpec):
    """Exponential distribution with mean mu (rate 1/mu)."""

    family_id = "exponential"
    mean_space = (0.0, math.inf)
    support = Support("interval", 0.0, math.inf)
    base_measure = "Lebesgue measure on (0, inf)"
    std_param_name = "rate"

    def natural_from_mean(self, mu):
        return -1.0 / self.check_mean(mu)

    def mean_from_natural(self, lam):
        return -1.0 / float(lam)

    def log_partition(self, lam):
        return -np.log(-np.asarray(lam))

    def variance(self, mu):
        mu = self.check_mean(mu)
        return mu * mu

    def variance_d1(self, mu):
        return 2.0 * self.check_mean(mu)

    def variance_d2(self, mu):
        self.check_mean(mu)
        return 2.0

    def log_carrier(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def sample(self, mu, n, rng):
        mu = self.check_mean(mu)
        rng = as_generator(rng)
        return rng.exponential(mu, n)

    def quantile(self, mu, q):
        return float(stats.expon(scale=mu).ppf(q))

    def sum_quantile(self, mu, k, q):
        return float(stats.gamma(k, scale=mu).ppf(q))

    def sum_log_pdf(self, mus, z):
        mus = [self.check_mean(m) for m in mus]
        z = self.check_sum_support(len(mus), z)
        rates = 1.0 / np.array(mus)
        return _hypoexponential_log_pdf(rates, z)

    def default_std_range(self):
        return (0.5, 4.0)

    def mean_from_std(self, s):
        return 1.0 / float(s)

    def std_from_mean(self, mu):
        return 1.0 / float(mu)


class Geometric(FamilySpec):
    """Number of failures before the first success; mu = (1-p)/p."""

    family_id = "geometric"
    mean_space = (0.0, math.inf)
    support = Support("lattice", 0, math.inf)
    base_measure = "counting measure on {0, 1, ...}"
    std_param_name = "p"

    def natural_from_mean(self, mu):
        mu = self.check_mean(mu)
        return math.log(mu / (1.0 + mu))

    def mean_from_natural(self, lam):
        return 1.0 / math.expm1(-lam)

    def log_partition(self, lam):
        return -np.log(-np.expm1(np.asarray(lam)))

    def variance(self, mu):
        mu = self.check_mean(mu)
        return mu * (1.0 + mu)

    def variance_d1(self, mu):
        return 1.0 + 2.0 * self.check_mean(mu)

    def variance_d2(self, mu):
        self.check_mean(mu)
        return 2.0

    def log_carrier(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def _p(self, mu):
        return 1.0 / (1.0 + mu)

    def sample(self, mu, n, rng):
        mu = self.check_mean(mu)
        rng = as_generator(rng)
        return (rng.geometric(self._p(mu), n) - 1).astype(float)

    def quantile(self, mu, q):
        return float(stats.nbinom(1, self._p(mu)).ppf(q))

    def sum_quantile(self, mu, k, q):
        return float(stats.nbinom(k, self._p(mu)).ppf(q))

    def sum_log_pdf(self, mus, z):
        mus = [self.check_mean(m) for m in mus]
        z = self.check_sum_support(len(mus), z)
        zmax = int(np.max(np.round(z))) if np.size(z) else 0
        pmf = np.array([1.0])
        xs = np.arange(zmax + 1, dtype=float)
        for m in mus:
            p = self._p(m)
            comp = p * (1.0 - p) ** xs
            # truncating each component at zmax keeps entries up to zmax exact
            pmf = np.convolve(pmf, comp)[: zmax + 1]
        with np.errstate(divide="ignore"):
            return np.log(pmf[np.round(z).astype(int)])

    def default_std_range(self):
        return (0.15, 0.6)

    def mean_from_std(self, s):
        return (1.0 - float(s)) / float(s)

    def std_from_mean(self, mu):
        return 1.0 / (1.0 + float(mu))


class BetaFixedAlpha(FamilySpec):
    """Beta observations with fixed first shape alpha and free second shape.

    The sufficient statistic is X = log(1 - U) < 0 and the free shape is the
    canonical parameter.  For the default alpha = 1 the family reduces to a
    negated exponential: X = -E with E ~ Exp(rate beta) and mu = E[X] = -1/beta.

    The table-style "mean of U" parameterization is available through
    ``mean_from_beta_mean``: it converts E[U] in (0, 1) to the mean of X.
    """

    family_id = "beta_fixed_alpha"
    mean_space = (-math.inf, 0.0)
    support = Support("interval", -math.inf, 0.0)
    std_param_name = "beta"

    def __init__(self, alpha: float = 1.0):
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        self.alpha = float(alpha)
        self.base_measure = "(1 - e^x)^(alpha-1) dx on (-inf, 0)"

    def fixed_params(self):
        return {"alpha": self.alpha}

    def natural_from_mean(self, mu):
        mu = self.check_mean(mu)
        if self.alpha == 1.0:
            return -1.0 / mu
        # invert mu(beta) = psi(beta) - psi(alpha + beta), increasing in beta
        from scipy.optimize import brentq

        def g(t):
            b = math.exp(t)
            return special.digamma(b) - special.digamma(self.alpha + b) - mu

        lo, hi = -30.0, 30.0
        while g(lo) > 0:
            lo -= 20.0
        while g(hi) < 0:
            hi += 20.0
        return math.exp(brentq(g, lo, hi, xtol=1e-14, rtol=8.9e-16))

    def mean_from_natural(self, lam):
        lam = float(lam)
        if lam <= 0:
            raise MeanDomainError(
                f"canonical parameter {lam} outside (0, inf) for family "
                f"'{self.family_id}'"
            )
        return float(special.digamma(lam) - special.digamma(self.alpha + lam))

    def log_partition(self, lam):
        lam = np.asarray(lam, dtype=float)
        if self.alpha == 1.0:
            return -np.log(lam)
        return (
            special.gammaln(self.alpha)
            + special.gammaln(lam)
            - special.gammaln(self.alpha + lam)
        )

    def variance(self, mu):
        if self.alpha == 1.0:
            mu = self.check_mean(mu)
            return mu * mu
        b = self.natural_from_mean(mu)
        return float(special.polygamma(1, b) - special.polygamma(1, self.alpha + b))

    def variance_d1(self, mu):
        if self.alpha == 1.0:
            return 2.0 * self.check_mean(mu)
        b = self.natural_from_mean(mu)
        dvar_db = special.polygamma(2, b) - special.polygamma(2, self.alpha + b)
        dmu_db = special.polygamma(1, b) - special.polygamma(1, self.alpha + b)
        return float(dvar_db / dmu_db)

    def variance_d2(self, mu):
        if self.alpha == 1.0:
            self.check_mean(mu)
            return 2.0
        b = self.natural_from_mean(mu)
        p1 = special.polygamma(1, b) - special.polygamma(1, self.alpha + b)
        p2 = special.polygamma(2, b) - special.polygamma(2, self.alpha + b)
        p3 = special.polygamma(3, b) - special.polygamma(3, self.alpha + b)
        # d/dmu (p2/p1) = (p3*p1 - p2^2) / p1^3
        return float((p3 * p1 - p2 * p2) / p1**3)

    def log_carrier(self, x):
        x = np.asarray(x, dtype=float)
        if self.alpha == 1.0:
            return np.zeros_like(x)
        # 1 - e^x via expm1 keeps precision as x -> 0-
        return (self.alpha - 1.0) * np.log(-np.expm1(x))

    def mean_from_beta_mean(self, mean_u: float) -> float:
        """Convert E[U] of the beta observation to the mean of X = log(1-U)."""
        if not 0.0 < mean_u < 1.0:
            raise MeanDomainError(f"E[U]={mean_u} must lie in (0, 1)")
        # E[U] = alpha / (alpha + beta)  =>  beta = alpha (1 - E[U]) / E[U]
        b = self.alpha * (1.0 - mean_u) / mean_u
        return self.mean_from_natural(b)

    def beta_mean_from_mean(self, mu: float) -> float:
        """Convert the mean of X back to E[U]."""
        b = self.natural_from_mean(mu)
        return self.alpha / (self.alpha + b)

    def sample(self, mu, n, rng):
        mu = self.check_mean(mu)
        rng = as_generator(rng)
        b = self.natural_from_mean(mu)
        # 1 - U ~ Beta(beta, alpha); sampling it directly keeps log() accurate
        return np.log(rng.beta(b, self.alpha, n))

    def quantile(self, mu, q):
        b = self.natural_from_mean(mu)
        return float(np.log(stats.beta(b, self.alpha).ppf(q)))

    def sum_quantile(self, mu, k, q):
        if self.alpha == 1.0:
            rate = -1.0 / mu
            return -float(stats.gamma(k, scale=1.0 / rate).ppf(1.0 - q))
        # conservative bound via the alpha = 1 envelope of the same mean
        rate = -1.0 / mu
        return -float(stats.gamma(k, scale=1.0 / rate).ppf(1.0 - q)) * 2.0

    def sum_log_pdf(self, mus, z):
        mus = [self.check_mean(m) for m in mus]
        k = len(mus)
        z = self.check_sum_support(k, z)
        if self.alpha == 1.0:
            rates = np.array([-1.0 / m for m in mus])
            return _hypoexponential_log_pdf(rates, -z)
        if k == 2:
            return _convolve_log_pdf(self, np.array(mus), z)
        raise ComputationError(
            "sum density for beta with alpha != 1 is only available for k = 2"
        )

    def default_std_range(self):
        return (1.0, 8.0)

    def mean_from_std(self, s):
        return self.mean_from_natural(float(s))

    def std_from_mean(self, mu):
        return float(self.natural_from_mean(mu))


def _log_sinch(w: np.ndarray) -> np.ndarray:
    """log(sinh(w)/w) for w >= 0, stable for both tiny and large w."""
    w = np.asarray(w, dtype=float)
    out = np.empty_like(w)
    tiny = w < 1e-4
    big = w > 20.0
    mid = ~(tiny | big)
    wt = w[tiny]
    out[tiny] = np.log1p(wt * wt / 6.0 * (1.0 + wt * wt / 20.0))
    wm = w[mid]
    out[mid] = np.log(np.sinh(wm) / wm)
    wb = w[big]
    out[big] = wb - np.log(2.0 * wb) + np.log1p(-np.exp(-2.0 * wb))
    return out


def _hypoexponential_log_pdf(rates: np.ndarray, z) -> np.ndarray:
    """Log-pdf of a sum of independent exponentials with the given rates."""
    rates = np.asarray(rates, dtype=float)
    z = np.asarray(z, dtype=float)
    k = rates.size
    if k == 1:
        return np.log(rates[0]) - rates[0] * z
    if np.ptp(rates) <= 1e-12 * rates.mean():
        r = rates.mean()
        return (
            k * np.log(r) + (k - 1.0) * np.log(z) - r * z - special.gammaln(k)
        )
    if k == 2:
        rbar = 0.5 * (rates[0] + rates[1])
        half_gap = 0.5 * np.abs(rates[0] - rates[1])
        return (
            np.log(rates[0] * rates[1])
            + np.log(z)
            - rbar * z
            + _log_sinch(half_gap * z)
        )
    gaps = np.abs(rates[:, None] - rates[None, :])
    np.fill_diagonal(gaps, np.inf)
    if gaps.min() > 1e-3 * rates.mean():
        # partial-fraction form; adequate for well-separated rates
        coef = np.ones(k)
        for i in range(k):
            others = np.delete(rates, i)
            coef[i] = np.prod(others / (others - rates[i]))
        vals = np.sum(
            coef[:, None] * rates[:, None] * np.exp(-np.outer(rates, z.ravel())),
            axis=0,
        )
        vals = np.maximum(vals, 1e-300)
        return np.log(vals).reshape(z.shape)
    # nearly-tied rates: phase-type matrix exponential, exact but slow
    theta = np.diag(-rates) + np.diag(rates[:-1], 1)
    flat = z.ravel()
    vals = np.empty(flat.size)
    for i, zz in enumerate(flat):
        vals[i] = linalg.expm(theta * zz)[0, -1] * rates[-1]
    vals = np.maximum(vals, 1e-300)
    return np.log(vals).reshape(z.shape)


def _convolve_log_pdf(spec: FamilySpec, mus: np.ndarray, z) -> np.ndarray:
    """Numeric convolution of the component densities over C(z).

    Uses the substitution x = z sin^2(theta), which absorbs the endpoint
    singularities of the half-line carriers (e.g. the x^(-1/2) factor of the
    free-variance family).  Recursion handles k > 2.
    """
    z = np.asarray(z, dtype=float)
    theta, w = np.polynomial.legendre.leggauss(160)
    theta = 0.25 * math.pi * (theta + 1.0)
    w = w * 0.25 * math.pi
    s2 = np.sin(theta) ** 2
    sc = np.sin(theta) * np.cos(theta) * w

    def rec(ms, zz):
        if len(ms) == 1:
            return np.exp(spec.log_pdf(ms[0], zz))
        x1 = zz[:, None] * s2
        x2 = zz[:, None] - x1
        jac = 2.0 * np.abs(zz)[:, None] * sc
        f1 = np.exp(spec.log_pdf(ms[0], x1.ravel()).reshape(x1.shape))
        rest = rec(ms[1:], x2.ravel()).reshape(x2.shape)
        return np.sum(f1 * rest * jac, axis=-1)

    vals = np.maximum(rec(list(mus), z.ravel()), 1e-300)
    return np.log(vals).reshape(z.shape)


_FAMILIES = {
    "bernoulli": Bernoulli,
    "gaussian_mean": GaussianFreeMean,
    "gaussian_variance": GaussianFreeVariance,
    "poisson": Poisson,
    "exponential": Exponential,
    "geometric": Geometric,
    "beta_fixed_alpha": BetaFixedAlpha,
}


def make_family(name: str, **fixed) -> FamilySpec:
    """Construct a family by id, e.g. make_family("gaussian_mean", sigma2=2.0)."""
    key = name.strip().lower()
    aliases = {
        "beta": "beta_fixed_alpha",
        "gaussian": "gaussian_mean",
        "gauss_mean": "gaussian_mean",
        "gauss_variance": "gaussian_variance",
    }
    key = aliases.get(key, key)
    if key not in _FAMILIES:
        raise ValueError(
            f"unknown family '{name}'; choose from {sorted(_FAMILIES)}"
        )
    return _FAMILIES[key](**fixed)


def family_from_config(cfg: dict) -> FamilySpec:
    """Inverse of FamilySpec.to_config; ignores any mean_params entry."""
    return make_family(cfg["family"], **cfg.get("fixed_params", {}))


@dataclass(frozen=True)
class Alternative:
    """A simple alternative: one mean parameter per group.

    Derived quantities: the pooled mean mu0_star (the KL-closest i.i.d. null
    point), the effect size delta (Euclidean distance from the equal-means
    ray) and the unit direction with zero-sum entries (None when delta = 0).
    """

    mu: tuple[float, ...]
    mu0_star: float
    delta: float
    direction: tuple[float, ...] | None

    @classmethod
    def from_means(cls, spec: FamilySpec, mus: Sequence[float]) -> "Alternative":
        mus = [spec.check_mean(m) for m in mus]
        if len(mus) < 2:
            raise ValueError("an alternative needs k >= 2 groups")
        arr = np.asarray(mus, dtype=float)
        center = float(arr.mean())
        resid = arr - center
        delta = float(np.linalg.norm(resid))
        direction = tuple(resid / delta) if delta > 0 else None
        return cls(tuple(arr), center, delta, direction)

    @classmethod
    def from_effect(
        cls,
        spec: FamilySpec,
        mu0: float,
        delta: float,
        direction: Sequence[float],
    ) -> "Alternative":
        d = np.asarray(direction, dtype=float)
        if abs(d.sum()) > 1e-9:
            raise ValueError("direction entries must sum to 0")
        norm = np.linalg.norm(d)
        if norm == 0:
            raise ValueError("direction must be nonzero")
        return cls.from_means(spec, mu0 + delta * d / norm)

    @property
    def k(self) -> int:
        return len(self.mu)


def default_direction(k: int) -> np.ndarray:
    """The canonical positive-effect direction, (1, -1)/sqrt(2) for k = 2."""
    d = np.zeros(k)
    d[0] = 1.0
    d[-1] = -1.0
    return d / np.linalg.norm(d)


def reduce_sufficient(source: str, raw, v: float | None = None) -> np.ndarray:
    """Map raw observations to the sufficient statistic of a supported family.

    source = "pareto" (fixed scale v > 0): t(u) = log(u / v), giving
    exponential data; source = "lognormal": t(u) = log(u), giving Gaussian
    data.
    """
    raw = np.asarray(raw, dtype=float)
    source = source.strip().lower()
    if source == "pareto":
        if v is None or v <= 0:
            raise ValueError("pareto reduction needs a positive fixed scale v")
        if np.any(raw < v):
            raise MeanDomainError(f"pareto observations must be >= v={v}")
        return np.log(raw / v)
    if source == "lognormal":
        if np.any(raw <= 0):
            raise MeanDomainError("lognormal observations must be positive")
        return np.log(raw)
    raise ValueError(f"unknown source '{source}'; use 'pareto' or 'lognormal'")
