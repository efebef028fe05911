"""Growth rates, small-effect gap coefficients, and the heatmap protocol.

The growth rate of a statistic S under the alternative is E[log S] per block,
in nats.  For the statistics of ``evariables`` every growth rate reduces to
one-dimensional integrals:

* pooled-mean ratio: sum_i KL(mu_i, mu0*), in closed form;
* equal-mixture ratio: a per-group integral of log(p_mu_j / mixture);
* conditional ratio: the pooled-mean rate minus the KL divergence between the
  sum densities of the alternative and of the pooled null;
* certified-mixture ratio: KL from the alternative to the mixture (see
  ``ripr.kl_to_mixture``).

For alternatives at Euclidean distance delta from the equal-means ray, any
two of these growth rates differ by c * delta^4 + o(delta^4).  The leading
coefficients are computed here from the family's Fisher information:

* ``coeff_iid_gap`` (pooled-mean vs equal-mixture): with I = 1/Var and
  s(x) = I^2 (x-mu0)^2 + I'(mu0)(x-mu0) - I(mu0) (the second mu-derivative of
  the density divided by the density), the coefficient is
  (1/(8k)) E_mu0[ s(X)^2 ].
* ``coeff_cond_gap`` (pooled-mean vs conditional): the same construction on
  the sum statistic; the second derivative of the tilted sum density at the
  equal-means point reduces, by exchangeability, to conditional moments of
  one and two coordinates given the sum.

Both coefficients are direction-free because the direction enters only
through its unit norm.  The heatmap protocol evaluates pairwise growth gaps
on an n-by-n grid of two-group alternatives equally spaced in the family's
standard parameterization, plus the signed fourth-root transform that
linearizes the small-effect behaviour.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _quad
from .expfam import Alternative, ComputationError, FamilySpec, spawn_generator
from . import evariables as ev


class GapKind(str, enum.Enum):
    IID_GAP = "iid_gap"  # pooled-mean vs equal-mixture
    COND_GAP = "cond_gap"  # pooled-mean vs conditional
    COND_MINUS_IID = "cond_minus_iid"  # conditional vs equal-mixture


@dataclass(frozen=True)
class FourthOrderCoefficient:
    value: float
    kind: GapKind

    def __post_init__(self):
        if self.kind in (GapKind.IID_GAP, GapKind.COND_GAP) and self.value < -1e-9:
            raise ValueError(f"{self.kind} coefficient must be nonnegative")


@dataclass(frozen=True)
class GrowthEntry:
    kind: ev.EValueKind
    rate: float
    stderr: float
    method: str


@dataclass(frozen=True)
class GrowthReport:
    alternative: Alternative
    entries: dict
    method: str

    def gap(self, kind_a, kind_b) -> float:
        """Difference of the reported rates (exact as floats)."""
        a = ev.EValueKind(kind_a)
        b = ev.EValueKind(kind_b)
        return self.entries[a].rate - self.entries[b].rate


def growth_pseudo(spec: FamilySpec, alt: Alternative) -> float:
    """E[log pooled-mean ratio] = sum_i KL(mu_i, mu0*), closed form."""
    return sum(spec.kl(m, alt.mu0_star) for m in alt.mu)


def gap_pseudo_iid(spec: FamilySpec, alt: Alternative, n: int = 4096) -> float:
    """E[log S_pseudo - log S_gro_iid], as a direct one-dimensional integral.

    Equals sum_j E_{mu_j}[log mixture(X) - log p_{mu0*}(X)], which avoids the
    cancellation of subtracting two nearly equal rates at small effects.
    """
    if alt.delta == 0.0:
        return 0.0
    x, w = _quad.support_nodes(spec, list(alt.mu) + [alt.mu0_star], n=n)
    lams = np.array([spec.natural_from_mean(m) for m in alt.mu])
    las = np.array([float(spec.log_partition(l)) for l in lams])
    comp = lams[None, :] * x[:, None] - las[None, :]  # log p_{mu_i}(x)
    cmax = comp.max(axis=1, keepdims=True)
    logmix = cmax[:, 0] + np.log(np.mean(np.exp(comp - cmax), axis=1))
    lam0 = spec.natural_from_mean(alt.mu0_star)
    log0 = lam0 * x - float(spec.log_partition(lam0))
    diff = logmix - log0
    total = 0.0
    logh = spec.log_carrier(x)
    for j, m in enumerate(alt.mu):
        pj = np.exp(comp[:, j] + logh)
        total += float(np.sum(w * pj * diff))
    return total


def gap_pseudo_cond(spec: FamilySpec, alt: Alternative, n: int = 4096) -> float:
    """E[log S_pseudo - log S_cond] = KL between the sum densities of the
    alternative and of the pooled i.i.d. null."""
    if alt.delta == 0.0:
        return 0.0
    z, w = _quad.sum_nodes(spec, list(alt.mu) + [alt.mu0_star], alt.k, n=n)
    log_a = spec.sum_log_pdf(list(alt.mu), z)
    log_0 = spec.sum_log_pdf([alt.mu0_star] * alt.k, z)
    pa = np.exp(log_a)
    return float(np.sum(w * pa * (log_a - log_0)))


def growth_gro_iid(spec: FamilySpec, alt: Alternative, n: int = 4096) -> float:
    return growth_pseudo(spec, alt) - gap_pseudo_iid(spec, alt, n=n)


def growth_cond(spec: FamilySpec, alt: Alternative, n: int = 4096) -> float:
    return growth_pseudo(spec, alt) - gap_pseudo_cond(spec, alt, n=n)


def growth_rate(
    spec: FamilySpec,
    alt: Alternative,
    kind,
    method: str = "quadrature",
    mixture=None,
    mc_n: int = 10**6,
    seed: int = 0,
) -> GrowthEntry:
    """E under the alternative of log S, by quadrature or seeded Monte Carlo."""
    kind = ev.EValueKind(kind)
    if alt.delta == 0.0:
        return GrowthEntry(kind, 0.0, 0.0, method)
    if kind is ev.EValueKind.GRO_M and mixture is None:
        raise ValueError("growth of the certified-mixture ratio needs a mixture")
    if method == "quadrature":
        if kind is ev.EValueKind.PSEUDO:
            rate = growth_pseudo(spec, alt)
        elif kind is ev.EValueKind.GRO_IID:
            rate = growth_gro_iid(spec, alt)
        elif kind is ev.EValueKind.COND:
            rate = growth_cond(spec, alt)
        else:
            from . import ripr

            rate = ripr.kl_to_mixture(spec, alt, mixture, method="quadrature").value
        return GrowthEntry(kind, float(rate), 0.0, method)
    if method == "mc":
        rng = spawn_generator(seed, 0)
        x = np.stack([spec.sample(m, mc_n, rng) for m in alt.mu], axis=-1)
        if kind is ev.EValueKind.PSEUDO:
            logs = ev.log_s_pseudo(spec, alt, x)
        elif kind is ev.EValueKind.GRO_IID:
            logs = ev.log_s_gro_iid(spec, alt, x)
        elif kind is ev.EValueKind.COND:
            logs = ev.log_s_cond(spec, alt, x)
        else:
            logs = ev.log_s_gro_m(spec, alt, x, mixture)
        return GrowthEntry(
            kind,
            float(logs.mean()),
            float(logs.std(ddof=1) / math.sqrt(mc_n)),
            method,
        )
    raise ValueError("method must be 'quadrature' or 'mc'")


def growth_report(
    spec: FamilySpec,
    alt: Alternative,
    kinds: Sequence,
    method: str = "quadrature",
    mixture=None,
    mc_n: int = 10**6,
    seed: int = 0,
) -> GrowthReport:
    entries = {}
    for kind in kinds:
        k = ev.EValueKind(kind)
        entries[k] = growth_rate(
            spec, alt, k, method=method, mixture=mixture, mc_n=mc_n, seed=seed
        )
    return GrowthReport(alt, entries, method)


def _score_terms(spec: FamilySpec, mu0: float):
    i0 = spec.fisher_info(mu0)
    i1 = spec.fisher_info_d1(mu0)
    return i0, i1


def coeff_iid_gap(
    spec: FamilySpec,
    mu0: float,
    direction: Sequence[float] | None = None,
    k: int = 2,
    n: int = 4096,
) -> FourthOrderCoefficient:
    """Leading delta^4 coefficient of the pooled-mean vs equal-mixture gap.

    (1/(8k)) E_mu0[(I^2 (X-mu0)^2 + I'(mu0)(X-mu0) - I(mu0))^2]; the square
    makes nonnegativity structural.  ``direction`` only enters through its
    unit norm and is accepted for signature symmetry.
    """
    mu0 = spec.check_mean(mu0)
    _check_direction(direction, k)
    i0, i1 = _score_terms(spec, mu0)
    x, w = _quad.support_nodes(spec, [mu0], n=n)
    m = x - mu0
    s = i0 * i0 * m * m + i1 * m - i0
    p = np.exp(spec.log_pdf(mu0, x))
    val = float(np.sum(w * p * s * s)) / (8.0 * k)
    if not np.isfinite(val):
        raise ComputationError(
            f"fourth-order integrand diverged for '{spec.family_id}' at mu0={mu0}"
        )
    return FourthOrderCoefficient(val, GapKind.IID_GAP)


def coeff_iid_gap_moments(spec: FamilySpec, mu0: float, k: int = 2) -> float:
    """Closed-form variant of coeff_iid_gap via central moments (cross-check)."""
    mu0 = spec.check_mean(mu0)
    i0, i1 = _score_terms(spec, mu0)
    m3 = spec.central_moment3(mu0)
    m4 = spec.central_moment4(mu0)
    raw = i0**4 * m4 + 2.0 * i0 * i0 * i1 * m3 + i1 * i1 / i0 - i0 * i0
    return max(raw, 0.0) / (8.0 * k)


def coeff_cond_gap(
    spec: FamilySpec,
    mu0: float,
    direction: Sequence[float] | None = None,
    k: int = 2,
    n_z: int = 2048,
    n_inner: int = 512,
) -> FourthOrderCoefficient:
    """Leading delta^4 coefficient of the pooled-mean vs conditional gap.

    (1/8) integral over z of g(z) * c(z)^2, where g is the sum density of k
    i.i.d. copies at mu0 and

        c(z) = I^2 (E[X1^2|z] - E[X1 X2|z]) + I'(mu0)(z/k - mu0) - I(mu0),

    the curvature of the direction-tilted sum density at zero effect divided
    by g.  Conditional moments follow from one-dimensional convolutions of
    the single and (k-1)-fold densities.
    """
    mu0 = spec.check_mean(mu0)
    _check_direction(direction, k)
    if k < 2:
        raise ValueError("k must be at least 2")
    i0, i1 = _score_terms(spec, mu0)
    z, wz = _quad.sum_nodes(spec, [mu0], k, n=n_z)
    log_gz = spec.sum_log_pdf([mu0] * k, z)
    ex2 = _cond_second_moment(spec, mu0, k, z, log_gz, n_inner)
    ex1x2 = (z * z - k * ex2) / (k * (k - 1.0))
    c = i0 * i0 * (ex2 - ex1x2) + i1 * (z / k - mu0) - i0
    val = float(np.sum(wz * np.exp(log_gz) * c * c)) / 8.0
    if not np.isfinite(val):
        raise ComputationError(
            f"conditional-gap integrand diverged for '{spec.family_id}' at mu0={mu0}"
        )
    return FourthOrderCoefficient(val, GapKind.COND_GAP)


def _cond_second_moment(spec, mu0, k, z, log_gz, n_inner):
    """E[X_1^2 | Z=z] for k i.i.d. coordinates at mu0, per z-grid value."""
    if spec.support.discrete:
        xs = np.arange(0.0, float(z.max()) + 1.0)
        hi_sup = spec.support.hi
        if np.isfinite(hi_sup):
            xs = xs[xs <= hi_sup]
        px = np.exp(spec.log_pdf(mu0, xs))
        rng_rest = np.arange(0.0, float(z.max()) + 1.0)
        if np.isfinite(hi_sup):
            rng_rest = rng_rest[rng_rest <= (k - 1) * hi_sup]
        if k == 2:
            rest_tab = np.exp(spec.log_pdf(mu0, rng_rest))
        else:
            rest_tab = np.exp(spec.sum_log_pdf([mu0] * (k - 1), rng_rest))
        num = np.empty_like(z)
        for i, zz in enumerate(z):
            xi = xs[xs <= zz + 1e-9]
            t = np.round(zz - xi).astype(int)
            ok = t < rng_rest.size
            num[i] = np.sum(
                xi[ok] * xi[ok] * px[: xi.size][ok] * rest_tab[t[ok]]
            )
        return num / np.exp(log_gz)

    fid = spec.support
    theta, w = np.polynomial.legendre.leggauss(n_inner)
    if np.isfinite(fid.lo) or np.isfinite(fid.hi):
        # half-line support: x = z sin^2(theta) soaks up endpoint singularities
        th = 0.25 * math.pi * (theta + 1.0)
        wt = w * 0.25 * math.pi
        s2 = np.sin(th) ** 2
        x = z[:, None] * s2[None, :]
        jac = 2.0 * np.abs(z)[:, None] * (np.sin(th) * np.cos(th) * wt)[None, :]
    else:
        # real line: the conditional law concentrates near z/k
        sd = math.sqrt(spec.variance(mu0))
        half = 10.0 * sd
        x = z[:, None] / k + half * theta[None, :]
        jac = np.full_like(x, half) * w[None, :]
    px = np.exp(spec.log_pdf(mu0, x.ravel()).reshape(x.shape))
    t = z[:, None] - x
    if k == 2:
        pr = np.exp(spec.log_pdf(mu0, t.ravel()).reshape(t.shape))
    else:
        pr = np.exp(spec.sum_log_pdf([mu0] * (k - 1), t.ravel()).reshape(t.shape))
    num = np.sum(x * x * px * pr * jac, axis=1)
    return num / np.exp(log_gz)


def coeff_gap(
    spec: FamilySpec,
    mu0: float,
    kind,
    direction: Sequence[float] | None = None,
    k: int = 2,
) -> FourthOrderCoefficient:
    kind = GapKind(kind)
    if kind is GapKind.IID_GAP:
        return coeff_iid_gap(spec, mu0, direction, k)
    if kind is GapKind.COND_GAP:
        return coeff_cond_gap(spec, mu0, direction, k)
    iid = coeff_iid_gap(spec, mu0, direction, k).value
    cond = coeff_cond_gap(spec, mu0, direction, k).value
    return FourthOrderCoefficient(iid - cond, GapKind.COND_MINUS_IID)


def _check_direction(direction, k):
    if direction is None:
        return
    d = np.asarray(direction, dtype=float)
    if d.size != k:
        raise ValueError(f"direction has {d.size} entries, expected k={k}")
    if abs(d.sum()) > 1e-9 or abs(np.linalg.norm(d) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector with zero-sum entries")


def signed_fourth_root(x) -> np.ndarray:
    """sign(x) * |x|^(1/4); linearizes leading fourth-order gaps for plots."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.abs(x) ** 0.25


@dataclass
class HeatmapResult:
    """Pairwise growth-gap matrix over a two-group alternative grid."""

    spec: FamilySpec
    kind_a: ev.EValueKind
    kind_b: ev.EValueKind
    std_values: np.ndarray  # grid axis in the standard parameterization
    mu_values: np.ndarray  # the same axis in mean parameterization
    gap: np.ndarray  # gap[i, j] = E[log S_a - log S_b] at (mu_i, mu_j)
    stderr: np.ndarray
    method: str
    failures: list = field(default_factory=list)

    @property
    def gap_fourth_root(self) -> np.ndarray:
        return signed_fourth_root(self.gap)

    def rows(self):
        """CSV rows: mu1, mu2, gap, gap_fourth_root (row-major)."""
        n = self.mu_values.size
        out = []
        for i in range(n):
            for j in range(n):
                out.append(
                    (
                        self.mu_values[i],
                        self.mu_values[j],
                        self.gap[i, j],
                        signed_fourth_root(self.gap[i, j]),
                    )
                )
        return out

    def slice(self, offset: int = 0):
        """Anti-diagonal slice: rows i + j = n - 1 - offset.

        Returns (delta, signed fourth root of the gap) with the signed effect
        delta = (mu1 - mu2)/sqrt(2); slices are symmetric around delta = 0.
        """
        n = self.mu_values.size
        deltas, vals = [], []
        for i in range(n):
            j = n - 1 - offset - i
            if 0 <= j < n:
                deltas.append((self.mu_values[i] - self.mu_values[j]) / math.sqrt(2.0))
                vals.append(signed_fourth_root(self.gap[i, j]))
        return np.array(deltas), np.array(vals)


def heatmap(
    spec: FamilySpec,
    kinds: tuple,
    n: int = 50,
    std_lo: float | None = None,
    std_hi: float | None = None,
    method: str = "quadrature",
    mc_n: int = 10**5,
    seed: int = 0,
    mixture=None,
) -> HeatmapResult:
    """Growth-gap matrix over an n-by-n grid of two-group alternatives.

    Grid points are equally spaced in the family's standard parameterization
    (documented per family; the default ranges are artifact choices).  Cells
    where evaluation fails are recorded in ``failures`` and set to NaN rather
    than aborting the run.
    """
    kind_a = ev.EValueKind(kinds[0])
    kind_b = ev.EValueKind(kinds[1])
    lo, hi = spec.default_std_range()
    if std_lo is not None:
        lo = std_lo
    if std_hi is not None:
        hi = std_hi
    svals = np.linspace(lo, hi, n)
    mus = np.array([spec.mean_from_std(s) for s in svals])
    gap = np.full((n, n), np.nan)
    se = np.zeros((n, n))
    failures = []
    for i in range(n):
        for j in range(n):
            if i == j:
                gap[i, j] = 0.0
                continue
            if j < i and method == "quadrature":
                gap[i, j] = gap[j, i]  # exchanging the groups preserves the gap
                continue
            try:
                alt = Alternative.from_means(spec, [mus[i], mus[j]])
                ea = growth_rate(
                    spec,
                    alt,
                    kind_a,
                    method=method,
                    mixture=mixture,
                    mc_n=mc_n,
                    seed=spawn_seed(seed, i, j),
                )
                eb = growth_rate(
                    spec,
                    alt,
                    kind_b,
                    method=method,
                    mixture=mixture,
                    mc_n=mc_n,
                    seed=spawn_seed(seed, i, j) + 1,
                )
                gap[i, j] = ea.rate - eb.rate
                se[i, j] = math.hypot(ea.stderr, eb.stderr)
            except Exception as exc:  # per-cell failures are data, not fatal
                failures.append({"i": i, "j": j, "mu1": mus[i], "mu2": mus[j], "error": str(exc)})
    return HeatmapResult(spec, kind_a, kind_b, svals, mus, gap, se, method, failures)


def spawn_seed(seed: int, i: int, j: int) -> int:
    """Deterministic per-cell seed derived from a master seed."""
    return (seed * 1_000_003 + i * 1009 + j) % (2**31 - 1)
