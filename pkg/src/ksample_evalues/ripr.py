"""Approximating the reverse information projection onto the i.i.d. null hull.

The growth-rate-optimal e-value against the in-family i.i.d. null divides the
alternative's density by the reverse information projection (RIPr): the
KL-closest element of the convex hull of i.i.d. product distributions.  The
RIPr rarely has a closed form, so this module approximates it by finite
mixtures and *certifies* the result: a mixture is shipped together with the
worst-case null expectation of the induced likelihood ratio over a documented
grid of null means.  A certified value c makes the ratio a (c-1)-approximate
e-value.

Two searches are provided:

* ``li_approximate`` -- greedy mixture growth: each step adds one component,
  choosing the convex weight and the new null mean that minimize the KL
  divergence from the alternative to the mixture.
* ``brute_force_two_component`` -- exhaustive grid search over two-component
  mixtures (weight, two null means), minimizing the worst-case null
  expectation directly.

Every null expectation here reduces to a one-dimensional integral: a mixture
of i.i.d. product nulls depends on the block only through the sum z of the
sufficient statistics, so for any k

    E_null(mu0)[ p_alt(X^k) / p_mix(X^k) ]
        = integral of  exp(lam0 z - k A(lam0)) * m_alt(z) / d_mix(z)  dz,

with m_alt the sum density under the alternative and d_mix(z) the mixture of
tilts sum_c w_c exp(lam_c z - k A(lam_c)).  The same collapse turns
D(alt || mixture) into a one-dimensional integral.  Grid searches evaluate
these as matrix products over a fixed z grid.

Grid endpoints are artifact decisions: worst-case certificates are taken over
a *documented* range of null means around the alternative (see
``default_search_range``), not over the entire mean space.  For several
families a two-component mixture's null expectation provably exceeds 1 near
the boundary of the mean space, so an unrestricted supremum would be
meaningless for any finite mixture that is not the exact RIPr.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _quad
from .expfam import Alternative, ComputationError, FamilySpec, as_generator


@dataclass(frozen=True)
class Certificate:
    """Worst-case null expectation of the mixture ratio over a mean grid."""

    sup_expectation: float
    mu0_grid_size: int
    mu0_lo: float
    mu0_hi: float
    method: str
    argmax_mu0: float

    def to_dict(self) -> dict:
        return {
            "sup_expectation": self.sup_expectation,
            "mu0_grid_size": self.mu0_grid_size,
            "mu0_lo": self.mu0_lo,
            "mu0_hi": self.mu0_hi,
            "method": self.method,
            "argmax_mu0": self.argmax_mu0,
        }


class CertificationError(ValueError):
    """A mixture without a valid certificate was used where one is required."""


@dataclass(frozen=True)
class MixtureNull:
    """Finite convex combination of i.i.d. product nulls.

    ``components`` is a tuple of (weight, mu0) pairs.  A correct search can
    never certify a value materially below 1: equality holds exactly at the
    RIPr, so ``sup_expectation >= 1 - 1e-6`` is enforced.
    """

    components: tuple[tuple[float, float], ...]
    certificate: Optional[Certificate] = None

    def __post_init__(self):
        if not self.components:
            raise ValueError("mixture needs at least one component")
        ws = np.array([w for w, _ in self.components], dtype=float)
        if np.any(ws < -1e-15) or np.any(ws > 1 + 1e-12):
            raise ValueError("mixture weights must lie in [0, 1]")
        if abs(ws.sum() - 1.0) > 1e-12:
            raise ValueError(f"mixture weights sum to {ws.sum()!r}, not 1")
        if self.certificate is not None:
            if self.certificate.sup_expectation < 1.0 - 1e-6:
                raise ValueError(
                    "certificate below 1 is impossible for a correct search "
                    f"(got {self.certificate.sup_expectation})"
                )

    def require_certificate(self) -> Certificate:
        if self.certificate is None:
            raise CertificationError(
                "mixture is not certified; obtain it from li_approximate or "
                "brute_force_two_component (or attach a worst_case_expectation "
                "certificate)"
            )
        return self.certificate

    def certificate_dict(self) -> dict:
        return self.require_certificate().to_dict()

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.components], dtype=float)

    @property
    def means(self) -> np.ndarray:
        return np.array([m for _, m in self.components], dtype=float)

    def log_density_of_sum(self, spec: FamilySpec, k: int, z) -> np.ndarray:
        """Log mixture product density w.r.t. the base measure.

        A mixture of i.i.d. products depends on the block only through the
        coordinate sum z, as sum_c w_c exp(lam_c z - k A(lam_c)).
        """
        z = np.asarray(z, dtype=float)
        lams = np.array([spec.natural_from_mean(m) for _, m in self.components])
        las = np.array([spec.log_partition(l) for l in lams])
        logs = (
            np.log(np.maximum(self.weights, 1e-300))
            + lams * z[..., None]
            - k * las
        )
        mx = logs.max(axis=-1)
        return mx + np.log(np.sum(np.exp(logs - mx[..., None]), axis=-1))

    def to_json_dict(self) -> dict:
        out = {
            "components": [{"w": w, "mu0": m} for w, m in self.components],
        }
        if self.certificate is not None:
            out["certificate"] = self.certificate.to_dict()
        return out

    @classmethod
    def from_json_dict(cls, d: dict) -> "MixtureNull":
        comps = tuple((c["w"], c["mu0"]) for c in d["components"])
        cert = None
        if "certificate" in d:
            cert = Certificate(**d["certificate"])
        return cls(comps, cert)


def point_mixture(
    spec: FamilySpec,
    alt: Alternative,
    mu0: float,
    count: int = 1000,
    lo: float | None = None,
    hi: float | None = None,
) -> MixtureNull:
    """Single-component mixture at mu0, certified on the default grid."""
    mu0 = spec.check_mean(mu0)
    gs = _grid_spec(spec, alt, count=count, lo=lo, hi=hi)
    sup, argmax = _certify(
        spec, alt, [1.0], [mu0], "point", gs["count"], gs["lo"], gs["hi"]
    )
    return MixtureNull(
        ((1.0, mu0),), sup_cert(sup, argmax, "point", **gs)
    )


def default_search_range(spec: FamilySpec, alt: Alternative) -> tuple[float, float]:
    """Default endpoints for component and certification grids.

    The hull of the alternative means is expanded multiplicatively by a
    factor 2 towards each end (mirrored for the negative-mean beta family),
    additively by two standard deviations plus the span for the Gaussian
    location family, and halfway towards each boundary for Bernoulli.
    Endpoints are artifact choices and every search accepts explicit
    overrides.
    """
    lo, hi = min(alt.mu), max(alt.mu)
    fid = spec.family_id
    if fid == "bernoulli":
        return 0.5 * lo, 1.0 - 0.5 * (1.0 - hi)
    if fid == "gaussian_mean":
        pad = 2.0 * math.sqrt(spec.sigma2) + (hi - lo)
        return lo - pad, hi + pad
    if fid == "beta_fixed_alpha":
        return 2.0 * lo, 0.5 * hi
    return 0.5 * lo, 2.0 * hi


def _grid_spec(spec, alt, count=1000, lo=None, hi=None):
    if lo is None or hi is None:
        dlo, dhi = default_search_range(spec, alt)
        lo = dlo if lo is None else lo
        hi = dhi if hi is None else hi
    return {"count": int(count), "lo": float(lo), "hi": float(hi)}


def sup_cert(sup, argmax, method, count, lo, hi) -> Certificate:
    return Certificate(float(sup), count, lo, hi, method, float(argmax))


class _SumGrid:
    """Fixed z grid carrying the alternative's weighted sum density.

    ``wm`` is quadrature-weight times the alternative's sum density, masked to
    nodes that carry mass; every null expectation and KL against a mixture is
    a weighted sum over these nodes.
    """

    def __init__(self, spec: FamilySpec, alt: Alternative, mus_envelope, n_z: int):
        self.spec = spec
        self.alt = alt
        self.k = alt.k
        z, w = _quad.sum_nodes(spec, mus_envelope, alt.k, n=n_z)
        log_m = spec.sum_log_pdf(list(alt.mu), z)
        wm = w * np.exp(log_m)
        keep = wm > wm.max() * 1e-280
        self.z = z[keep]
        self.wm = wm[keep]
        lams = np.array([spec.natural_from_mean(m) for m in alt.mu])
        las = np.array([float(spec.log_partition(l)) for l in lams])
        # E_alt[log p_alt(X^k)] w.r.t. the base measure
        self.alt_self_term = float(np.sum(lams * np.array(alt.mu) - las))

    def tilt_rows(self, mu0s) -> np.ndarray:
        """Rows of exp(lam0 * z - k * A(lam0)) for each null mean."""
        mu0s = np.atleast_1d(np.asarray(mu0s, dtype=float))
        lam = np.array([self.spec.natural_from_mean(m) for m in mu0s])
        la = np.array([float(self.spec.log_partition(l)) for l in lam])
        return np.exp(lam[:, None] * self.z[None, :] - self.k * la[:, None])

    def expectations(self, ws, mus, mu0s) -> np.ndarray:
        """E under each i.i.d. null of the ratio against mixture (ws, mus)."""
        d = self.tilt_rows(mus).T @ np.asarray(ws, dtype=float)
        return self.tilt_rows(mu0s) @ (self.wm / d)

    def kl_to(self, ws, mus) -> float:
        """D(alt || mixture), collapsing to the z grid."""
        d = self.tilt_rows(mus).T @ np.asarray(ws, dtype=float)
        return self.alt_self_term - float(self.wm @ np.log(np.maximum(d, 1e-300)))

    def check_edges(self, ws, mus, mu0) -> None:
        t = self.tilt_rows([mu0])[0]
        d = self.tilt_rows(mus).T @ np.asarray(ws, dtype=float)
        integrand = t * self.wm / d
        total = integrand.sum()
        if total <= 0 or not np.isfinite(total):
            raise ComputationError(
                f"null expectation quadrature degenerate at mu0={mu0}"
            )
        if not self.spec.support.discrete:
            edge = integrand[:4].sum() + integrand[-4:].sum()
            if edge > 1e-8 * total:
                raise ComputationError(
                    f"null expectation quadrature not converged at mu0={mu0}: "
                    f"edge mass fraction {edge / total:.2e}"
                )


def _build_grid(spec, alt, lo, hi, n_z=3000) -> _SumGrid:
    envelope = list(alt.mu) + [lo, hi]
    return _SumGrid(spec, alt, envelope, n_z)


def _certify(spec, alt, ws, mus, method, count=1000, lo=None, hi=None, grid=None):
    gs = _grid_spec(spec, alt, count=count, lo=lo, hi=hi)
    if grid is None:
        grid = _build_grid(spec, alt, gs["lo"], gs["hi"])
    mu0s = np.linspace(gs["lo"], gs["hi"], gs["count"])
    vals = grid.expectations(ws, mus, mu0s)
    i = int(np.argmax(vals))
    grid.check_edges(ws, mus, mu0s[i])
    return float(vals[i]), float(mu0s[i])


def worst_case_expectation(
    spec: FamilySpec,
    alt: Alternative,
    mixture: MixtureNull,
    count: int = 1000,
    lo: float | None = None,
    hi: float | None = None,
    return_argmax: bool = False,
):
    """Max over a null-mean grid of E_null[alt density / mixture density].

    The grid defaults to 1000 equally spaced points over
    ``default_search_range``.  Quadrature non-convergence at the maximizing
    point raises ComputationError naming that point.
    """
    sup, argmax = _certify(
        spec, alt, mixture.weights, mixture.means, "profile", count, lo, hi
    )
    return (sup, argmax) if return_argmax else sup


def expectation_profile(
    spec: FamilySpec,
    alt: Alternative,
    mixture: MixtureNull,
    count: int = 1000,
    lo: float | None = None,
    hi: float | None = None,
):
    """The full curve mu0 -> E_null(mu0)[ratio] on the certification grid."""
    gs = _grid_spec(spec, alt, count=count, lo=lo, hi=hi)
    grid = _build_grid(spec, alt, gs["lo"], gs["hi"])
    mu0s = np.linspace(gs["lo"], gs["hi"], gs["count"])
    return mu0s, grid.expectations(mixture.weights, mixture.means, mu0s)


@dataclass(frozen=True)
class KLEstimate:
    value: float
    stderr: float
    method: str

    def __float__(self):
        return self.value


def kl_to_mixture(
    spec: FamilySpec,
    alt: Alternative,
    mixture: MixtureNull,
    method: str = "quadrature",
    mc_n: int = 10**6,
    seed: int = 0,
) -> KLEstimate:
    """D(alternative || mixture), by z-grid quadrature or Monte Carlo."""
    if method == "quadrature":
        lo, hi = default_search_range(spec, alt)
        grid = _build_grid(
            spec, alt, min(lo, mixture.means.min()), max(hi, mixture.means.max())
        )
        return KLEstimate(grid.kl_to(mixture.weights, mixture.means), 0.0, method)
    if method == "mc":
        rng = as_generator(seed)
        lams = np.array([spec.natural_from_mean(m) for m in alt.mu])
        las = np.array([float(spec.log_partition(l)) for l in lams])
        x = np.stack([spec.sample(m, mc_n, rng) for m in alt.mu], axis=-1)
        logs = np.sum(lams * x - las, axis=-1) - mixture.log_density_of_sum(
            spec, alt.k, x.sum(axis=-1)
        )
        return KLEstimate(
            float(logs.mean()), float(logs.std(ddof=1) / math.sqrt(mc_n)), method
        )
    raise ValueError("method must be 'quadrature' or 'mc'")


def expectation_mc(
    spec: FamilySpec,
    alt: Alternative,
    mixture: MixtureNull,
    mu0: float,
    n: int = 10**6,
    seed: int = 0,
) -> tuple[float, float]:
    """Monte Carlo E under the i.i.d. null at mu0 of the mixture ratio.

    Independent of the quadrature path; used to validate certificates.
    """
    rng = as_generator(seed)
    lams = np.array([spec.natural_from_mean(m) for m in alt.mu])
    las = np.array([float(spec.log_partition(l)) for l in lams])
    x = np.stack([spec.sample(mu0, n, rng) for _ in range(alt.k)], axis=-1)
    logs = np.sum(lams * x - las, axis=-1) - mixture.log_density_of_sum(
        spec, alt.k, x.sum(axis=-1)
    )
    s = np.exp(logs)
    return float(s.mean()), float(s.std(ddof=1) / math.sqrt(n))


def li_approximate(
    spec: FamilySpec,
    alt: Alternative,
    max_iters: int = 15,
    n_alpha: int = 100,
    mu_count: int = 100,
    mu_lo: float | None = None,
    mu_hi: float | None = None,
    cert_count: int = 1000,
    n_z: int = 3000,
    stop_sup: float = 1.0 + 1e-6,
) -> tuple[MixtureNull, list[dict]]:
    """Greedy mixture growth toward the reverse information projection.

    Step 1 picks the best single null mean (the KL minimizer); step m >= 2
    minimizes D(alt || a * current + (1-a) * candidate) over a convex-weight
    grid times a candidate-mean grid.  Keeping a = 1 is always available, so
    the KL trace is nonincreasing.  The trace records, per iteration, the KL
    divergence and the worst-case null expectation of the current ratio.
    Iteration stops early once the certificate is within ``stop_sup`` (for
    families whose projection is a single point this happens immediately).
    """
    gs = _grid_spec(spec, alt, count=cert_count, lo=mu_lo, hi=mu_hi)
    lo, hi = gs["lo"], gs["hi"]

    if alt.delta == 0.0:
        mix = MixtureNull(((1.0, alt.mu0_star),))
        grid = _build_grid(spec, alt, min(lo, alt.mu0_star), max(hi, alt.mu0_star), n_z)
        sup, argmax = _certify(
            spec, alt, mix.weights, mix.means, "li", cert_count, lo, hi, grid=grid
        )
        cert = sup_cert(sup, argmax, "li", cert_count, lo, hi)
        return MixtureNull(mix.components, cert), [
            {"iter": 1, "kl": 0.0, "sup_expectation": sup}
        ]

    grid = _build_grid(spec, alt, lo, hi, n_z)
    cand_mus = np.linspace(lo, hi, mu_count)
    alphas = np.linspace(0.0, 1.0, n_alpha)
    cert_mu0s = np.linspace(lo, hi, cert_count)

    u = grid.tilt_rows(cand_mus)  # (mu_count, n_z)
    cert_t = grid.tilt_rows(cert_mu0s) * grid.wm[None, :]

    def kl_of(d):
        return grid.alt_self_term - float(
            grid.wm @ np.log(np.maximum(d, 1e-300))
        )

    def sup_of(d):
        vals = cert_t @ (1.0 / d)
        i = int(np.argmax(vals))
        return float(vals[i]), float(cert_mu0s[i])

    # first component: the single-point projection has the closed-form
    # minimizer at the pooled mean, no grid search needed
    weights = {float(alt.mu0_star): 1.0}
    d_cur = grid.tilt_rows([alt.mu0_star])[0].copy()
    trace = []
    kl_cur = kl_of(d_cur)
    sup, argmax = sup_of(d_cur)
    trace.append({"iter": 1, "kl": kl_cur, "sup_expectation": sup})

    for it in range(2, max_iters + 1):
        if sup <= stop_sup:
            break
        best = (np.inf, None, None)
        for a in alphas:
            d_try = a * d_cur[None, :] + (1.0 - a) * u
            obj = grid.alt_self_term - np.log(np.maximum(d_try, 1e-300)) @ grid.wm
            j = int(np.argmin(obj))
            if obj[j] < best[0]:
                best = (float(obj[j]), a, j)
        kl_new, a, j = best
        if kl_new > kl_cur + 1e-12:
            raise ComputationError(
                f"greedy KL step failed to improve at iteration {it}"
            )
        weights = {mu: w * a for mu, w in weights.items()}
        mu_new = float(cand_mus[j])
        weights[mu_new] = weights.get(mu_new, 0.0) + (1.0 - a)
        d_cur = a * d_cur + (1.0 - a) * u[j]
        kl_cur = kl_new
        sup, argmax = sup_of(d_cur)
        trace.append({"iter": it, "kl": kl_cur, "sup_expectation": sup})

    comps = tuple(
        sorted(((w, mu) for mu, w in weights.items() if w > 0), key=lambda t: -t[0])
    )
    total = sum(w for w, _ in comps)
    comps = tuple((w / total, m) for w, m in comps)
    grid.check_edges([w for w, _ in comps], [m for _, m in comps], argmax)
    cert = sup_cert(sup, argmax, "li", cert_count, lo, hi)
    return MixtureNull(comps, cert), trace


def brute_force_two_component(
    spec: FamilySpec,
    alt: Alternative,
    n_alpha: int = 100,
    mu_count: int = 100,
    mu_lo: float | None = None,
    mu_hi: float | None = None,
    mu0_count: int = 1000,
    n_z: int = 3000,
    coarse_stride: int = 4,
    refine_top: int = 500,
) -> MixtureNull:
    """Exhaustive two-component search minimizing the worst-case expectation.

    Candidates are (weight a, mu01, mu02) on equally spaced grids; the
    objective is the maximum over the certification grid of the null
    expectation of the induced ratio.  A coarse certification pass (every
    ``coarse_stride``-th point) ranks all candidates; the best ``refine_top``
    are re-certified on the full grid and the winner is returned with its
    certificate.
    """
    gs = _grid_spec(spec, alt, count=mu0_count, lo=mu_lo, hi=mu_hi)
    lo, hi = gs["lo"], gs["hi"]
    grid = _build_grid(spec, alt, lo, hi, n_z)

    comp_mus = np.linspace(lo, hi, mu_count)
    alphas = np.linspace(0.0, 1.0, n_alpha)
    cert_mu0s = np.linspace(lo, hi, mu0_count)
    coarse = cert_mu0s[::coarse_stride]

    u = grid.tilt_rows(comp_mus)  # (mu_count, n_z)
    t_coarse = (grid.tilt_rows(coarse) * grid.wm[None, :]).T  # (n_z, n_coarse)
    t_full = (grid.tilt_rows(cert_mu0s) * grid.wm[None, :]).T

    pairs = [(i, j) for i in range(mu_count) for j in range(i + 1, mu_count)]
    top: list[tuple[float, float, int, int]] = []

    # single-component candidates (the two-component grid with i = j)
    sup_single = ((1.0 / u) @ t_coarse).max(axis=1)
    for i in range(mu_count):
        top.append((float(sup_single[i]), 1.0, i, i))

    chunk = max(1, int(2.5e7 // (n_alpha * grid.z.size)))
    a_col = alphas[None, :, None]
    for start in range(0, len(pairs), chunk):
        block = pairs[start : start + chunk]
        ui = u[[i for i, _ in block]][:, None, :]
        uj = u[[j for _, j in block]][:, None, :]
        d = a_col * ui + (1.0 - a_col) * uj  # (chunk, n_alpha, n_z)
        s = (1.0 / d).reshape(-1, grid.z.size) @ t_coarse
        sup = s.max(axis=1).reshape(len(block), n_alpha)
        for bi, (i, j) in enumerate(block):
            ai = int(np.argmin(sup[bi]))
            top.append((float(sup[bi, ai]), float(alphas[ai]), i, j))

    top.sort(key=lambda t: t[0])
    top = top[: refine_top]

    best_sup, best_cand, best_arg = np.inf, None, None
    for _, a, i, j in top:
        if i == j:
            ws, mus = np.array([1.0]), np.array([comp_mus[i]])
        else:
            ws = np.array([a, 1.0 - a])
            mus = np.array([comp_mus[i], comp_mus[j]])
        d = grid.tilt_rows(mus).T @ ws
        vals = (1.0 / d) @ t_full
        mi = int(np.argmax(vals))
        if vals[mi] < best_sup:
            best_sup = float(vals[mi])
            best_cand = (a, i, j)
            best_arg = float(cert_mu0s[mi])

    a, i, j = best_cand
    if i == j or a in (0.0, 1.0):
        keep = i if (i == j or a == 1.0) else j
        comps = ((1.0, float(comp_mus[keep])),)
    else:
        comps = ((a, float(comp_mus[i])), (1.0 - a, float(comp_mus[j])))
    grid.check_edges([w for w, _ in comps], [m for _, m in comps], best_arg)
    cert = sup_cert(best_sup, best_arg, "brute_force_2", mu0_count, lo, hi)
    return MixtureNull(comps, cert)
