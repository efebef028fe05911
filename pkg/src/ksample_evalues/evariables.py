"""The four (pseudo-)e-values on a single block of k-sample data.

A block is one observation per group, x = (x_1, ..., x_k).  All statistics
are likelihood ratios with the simple alternative prod_i p_{mu_i}(x_i) in the
numerator; they differ in the null density in the denominator:

* ``log_s_pseudo``   -- product null at the pooled mean mu0* = mean(mu).
  Growth-rate optimal whenever it happens to be an e-value; otherwise it is
  only a "pseudo" e-value (its null expectation can exceed 1).
* ``log_s_gro_iid``  -- per-coordinate equal mixture (1/k) sum_i p_{mu_i}.
  The growth-rate-optimal e-value against the nonparametric "all groups
  i.i.d." null, hence valid against the in-family null as well.
* ``log_s_cond``     -- likelihood ratio of x^{k-1} given the sufficient-
  statistic sum Z; the conditional law given Z does not depend on the null
  parameter, so this is an e-value by construction.
* ``log_s_gro_m``    -- denominator a certified finite mixture of i.i.d.
  product nulls (an approximation of the reverse information projection,
  produced by the ``ripr`` module); an eps-approximate e-value whose
  certificate rides along with the result.

Everything is computed and returned in log space; callers exponentiate at the
surface (``EValueResult.evalue``).  All functions are vectorized over leading
axes of ``block`` and are pure.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .expfam import Alternative, FamilySpec, MeanDomainError


class EValueKind(str, enum.Enum):
    PSEUDO = "pseudo"
    GRO_M = "gro_m"
    GRO_IID = "gro_iid"
    COND = "cond"


class Verdict(str, enum.Enum):
    NOT_E_VARIABLE = "not_e_variable"
    LOCALLY_E_VARIABLE = "locally_e_variable"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class PseudoVerdict:
    """Sign test of the variance criterion at the pooled mean.

    ``f_value`` is f(mu0*) = sum_i Var[X] at mu_i minus k Var[X] at mu0*.
    A positive sign rules the pooled-mean ratio out as an e-value; a negative
    sign certifies it locally (for nulls restricted to a neighbourhood of
    mu0*); values within tolerance of 0 are reported as indeterminate.
    """

    verdict: Verdict
    f_value: float


@dataclass(frozen=True)
class EValueResult:
    kind: EValueKind
    log_evalue: float
    certificate: Optional[dict] = None

    @property
    def evalue(self) -> float:
        return float(np.exp(self.log_evalue))

    def to_json(self) -> str:
        payload = {"kind": self.kind.value, "log_evalue": self.log_evalue}
        if self.certificate is not None:
            payload["certificate"] = self.certificate
        return json.dumps(payload, sort_keys=True)


def _as_block(spec: FamilySpec, alt: Alternative, block) -> np.ndarray:
    x = np.asarray(block, dtype=float)
    if x.shape[-1] != alt.k:
        raise ValueError(
            f"block has {x.shape[-1]} entries but the alternative has "
            f"k={alt.k} groups"
        )
    spec.check_support(x)
    return x


def log_s_pseudo(spec: FamilySpec, alt: Alternative, block) -> np.ndarray:
    """log of prod_i p_{mu_i}(x_i) / prod_i p_{mu0*}(x_i)."""
    x = _as_block(spec, alt, block)
    if alt.delta == 0.0:
        return np.zeros(x.shape[:-1])
    lam = np.array([spec.natural_from_mean(m) for m in alt.mu])
    a = np.array([spec.log_partition(l) for l in lam])
    lam0 = spec.natural_from_mean(alt.mu0_star)
    a0 = spec.log_partition(lam0)
    return np.sum((lam - lam0) * x - (a - a0), axis=-1)


def log_s_gro_iid(spec: FamilySpec, alt: Alternative, block) -> np.ndarray:
    """log of prod_i p_{mu_i}(x_i) / prod_j [(1/k) sum_i p_{mu_i}(x_j)]."""
    x = _as_block(spec, alt, block)
    if alt.delta == 0.0:
        return np.zeros(x.shape[:-1])
    lam = np.array([spec.natural_from_mean(m) for m in alt.mu])
    a = np.array([spec.log_partition(l) for l in lam])
    num = np.sum(lam * x - a, axis=-1)
    # log mixture density at every coordinate: logsumexp over components
    comp = lam * x[..., None] - a  # (..., k, k): [..., j, i] = log p_{mu_i}(x_j)
    cmax = comp.max(axis=-1, keepdims=True)
    logmix = np.squeeze(cmax, -1) + np.log(
        np.mean(np.exp(comp - cmax), axis=-1)
    )
    return num - np.sum(logmix, axis=-1)


def log_s_cond(
    spec: FamilySpec, alt: Alternative, block, mu0: float | None = None
) -> np.ndarray:
    """Conditional-on-sum likelihood ratio.

    Computed as [p_alt(x^k) / p_alt_Z(z)] * [p_null_Z(z) / p_null(x^k)] with
    z the coordinate sum.  The baseline null mean defaults to the pooled mean
    and the value is invariant to that choice.
    """
    x = _as_block(spec, alt, block)
    if alt.delta == 0.0:
        return np.zeros(x.shape[:-1])
    if mu0 is None:
        mu0 = alt.mu0_star
    mu0 = spec.check_mean(mu0)
    k = alt.k
    z = np.sum(x, axis=-1)
    lam = np.array([spec.natural_from_mean(m) for m in alt.mu])
    a = np.array([spec.log_partition(l) for l in lam])
    lam0 = spec.natural_from_mean(mu0)
    a0 = spec.log_partition(lam0)
    log_joint_ratio = np.sum((lam - lam0) * x - (a - a0), axis=-1)
    log_z_ratio = spec.sum_log_pdf(list(alt.mu), z) - spec.sum_log_pdf(
        [mu0] * k, z
    )
    return log_joint_ratio - log_z_ratio


def log_s_gro_m(spec: FamilySpec, alt: Alternative, block, mixture) -> np.ndarray:
    """Likelihood ratio against a certified mixture of i.i.d. product nulls.

    ``mixture`` must be a certified MixtureNull from the ``ripr`` module;
    uncertified mixtures are refused because the ratio is only an
    eps-approximate e-value, with eps read off the certificate.
    """
    from .ripr import MixtureNull

    if not isinstance(mixture, MixtureNull):
        raise TypeError("mixture must be a ripr.MixtureNull")
    mixture.require_certificate()
    x = _as_block(spec, alt, block)
    if alt.delta == 0.0:
        return np.zeros(x.shape[:-1])
    lam = np.array([spec.natural_from_mean(m) for m in alt.mu])
    a = np.array([spec.log_partition(l) for l in lam])
    num = np.sum(lam * x - a, axis=-1)
    z = np.sum(x, axis=-1)
    return num - mixture.log_density_of_sum(spec, alt.k, z)


def f_criterion(spec: FamilySpec, alt: Alternative, mu0: float) -> float:
    """sum_i Var[X] at (mu_i + mu0 - mu0*) minus k Var[X] at mu0.

    The shifted parameters must stay inside the mean space.
    """
    mu0 = spec.check_mean(mu0)
    shift = mu0 - alt.mu0_star
    shifted = []
    for m in alt.mu:
        try:
            shifted.append(spec.check_mean(m + shift))
        except MeanDomainError as exc:
            raise MeanDomainError(
                f"f criterion undefined at mu0={mu0}: shifted parameter "
                f"{m + shift} leaves the mean space"
            ) from exc
    total = sum(spec.variance(m) for m in shifted)
    return total - alt.k * spec.variance(mu0)


def pseudo_verdict(
    spec: FamilySpec, alt: Alternative, tol: float = 1e-9
) -> PseudoVerdict:
    """Classify the pooled-mean ratio via the sign of f at mu0*."""
    f0 = f_criterion(spec, alt, alt.mu0_star)
    if f0 > tol:
        return PseudoVerdict(Verdict.NOT_E_VARIABLE, f0)
    if f0 < -tol:
        return PseudoVerdict(Verdict.LOCALLY_E_VARIABLE, f0)
    return PseudoVerdict(Verdict.INDETERMINATE, f0)


def expectation_pseudo(spec: FamilySpec, alt: Alternative, mu0: float) -> float:
    """E under the i.i.d. null at mu0 of the pooled-mean ratio, in closed form.

    Each coordinate factor tilts to another family member, so the expectation
    is a pure log-partition expression.  Useful as an oracle for the sign
    criterion: its second derivative in mu0 has the sign of f(mu0).
    """
    mu0 = spec.check_mean(mu0)
    lam0 = spec.natural_from_mean(mu0)
    lam0s = spec.natural_from_mean(alt.mu0_star)
    a0 = spec.log_partition(lam0)
    a0s = spec.log_partition(lam0s)
    total = 0.0
    for m in alt.mu:
        lam_i = spec.natural_from_mean(m)
        total += (
            float(spec.log_partition(lam_i + lam0 - lam0s))
            - float(spec.log_partition(lam_i))
            + a0s
            - a0
        )
    return float(np.exp(total))


def _log_statistic(spec, alt, block, kind, mixture=None):
    kind = EValueKind(kind)
    if kind is EValueKind.PSEUDO:
        return log_s_pseudo(spec, alt, block)
    if kind is EValueKind.GRO_IID:
        return log_s_gro_iid(spec, alt, block)
    if kind is EValueKind.COND:
        return log_s_cond(spec, alt, block)
    return log_s_gro_m(spec, alt, block, mixture)


def null_expectation_profile(
    spec: FamilySpec,
    alt: Alternative,
    kind,
    mu0s,
    n: int = 256,
    mixture=None,
) -> np.ndarray:
    """E under each i.i.d. null of the statistic, for k = 2 by full tensor
    quadrature over the block.

    This is the e-variable property check: values must stay at or below 1
    (up to quadrature error) for the equal-mixture and conditional ratios.
    It deliberately integrates the statistic itself over the plane rather
    than exploiting any structural shortcut, so it exercises the same code
    path used on data.
    """
    from . import _quad

    if alt.k != 2:
        raise ValueError("tensor quadrature check is restricted to k = 2")
    mu0s = np.atleast_1d(np.asarray(mu0s, dtype=float))
    x, w = _quad.support_nodes(
        spec, list(alt.mu) + [mu0s.min(), mu0s.max()], n=n
    )
    b1, b2 = np.meshgrid(x, x, indexing="ij")
    blocks = np.stack([b1, b2], axis=-1)
    s = np.exp(_log_statistic(spec, alt, blocks, kind, mixture))
    logp = spec.log_pdf  # weighted one-dimensional null densities
    out = np.empty(mu0s.size)
    for i, m0 in enumerate(mu0s):
        u = w * np.exp(logp(m0, x))
        out[i] = float(u @ s @ u)
    return out


def null_expectation_mc(
    spec: FamilySpec,
    alt: Alternative,
    kind,
    mu0: float,
    n: int = 10**6,
    seed: int = 0,
    mixture=None,
) -> tuple[float, float]:
    """Monte Carlo E under the i.i.d. null at mu0 (any k), with stderr."""
    from .expfam import as_generator

    rng = as_generator(seed)
    x = np.stack([spec.sample(mu0, n, rng) for _ in range(alt.k)], axis=-1)
    s = np.exp(_log_statistic(spec, alt, x, kind, mixture))
    return float(s.mean()), float(s.std(ddof=1) / np.sqrt(n))


def log_evalue(
    spec: FamilySpec,
    alt: Alternative,
    block,
    kind: EValueKind | str,
    mixture=None,
) -> EValueResult:
    """Evaluate one statistic on one block and package the result."""
    kind = EValueKind(kind)
    if kind is EValueKind.PSEUDO:
        value = log_s_pseudo(spec, alt, block)
        cert = None
    elif kind is EValueKind.GRO_IID:
        value = log_s_gro_iid(spec, alt, block)
        cert = None
    elif kind is EValueKind.COND:
        value = log_s_cond(spec, alt, block)
        cert = None
    elif kind is EValueKind.GRO_M:
        if mixture is None:
            raise ValueError(
                "kind 'gro_m' needs a certified mixture; run the projection "
                "first (ripr.li_approximate or ripr.brute_force_two_component)"
            )
        value = log_s_gro_m(spec, alt, block, mixture)
        cert = mixture.certificate_dict()
    else:  # pragma: no cover
        raise ValueError(f"unknown kind {kind}")
    return EValueResult(kind, float(np.asarray(value)), cert)
