import math

import numpy as np
import pytest
from scipy import integrate, stats

from ksample_evalues import (
    Alternative,
    MeanDomainError,
    SupportError,
    as_generator,
    family_from_config,
    make_family,
    reduce_sufficient,
)
from ksample_evalues._quad import sum_nodes

ALL_FAMILIES = [
    "bernoulli",
    "gaussian_mean",
    "gaussian_variance",
    "poisson",
    "exponential",
    "geometric",
    "beta_fixed_alpha",
]

# central sampling ranges used to draw random mean parameters per family
MU_RANGES = {
    "bernoulli": (0.05, 0.95),
    "gaussian_mean": (-3.0, 3.0),
    "gaussian_variance": (0.2, 5.0),
    "poisson": (0.2, 6.0),
    "exponential": (0.1, 4.0),
    "geometric": (0.2, 8.0),
    "beta_fixed_alpha": (-3.0, -0.15),
}


def random_mus(name, n, seed=0):
    lo, hi = MU_RANGES[name]
    rng = np.random.default_rng(seed)
    return lo + (hi - lo) * rng.random(n)


def lebesgue_integral(spec, f):
    """Independent oracle: scipy adaptive quadrature / direct summation."""
    s = spec.support
    if s.discrete:
        hi = s.hi if np.isfinite(s.hi) else 10_000
        x = np.arange(s.lo, hi + 1)
        return float(np.sum(f(x)))
    lo = s.lo if np.isfinite(s.lo) else -np.inf
    hi = s.hi if np.isfinite(s.hi) else np.inf
    val, _ = integrate.quad(f, lo, hi, limit=400)
    return val


class TestParameterMaps:
    @pytest.mark.parametrize("name", ALL_FAMILIES)
    def test_roundtrip(self, name):
        spec = make_family(name)
        for mu in random_mus(name, 20, seed=1):
            lam = spec.natural_from_mean(mu)
            back = spec.mean_from_natural(lam)
            assert back == pytest.approx(mu, abs=1e-10 * max(1.0, abs(mu)))

    def test_known_natural_values(self):
        assert make_family("bernoulli").natural_from_mean(0.5) == pytest.approx(0.0)
        assert make_family("poisson").natural_from_mean(1.0) == pytest.approx(0.0)
        # exponential: lambda = -1/mu, checked against a finite difference of A'
        spec = make_family("exponential")
        lam = spec.natural_from_mean(0.5)
        assert lam == pytest.approx(-2.0)
        h = 1e-6
        a_prime = (spec.log_partition(lam + h) - spec.log_partition(lam - h)) / (2 * h)
        assert a_prime == pytest.approx(0.5, abs=1e-8)

    @pytest.mark.parametrize("name", ALL_FAMILIES)
    def test_out_of_domain_error_names_family(self, name):
        spec = make_family(name)
        lo, hi = spec.mean_space
        bad = lo - 1.0 if np.isfinite(lo) else hi + 1.0
        with pytest.raises(MeanDomainError, match=name):
            spec.natural_from_mean(bad)


class TestDensities:
    @pytest.mark.parametrize("name", ALL_FAMILIES)
    def test_normalization(self, name):
        spec = make_family(name)
        for mu in random_mus(name, 20, seed=2):
            total = lebesgue_integral(spec, lambda x: np.exp(spec.log_pdf(mu, x)))
            assert total == pytest.approx(1.0, abs=1e-8)

    def test_symmetric_bernoulli_ratio(self):
        spec = make_family("bernoulli")
        r = spec.log_density(0.5, 1) - spec.log_density(0.5, 0)
        assert r == pytest.approx(0.0, abs=1e-15)

    def test_exponential_rate_one_log_pdf(self):
        # at mu = 1 the carrier is trivial, so both density views agree with
        # the standard exponential pdf: log p(2) = -2
        spec = make_family("exponential")
        assert float(spec.log_density(1.0, 2.0)) == pytest.approx(-2.0)
        assert float(spec.log_pdf(1.0, 2.0)) == pytest.approx(-2.0)

    @pytest.mark.parametrize("name", ALL_FAMILIES)
    def test_support_error(self, name):
        spec = make_family(name)
        bad = {"bernoulli": 2.0, "gaussian_mean": None, "gaussian_variance": -1.0,
               "poisson": 1.5, "exponential": -0.5, "geometric": -1.0,
               "beta_fixed_alpha": 0.5}[name]
        if bad is None:
            pytest.skip("full-line support")
        with pytest.raises(SupportError):
            spec.log_density(np.mean(MU_RANGES[name]), bad)


class TestMoments:
    @pytest.mark.parametrize("name", ALL_FAMILIES)
    def test_finite_difference_consistency(self, name):
        spec = make_family(name)
        for mu in random_mus(name, 5, seed=3):
            lam = spec.natural_from_mean(mu)
            h = 1e-5 * max(1.0, abs(lam))
            a = spec.log_partition
            d1 = (a(lam + h) - a(lam - h)) / (2 * h)
            d2 = (a(lam + h) - 2 * a(lam) + a(lam - h)) / (h * h)
            assert d1 == pytest.approx(mu, abs=1e-6 * max(1.0, abs(mu)))
            var = spec.variance(mu)
            assert d2 == pytest.approx(var, abs=1e-5 * max(1.0, var))

    def test_variance_examples(self):
        assert make_family("gaussian_mean", sigma2=1.0).variance(3.7) == 1.0
        assert make_family("bernoulli").variance(0.25) == pytest.approx(0.1875)
        assert make_family("exponential").variance(0.5) == pytest.approx(0.25)

    def test_exponential_variance_monte_carlo(self):
        spec = make_family("exponential")
        x = spec.sample(0.5, 10**5, as_generator(5))
        se = 0.25 * math.sqrt(8.0 / 10**5)  # var of sample variance ~ mu^4 * 8/n
        assert np.var(x) == pytest.approx(0.25, abs=4 * se)

    @pytest.mark.parametrize("name", ALL_FAMILIES)
    def test_variance_derivatives_match_finite_differences(self, name):
        spec = make_family(name)
        for mu in random_mus(name, 3, seed=4):
            h = 1e-5 * max(1.0, abs(mu))
            d1 = (spec.variance(mu + h) - spec.variance(mu - h)) / (2 * h)
            d2 = (
                spec.variance(mu + h) - 2 * spec.variance(mu) + spec.variance(mu - h)
            ) / (h * h)
            assert spec.variance_d1(mu) == pytest.approx(d1, abs=1e-5 * max(1, abs(d1)))
            assert spec.variance_d2(mu) == pytest.approx(d2, abs=2e-4 * max(1, abs(d2)))


class TestSampling:
    def test_bernoulli_mean_band(self):
        spec = make_family("bernoulli")
        x = spec.sample(0.3, 10**5, as_generator(0))
        se = math.sqrt(0.3 * 0.7 / 10**5)
        assert abs(x.mean() - 0.3) < 4 * se

    def test_poisson_variance_band(self):
        spec = make_family("poisson")
        x = spec.sample(2.0, 10**5, as_generator(1))
        # variance of the sample variance ~ (m4 - var^2)/n
        m4 = spec.central_moment4(2.0)
        se = math.sqrt((m4 - 4.0) / 10**5)
        assert abs(np.var(x) - 2.0) < 4 * se

    @pytest.mark.parametrize("name", ALL_FAMILIES)
    def test_determinism(self, name):
        spec = make_family(name)
        mu = float(np.mean(MU_RANGES[name]))
        a = spec.sample(mu, 100, as_generator(42))
        b = spec.sample(mu, 100, as_generator(42))
        assert np.array_equal(a, b)

    @pytest.mark.parametrize("name", ALL_FAMILIES)
    def test_samples_in_support(self, name):
        spec = make_family(name)
        mu = float(np.mean(MU_RANGES[name]))
        x = spec.sample(mu, 1000, as_generator(3))
        assert np.all(spec.support.contains(x))


class TestKL:
    @pytest.mark.parametrize("name", ALL_FAMILIES)
    def test_zero_iff_equal_and_positive(self, name):
        spec = make_family(name)
        mus = random_mus(name, 4, seed=6)
        for mu in mus:
            assert spec.kl(mu, mu) == 0.0
        for a, b in zip(mus[:-1], mus[1:]):
            assert spec.kl(a, b) > 0.0

    def test_bernoulli_two_point_sum(self):
        spec = make_family("bernoulli")
        expect = 0.5 * math.log(0.5 / 0.25) + 0.5 * math.log(0.5 / 0.75)
        assert spec.kl(0.5, 0.25) == pytest.approx(expect, abs=1e-14)

    @pytest.mark.parametrize("name", ALL_FAMILIES)
    def test_matches_direct_integral(self, name):
        spec = make_family(name)
        mus = random_mus(name, 2, seed=7)
        a, b = float(mus[0]), float(mus[1])

        def integrand(x):
            return np.exp(spec.log_pdf(a, x)) * (
                spec.log_density(a, x) - spec.log_density(b, x)
            )

        assert spec.kl(a, b) == pytest.approx(
            lebesgue_integral(spec, integrand), abs=1e-8 * max(1, spec.kl(a, b))
        )


SUM_CASES = {
    "bernoulli": [0.3, 0.6, 0.45],
    "gaussian_mean": [0.5, -1.0, 2.0],
    "gaussian_variance": [0.5, 0.25, 1.5],
    "poisson": [1.0, 2.5, 0.7],
    "exponential": [0.5, 0.25, 1.2],
    "geometric": [10.0 / 3, 1.25, 2.0],
    "beta_fixed_alpha": [-1.0, -1.0 / 3, -0.7],
}


class TestSumDensity:
    @pytest.mark.parametrize("name", ALL_FAMILIES)
    @pytest.mark.parametrize("k", [2, 3])
    def test_normalization_and_mean(self, name, k):
        spec = make_family(name)
        mus = SUM_CASES[name][:k]
        z, w = sum_nodes(spec, mus, k, n=2048)
        p = np.exp(spec.sum_log_pdf(mus, z))
        assert np.sum(w * p) == pytest.approx(1.0, abs=1e-6)
        assert np.sum(w * z * p) == pytest.approx(
            sum(mus), abs=1e-6 * max(1.0, abs(sum(mus)))
        )

    def test_poisson_at_zero(self):
        spec = make_family("poisson")
        assert float(np.exp(spec.sum_log_pdf([1.0, 1.0], 0.0))) == pytest.approx(
            math.exp(-2.0)
        )

    def test_symmetric_bernoulli(self):
        spec = make_family("bernoulli")
        assert float(np.exp(spec.sum_log_pdf([0.5, 0.5], 1.0))) == pytest.approx(0.5)

    def test_exponential_quadrature_oracle(self):
        # direct convolution integral for mu = (0.5, 0.25), z = 1:
        # 4 * (e^-2 - e^-4), also re-checked by adaptive quadrature
        spec = make_family("exponential")
        got = float(np.exp(spec.sum_log_pdf([0.5, 0.25], 1.0)))
        assert got == pytest.approx(4 * (math.exp(-2) - math.exp(-4)), rel=1e-12)
        oracle, _ = integrate.quad(
            lambda x: np.exp(spec.log_pdf(0.5, x) + spec.log_pdf(0.25, 1.0 - x)), 0, 1
        )
        assert got == pytest.approx(oracle, rel=1e-10)

    def test_exponential_nearly_tied_rates_stable(self):
        spec = make_family("exponential")
        tied = float(np.exp(spec.sum_log_pdf([0.5, 0.5], 0.7)))
        near = float(np.exp(spec.sum_log_pdf([0.5, 0.5 + 1e-9], 0.7)))
        assert near == pytest.approx(tied, rel=1e-6)
        assert tied == pytest.approx(stats.gamma(2, scale=0.5).pdf(0.7), rel=1e-12)

    def test_gaussian_variance_closed_form_vs_quadrature(self):
        spec = make_family("gaussian_variance")
        got = float(np.exp(spec.sum_log_pdf([0.5, 0.25], 0.9)))
        oracle, _ = integrate.quad(
            lambda x: np.exp(spec.log_pdf(0.5, x) + spec.log_pdf(0.25, 0.9 - x)),
            0,
            0.9,
            points=[0.0, 0.9],
        )
        assert got == pytest.approx(oracle, rel=1e-8)

    def test_beta_general_alpha_convolution(self):
        spec = make_family("beta_fixed_alpha", alpha=2.0)
        mus, z = [-0.8, -0.3], -1.1
        got = float(np.exp(spec.sum_log_pdf(mus, z)))
        oracle, _ = integrate.quad(
            lambda x: np.exp(spec.log_pdf(mus[0], x) + spec.log_pdf(mus[1], z - x)),
            z,
            0,
        )
        assert got == pytest.approx(oracle, rel=1e-8)

    @pytest.mark.parametrize(
        "name", ["gaussian_variance", "exponential", "geometric", "bernoulli"]
    )
    def test_matches_monte_carlo_histogram(self, name):
        spec = make_family(name)
        mus = SUM_CASES[name][:2]
        rng = as_generator(9)
        z = spec.sample(mus[0], 10**5, rng) + spec.sample(mus[1], 10**5, rng)
        if spec.support.discrete:
            values = np.arange(0, int(np.quantile(z, 0.999)) + 1)
            probs = np.exp(spec.sum_log_pdf(mus, values.astype(float)))
            counts = np.array([(z == v).sum() for v in values])
        else:
            edges = np.quantile(z, np.linspace(0.0, 0.995, 24))
            counts, edges = np.histogram(z, bins=edges)
            grid, w = sum_nodes(spec, mus, 2, n=4096)
            pdf = np.exp(spec.sum_log_pdf(mus, grid))
            cdf_vals = np.cumsum(w * pdf)
            probs = np.diff(np.interp(edges, grid, cdf_vals))
        keep = probs * 10**5 > 10
        chi2 = np.sum(
            (counts[keep] - 10**5 * probs[keep]) ** 2 / (10**5 * probs[keep])
        )
        dof = int(keep.sum()) - 1
        assert chi2 < stats.chi2(dof).ppf(1.0 - 1e-6)

    def test_z_outside_support_errors(self):
        spec = make_family("exponential")
        with pytest.raises(SupportError):
            spec.sum_log_pdf([0.5, 0.25], -1.0)
        spec2 = make_family("bernoulli")
        with pytest.raises(SupportError):
            spec2.sum_log_pdf([0.5, 0.5], 3.0)


class TestReduceSufficient:
    def test_pareto(self):
        assert reduce_sufficient("pareto", 1.0, v=1.0) == pytest.approx(0.0)
        assert reduce_sufficient("pareto", 2.0 * math.e, v=2.0) == pytest.approx(1.0)
        with pytest.raises(MeanDomainError):
            reduce_sufficient("pareto", 0.5, v=1.0)

    def test_lognormal(self):
        assert reduce_sufficient("lognormal", math.e**2) == pytest.approx(2.0)
        with pytest.raises(MeanDomainError):
            reduce_sufficient("lognormal", -1.0)


class TestAlternative:
    def test_reconstruction_identity(self):
        spec = make_family("exponential")
        alt = Alternative.from_means(spec, [0.5, 0.25, 0.9])
        rebuilt = alt.mu0_star + alt.delta * np.asarray(alt.direction)
        assert np.allclose(rebuilt, alt.mu, rtol=0, atol=1e-14)
        assert abs(sum(alt.direction)) < 1e-12
        assert np.linalg.norm(alt.direction) == pytest.approx(1.0, abs=1e-12)

    def test_degenerate(self):
        spec = make_family("poisson")
        alt = Alternative.from_means(spec, [2.0, 2.0])
        assert alt.delta == 0.0
        assert alt.direction is None

    def test_from_effect(self):
        spec = make_family("gaussian_mean")
        alt = Alternative.from_effect(spec, 0.0, 0.2, [1.0, -1.0])
        assert alt.mu0_star == pytest.approx(0.0, abs=1e-15)
        assert alt.delta == pytest.approx(0.2)

    def test_validates_means(self):
        spec = make_family("bernoulli")
        with pytest.raises(MeanDomainError):
            Alternative.from_means(spec, [0.5, 1.5])


class TestConfig:
    @pytest.mark.parametrize("name", ALL_FAMILIES)
    def test_roundtrip(self, name):
        spec = make_family(name)
        cfg = spec.to_config(mean_params=[1.0, 2.0])
        back = family_from_config(cfg)
        assert back.family_id == spec.family_id
        assert back.fixed_params() == spec.fixed_params()

    def test_fixed_params_respected(self):
        spec = make_family("gaussian_mean", sigma2=2.5)
        back = family_from_config(spec.to_config())
        assert back.sigma2 == 2.5

    def test_beta_mean_conversion(self):
        spec = make_family("beta_fixed_alpha")
        mu = spec.mean_from_beta_mean(0.5)
        assert mu == pytest.approx(-1.0)
        assert spec.beta_mean_from_mean(mu) == pytest.approx(0.5)
