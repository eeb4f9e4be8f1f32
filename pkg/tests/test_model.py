import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from pydantic import ValidationError
from scipy import special

from config import KAPPA_FLOOR, LARGE_M
from core import model
from core.errors import ParameterDomainError, SeriesConvergenceError
from core.model import (afd, afd_normalized, afd_normalized_closed_form,
                        afd_normalized_uncorrelated, cdf, curve, lcr,
                        lcr_normalized, lcr_normalized_uncorrelated,
                        mean_positive_slope, pdf, slope_pdf,
                        slope_variance_multipath, slope_variance_shadow,
                        special_case_params, table_preset)
from core.specfun import integrate_adaptive
from core.state_models import ChannelParams, DopplerParams


SQRT_2PI = math.sqrt(2.0 * math.pi)


def _levels(db_from, db_to, points, r_bar=1.0):
    return r_bar * 10.0 ** (np.linspace(db_from, db_to, points) / 20.0)


def _kappa_mu_lcr(kappa, mu, rho_t):
    """Unshadowed crossing rate through the modified Bessel function."""
    w = mu ** 2 * kappa * (1.0 + kappa) * rho_t ** 2
    z = 2.0 * math.sqrt(w)
    log_value = (0.5 * math.log(2.0 * math.pi)
                 + (mu - 0.5) * math.log(mu)
                 + (mu - 0.5) * math.log1p(kappa)
                 + (2.0 * mu - 1.0) * math.log(rho_t)
                 - mu * kappa - mu * (1.0 + kappa) * rho_t ** 2
                 + 0.5 * (1.0 - mu) * math.log(w)
                 + math.log(special.ive(mu - 1.0, z)) + z)
    return math.exp(log_value)


def _nakagami_lcr(m0, rho_t):
    return (SQRT_2PI * m0 ** (m0 - 0.5) / special.gamma(m0)
            * rho_t ** (2.0 * m0 - 1.0) * math.exp(-m0 * rho_t ** 2))


class TestChannelParams:
    def test_rho_requires_a_dominant_component(self):
        with pytest.raises(ValidationError, match="rho = 0 required"):
            ChannelParams(kappa=0.0, mu=1.0, m=1.0, rho=0.3)

    def test_negative_rho_must_keep_the_denominator_positive(self):
        with pytest.raises(ValidationError, match="violated"):
            ChannelParams(kappa=1.0, mu=1.0, m=1.0, rho=-0.3)
        p = ChannelParams(kappa=0.01, mu=1.0, m=1.0, rho=-0.1)
        assert p.lcr_denominator() > 0.0

    @pytest.mark.parametrize("field, value", [
        ("kappa", -0.1), ("mu", 0.0), ("m", 0.0), ("r_bar", -1.0),
        ("rho", 1.0), ("kappa", math.nan), ("m", math.inf),
    ])
    def test_out_of_range_fields(self, field, value):
        values = {"kappa": 1.0, "mu": 1.0, "m": 1.0, field: value}
        with pytest.raises(ValidationError):
            ChannelParams(**values)

    def test_presets(self):
        p, d = table_preset("d2d")
        assert (p.kappa, p.mu, p.r_bar, p.m, p.rho) == (
            1.39, 1.78, 1.14, 0.55, 0.29)
        assert d.f_m == 2.40
        p, d = table_preset("on-body")
        assert (p.kappa, p.mu, p.r_bar, p.m, p.rho) == (
            0.66, 1.39, 1.03, 0.36, 0.05)
        assert d.f_m == 4.68
        with pytest.raises(ParameterDomainError):
            table_preset("indoor")


class TestPdf:
    def test_rayleigh(self, rayleigh_params):
        assert pdf(rayleigh_params, 1.0) == pytest.approx(2.0 / math.e,
                                                          rel=1e-12)

    def test_origin(self):
        assert pdf(ChannelParams(kappa=1.0, mu=1.5, m=2.0), 0.0) == 0.0
        assert pdf(ChannelParams(kappa=1.0, mu=0.3, m=2.0), 0.0) == math.inf
        value = pdf(ChannelParams(kappa=1.0, mu=0.5, m=2.0), 0.0)
        assert 0.0 < value < math.inf

    @pytest.mark.parametrize("r", [-0.1, math.nan, math.inf])
    def test_domain(self, d2d_params, r):
        with pytest.raises(ParameterDomainError):
            pdf(d2d_params, r)

    def test_table_rows_integrate_to_one(self, d2d_params, on_body_params):
        for p in (d2d_params, on_body_params):
            total = integrate_adaptive(lambda r: pdf(p, r), 0.0, 8.0 * p.r_bar)
            assert total == pytest.approx(1.0, abs=1e-8)

    def test_random_parameters_integrate_to_one(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            p = ChannelParams(kappa=rng.uniform(0.0, 10.0),
                              mu=rng.uniform(0.5, 8.0),
                              m=rng.uniform(0.2, 100.0))
            total = integrate_adaptive(lambda r: pdf(p, r), 0.0, 8.0,
                                       rel_tol=1e-9)
            assert total == pytest.approx(1.0, abs=1e-7), p

    def test_scale_equivariance(self, d2d_params):
        unit = d2d_params.replace(r_bar=1.0)
        doubled = d2d_params.replace(r_bar=2.0)
        for r in (0.125, 0.5, 1.0, 3.0):
            assert pdf(doubled, 2.0 * r) == pytest.approx(pdf(unit, r) / 2.0,
                                                          rel=1e-12)


class TestCdf:
    def test_rayleigh(self, rayleigh_params):
        assert cdf(rayleigh_params, 0.0) == 0.0
        assert cdf(rayleigh_params, 1.0) == pytest.approx(1.0 - 1.0 / math.e,
                                                          rel=1e-12)

    @pytest.mark.parametrize("rho_t", [0.1, 0.5, 1.0, 2.0])
    def test_matches_quadrature_of_the_density(self, d2d_params,
                                               on_body_params, rho_t):
        for p in (d2d_params, on_body_params):
            r = rho_t * p.r_bar
            expected = integrate_adaptive(lambda x: pdf(p, x), 0.0, r)
            assert cdf(p, r) == pytest.approx(expected, rel=1e-8)

    def test_increments_match_the_density(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            p = ChannelParams(kappa=rng.uniform(0.1, 5.0),
                              mu=rng.uniform(0.6, 4.0),
                              m=rng.uniform(0.3, 20.0))
            r0, r1 = np.sort(rng.uniform(0.05, 2.0, size=2))
            mass = integrate_adaptive(lambda x: pdf(p, x), r0, r1)
            assert cdf(p, r1) - cdf(p, r0) == pytest.approx(mass, abs=1e-7)

    def test_nondecreasing_and_bounded(self, d2d_params):
        values = [cdf(d2d_params, r) for r in _levels(-40, 10, 200, 1.14)]
        assert all(0.0 <= v <= 1.0 for v in values)
        assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))


class TestSlopes:
    def test_variances(self, unit_doppler):
        p = ChannelParams(kappa=1.0, mu=1.0, m=2.0)
        assert slope_variance_multipath(p, unit_doppler) == pytest.approx(
            math.pi ** 2 / 2.0, rel=1e-14)
        assert slope_variance_shadow(p, unit_doppler) == pytest.approx(
            math.pi ** 2 / 4.0, rel=1e-14)

    def test_shadow_variance_follows_the_shadow_doppler(self):
        p = ChannelParams(kappa=1.0, mu=1.0, m=2.0)
        slow = DopplerParams(f_m=1.0, shadow_f_m=0.5)
        assert slow.shadow_ratio == 0.5
        assert slope_variance_shadow(p, slow) == pytest.approx(
            math.pi ** 2 / 16.0, rel=1e-14)

    def test_shadow_variance_needs_a_dominant_component(self, rayleigh_params,
                                                        unit_doppler):
        with pytest.raises(ParameterDomainError):
            slope_variance_shadow(rayleigh_params, unit_doppler)

    def test_uncorrelated_slope_density_is_normalized(self, d2d_params,
                                                      unit_doppler):
        p = d2d_params.replace(rho=0.0)
        spread = 12.0 * math.sqrt(slope_variance_multipath(p, unit_doppler)
                                  + slope_variance_shadow(p, unit_doppler))
        total = integrate_adaptive(lambda v: slope_pdf(p, unit_doppler, v),
                                   -spread, spread, rel_tol=1e-9)
        assert total == pytest.approx(1.0, rel=1e-8)

    def test_mean_positive_slope_is_the_first_moment(self, d2d_params,
                                                     unit_doppler):
        upper = 40.0 * math.sqrt(slope_variance_multipath(d2d_params,
                                                          unit_doppler))
        moment = integrate_adaptive(
            lambda v: v * slope_pdf(d2d_params, unit_doppler, v),
            0.0, upper, rel_tol=1e-9)
        assert mean_positive_slope(d2d_params, unit_doppler) == pytest.approx(
            moment, rel=1e-8)


class TestLcr:
    def test_rayleigh(self, rayleigh_params):
        assert lcr_normalized(rayleigh_params, 1.0) == pytest.approx(
            SQRT_2PI / math.e, rel=1e-12)

    def test_vanishes_towards_zero(self):
        p = ChannelParams(kappa=0.5, mu=2.0, m=1.0)
        values = [lcr_normalized(p, r) for r in (1e-3, 1e-2, 1e-1)]
        assert values[0] < values[1] < values[2]
        assert values[0] < 1e-7

    def test_rejects_zero_threshold(self, d2d_params, unit_doppler):
        with pytest.raises(ParameterDomainError):
            lcr_normalized(d2d_params, 0.0)
        with pytest.raises(ParameterDomainError):
            lcr(d2d_params, unit_doppler, 0.0)

    def test_uncorrelated_forms_agree(self, d2d_params):
        p = d2d_params.replace(rho=0.0)
        for r in _levels(-30, 10, 100, p.r_bar):
            assert lcr_normalized(p, r) == pytest.approx(
                lcr_normalized_uncorrelated(p, r), rel=1e-12)

    def test_rate_in_hertz_scales_with_doppler(self, d2d_params):
        _, d = table_preset("d2d")
        for r in _levels(-20, 5, 6, d2d_params.r_bar):
            assert lcr(d2d_params, d, r) / d.f_m == pytest.approx(
                lcr_normalized(d2d_params, r), rel=1e-10)

    def test_slower_shadowing_scales_the_rate(self, d2d_params):
        d = DopplerParams(f_m=2.0, shadow_f_m=1.0)
        r = d2d_params.r_bar * 0.5
        assert lcr(d2d_params, d, r) / d.f_m == pytest.approx(
            lcr_normalized(d2d_params, r, shadow_ratio=0.5), rel=1e-10)

    def test_scale_equivariance(self, d2d_params):
        unit = d2d_params.replace(r_bar=1.0)
        doubled = d2d_params.replace(r_bar=2.0)
        for r in (0.125, 0.5, 1.0, 3.0):
            assert lcr_normalized(doubled, 2.0 * r) == pytest.approx(
                lcr_normalized(unit, r), rel=1e-12)

    def test_decreases_with_lighter_shadowing(self):
        r = 10.0 ** (-20.0 / 20.0)
        values = [lcr_normalized(ChannelParams(kappa=0.5, mu=2.0, m=m), r)
                  for m in (0.5, 1.0, 5.0, 50.0)]
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_decreases_with_slope_correlation(self):
        r = 10.0 ** (-20.0 / 20.0)
        values = [lcr_normalized(
            ChannelParams(kappa=0.5, mu=2.0, m=1.0, rho=rho), r)
            for rho in (0.0, 0.25, 0.5)]
        assert all(b < a for a, b in zip(values, values[1:]))


class TestAfd:
    def test_rayleigh(self, rayleigh_params):
        assert afd_normalized(rayleigh_params, 1.0) == pytest.approx(
            (math.e - 1.0) / SQRT_2PI, rel=1e-12)

    def test_fade_duration_times_rate_is_the_outage(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            p = ChannelParams(kappa=rng.uniform(0.0, 10.0),
                              mu=rng.uniform(0.5, 8.0),
                              m=rng.uniform(0.2, 100.0),
                              rho=rng.uniform(0.0, 0.9))
            for r in _levels(-30, 10, 100):
                rate = lcr_normalized(p, r)
                duration = afd_normalized(p, r)
                if rate < 1e-300 or not math.isfinite(duration):
                    continue
                assert duration * rate == pytest.approx(cdf(p, r),
                                                        rel=1e-10)

    def test_closed_form_matches_the_ratio(self, d2d_params):
        for r in _levels(-30, 10, 41, d2d_params.r_bar):
            assert afd_normalized_closed_form(d2d_params, r) == pytest.approx(
                afd_normalized(d2d_params, r), rel=1e-10)

    def test_uncorrelated_closed_forms_agree(self, d2d_params):
        p = d2d_params.replace(rho=0.0)
        for r in _levels(-30, 10, 41, p.r_bar):
            assert afd_normalized_uncorrelated(p, r) == pytest.approx(
                afd_normalized_closed_form(p, r), rel=1e-12)

    def test_seconds(self, d2d_params):
        _, d = table_preset("d2d")
        r = 0.3 * d2d_params.r_bar
        assert afd(d2d_params, d, r) == pytest.approx(
            afd_normalized(d2d_params, r) / d.f_m, rel=1e-14)

    def test_increases_with_lighter_shadowing(self):
        r = 10.0 ** (-20.0 / 20.0)
        values = [afd_normalized(ChannelParams(kappa=0.5, mu=2.0, m=m), r)
                  for m in (0.5, 1.0, 5.0, 50.0)]
        assert all(b > a for a, b in zip(values, values[1:]))


class TestSpecialCases:
    def test_mapping(self):
        p = special_case_params("rayleigh")
        assert (p.kappa, p.mu, p.m) == (KAPPA_FLOOR, 1.0, LARGE_M)
        p = special_case_params("rice", 3.0)
        assert (p.kappa, p.mu, p.m) == (3.0, 1.0, LARGE_M)
        p = special_case_params("nakagami", 2.0)
        assert (p.kappa, p.mu, p.m) == (KAPPA_FLOOR, 2.0, LARGE_M)
        p = special_case_params("kappa_mu", 0.5, 2.0)
        assert (p.kappa, p.mu, p.m, p.rho) == (0.5, 2.0, LARGE_M, 0.0)

    @pytest.mark.parametrize("kind, shape", [
        ("weibull", (1.0,)), ("rice", ()), ("rayleigh", (1.0,)),
        ("nakagami", (0.0,)), ("kappa_mu", (1.0, -2.0)),
    ])
    def test_rejected(self, kind, shape):
        with pytest.raises(ParameterDomainError):
            special_case_params(kind, *shape)

    def test_rayleigh_limit(self):
        p = special_case_params("rayleigh")
        for rho_t in _levels(-30, 2, 33):
            expected = SQRT_2PI * rho_t * math.exp(-rho_t ** 2)
            assert lcr_normalized(p, rho_t) == pytest.approx(expected,
                                                             rel=1e-3)

    def test_nakagami_limit(self):
        p = special_case_params("nakagami", 2.0)
        for rho_t in _levels(-30, 2, 33):
            assert lcr_normalized(p, rho_t) == pytest.approx(
                _nakagami_lcr(2.0, rho_t), rel=1e-3)

    @pytest.mark.parametrize("kind, shape, kappa, mu", [
        ("rice", (3.0,), 3.0, 1.0),
        ("kappa_mu", (0.5, 2.0), 0.5, 2.0),
    ])
    def test_unshadowed_limit(self, kind, shape, kappa, mu):
        p = special_case_params(kind, *shape)
        for rho_t in _levels(-30, 2, 33):
            assert lcr_normalized(p, rho_t) == pytest.approx(
                _kappa_mu_lcr(kappa, mu, rho_t), rel=1e-3)


class TestCurve:
    def test_rayleigh_point(self, rayleigh_params):
        result = curve(rayleigh_params, "lcr", [0.0])
        assert result.values == [pytest.approx(0.9221370089, rel=1e-9)]
        assert result.failures == []

    def test_table_row_is_finite_everywhere(self, d2d_params):
        result = curve(d2d_params, "lcr", np.linspace(-30.0, 10.0, 101))
        values = np.array(result.values, dtype=float)
        assert values.size == 101
        assert np.all(np.isfinite(values)) and np.all(values > 0.0)

    def test_cdf_curve(self, on_body_params):
        result = curve(on_body_params, "cdf", np.linspace(-30.0, 10.0, 41))
        assert_allclose(result.values,
                        [cdf(on_body_params, on_body_params.r_bar * 10 ** (v / 20))
                         for v in result.thresholds_db], rtol=1e-14)

    @pytest.mark.parametrize("grid", [[], [0.0, 0.0], [1.0, -1.0],
                                      [0.0, math.nan]])
    def test_bad_grid(self, d2d_params, grid):
        with pytest.raises(ParameterDomainError):
            curve(d2d_params, "lcr", grid)

    def test_unknown_statistic(self, d2d_params):
        with pytest.raises(ParameterDomainError):
            curve(d2d_params, "mgf", [0.0])

    def test_failed_points_are_recorded(self, d2d_params, monkeypatch, caplog):
        def flaky(p, r, shadow_ratio=1.0):
            if r > p.r_bar:
                raise SeriesConvergenceError("term cap reached")
            return 0.5

        monkeypatch.setitem(model.available_statistics_map, "lcr", flaky)
        result = curve(d2d_params, "lcr", [-10.0, 0.0, 5.0])
        assert result.values == [0.5, 0.5, None]
        assert [f.index for f in result.failures] == [2]
        assert "term cap reached" in result.failures[0].reason
        assert "lcr failed at 5.0 dB" in caplog.text
