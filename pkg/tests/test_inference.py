"""Tests for statistics, thresholds, local-alternative quantities and power representations."""

from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy.integrate import quad
from scipy.stats import norm, poisson

from ppowerloss import intensity
from ppowerloss.edgeworth import ExpansionInput, edgeworth_quantile
from ppowerloss.errors import ModelError
from ppowerloss.inference import (SeriesMoments, a_minus_a_series, alternative_quantities,
                                  edgeworth_powers, empirical_threshold, expansion_centering, log_likelihood_ratio,
                                  np_threshold_mc, power_representation_second, power_representation_third,
                                  q_polynomial, score_statistic, score_threshold_second, score_threshold_third,
                                  theta_u)
from ppowerloss.inference import TestOutcome as Outcome
from ppowerloss.intensity import Domain, TrigSignal
from ppowerloss.moments import core_quantities, upper_quantile
from ppowerloss.sampler import Realization, SeedSpec, sample
from ppowerloss.simulation import StatKernel, simulate_statistics

Z05 = norm.isf(0.05)
# 100 (1.1 ln 1.1 - 0.1): mean of Lambda_n(1) under theta_u, homogeneous rate 1 on [0, 100]
HOMOGENEOUS_MU_U1 = 0.4841197784757431


def _points(model, xs, theta=None):
    return Realization(np.sort(np.asarray(xs, dtype=float)), model.domain, theta or model.theta0, 0)


def _slope(ns, values):
    return float(np.polyfit(np.log(ns), np.log(np.abs(values)), 1)[0])


@st.composite
def amplitude_models(draw):
    sig = TrigSignal(period=draw(st.floats(0.5, 2.0)), offset=draw(st.floats(1.5, 3.0)),
                     cos_coeffs=(draw(st.floats(-1.0, 1.0)),), sin_coeffs=(draw(st.floats(-0.4, 0.4)),))
    return intensity.amplitude(draw(st.floats(0.5, 2.0)), draw(st.integers(20, 200)) * sig.period,
                               dark_current=draw(st.floats(0.1, 1.0)), signal=sig)


class TestScoreStatistic:
    def test_empty_realization(self, homogeneous100):
        assert_allclose(score_statistic(_points(homogeneous100, []), homogeneous100), -10.0, rtol=1e-13)

    def test_count_equal_to_mean(self, homogeneous100):
        r = _points(homogeneous100, np.linspace(0.5, 99.5, 100))
        assert abs(score_statistic(r, homogeneous100)) < 1e-12

    def test_expsine_kernel(self):
        m = intensity.exp_sine(1.0, 20 * 2 * math.pi)
        r = sample(m, 1.0, SeedSpec(31))
        fisher, _ = quad(lambda x: x**2 * math.cos(x) ** 2 * math.exp(math.sin(x)), 0, m.n, limit=500,
                         epsabs=1e-10, epsrel=1e-12)
        comp, _ = quad(lambda x: x * math.cos(x) * math.exp(math.sin(x)), 0, m.n, limit=500,
                       epsabs=1e-10, epsrel=1e-12)
        expected = fisher**-0.5 * (np.sum(r.points * np.cos(r.points)) - comp)
        assert_allclose(score_statistic(r, m), expected, rtol=1e-8)

    def test_domain_mismatch(self, homogeneous100):
        r = Realization(np.array([1.0]), Domain(0.0, 50.0), 1.0, 0)
        with pytest.raises(ModelError):
            score_statistic(r, homogeneous100)

    def test_zero_intensity_at_event(self):
        m = intensity.amplitude(1.0, 10.0, dark_current=0.0, signal=TrigSignal.cosine(offset=1.0))
        with pytest.raises(ModelError):
            score_statistic(_points(m, [0.5]), m)


class TestLogLikelihoodRatio:
    def test_zero_u(self, amplitude50):
        r = sample(amplitude50, 1.0, SeedSpec(2))
        assert log_likelihood_ratio(r, amplitude50, 0.0) == 0.0

    @pytest.mark.parametrize("count", [0, 1, 87, 120])
    def test_homogeneous_closed_form(self, homogeneous100, count):
        r = _points(homogeneous100, np.linspace(1, 99, count))
        assert_allclose(log_likelihood_ratio(r, homogeneous100, 1.0), count * math.log(1.1) - 10.0,
                        rtol=1e-12, atol=1e-12)

    def test_empty_realization_is_minus_compensator(self, amplitude50):
        core = core_quantities(amplitude50)
        th = theta_u(amplitude50, 1.3, core)
        comp, _ = quad(lambda x: (th - 1.0) * (2 + math.cos(2 * math.pi * x)), 0.0, 1.0)
        assert_allclose(log_likelihood_ratio(_points(amplitude50, []), amplitude50, 1.3), -50 * comp, rtol=1e-12)

    def test_alternative_outside_neighbourhood(self, homogeneous100):
        with pytest.raises(ModelError):
            log_likelihood_ratio(_points(homogeneous100, []), homogeneous100, 50.0)


class TestThresholds:
    def test_second_order_reduces_to_normal(self):
        class Core:
            gamma3, gamma4 = 0.0, 0.0

        assert score_threshold_second(0.05, Core) == Z05

    def test_second_order_values(self):
        class Core:
            gamma3, gamma4 = 0.1, 0.0

        assert_allclose(score_threshold_second(0.05, Core), 1.67327, atol=1e-4)
        assert_allclose(score_threshold_second(0.5, Core), -0.1 / 6, rtol=1e-14)

    @given(alpha=st.floats(0.001, 0.999), g3=st.floats(-0.3, 0.3), g4=st.floats(0.0, 0.3))
    def test_third_order_is_edgeworth_quantile(self, alpha, g3, g4):
        class Core:
            gamma3, gamma4 = g3, g4

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            expected = edgeworth_quantile(alpha, ExpansionInput(g3, g4))
        assert score_threshold_third(alpha, Core) == expected

    @given(alpha=st.floats(0.001, 0.999), g3=st.floats(-0.3, 0.3))
    def test_second_order_is_h2_truncation(self, alpha, g3):
        class Core:
            gamma3, gamma4 = g3, 0.0

        z = upper_quantile(alpha)
        assert_allclose(score_threshold_second(alpha, Core), z + g3 / 6 * (z * z - 1), rtol=1e-14, atol=1e-15)

    def test_outcome_is_strict(self):
        assert Outcome.of(1.0, 1.0).reject is False
        assert Outcome.of(1.0 + 1e-15, 1.0).reject is True


class TestAlternativeQuantities:
    def test_homogeneous_closed_forms(self, homogeneous100):
        alt = alternative_quantities(homogeneous100, 1.0, 0.05)
        log11 = math.log(1.1)
        assert_allclose(alt.theta_u, 1.1, rtol=1e-14)
        assert_allclose(alt.m_n_u, 1.0, rtol=1e-12)
        assert_allclose(alt.eta_n**2, 1.1, rtol=1e-12)
        assert_allclose(alt.mu_n_u, HOMOGENEOUS_MU_U1, rtol=1e-10)
        assert_allclose(alt.sigma_n_u**2, 110 * log11**2, rtol=1e-12)
        assert_allclose(alt.mu_n0, 100 * (log11 - 0.1), rtol=1e-10)
        assert_allclose(alt.sigma_n0**2, 100 * log11**2, rtol=1e-12)
        assert_allclose(alt.gamma3p0, 0.1, rtol=1e-12)
        assert_allclose(alt.gamma4p0, 0.01, rtol=1e-12)

    def test_homogeneous_np_threshold_maps_score_threshold(self, homogeneous100):
        # Lambda = N ln 1.1 - 10 and Delta = (N - 100)/10 are affine in the same count
        core = core_quantities(homogeneous100)
        alt = alternative_quantities(homogeneous100, 1.0, 0.05, core=core)
        c3 = score_threshold_third(0.05, core)
        assert_allclose(alt.b_n, math.log(1.1) * (100 + 10 * c3) - 10, rtol=1e-12)
        assert_allclose(alt.A_n, alt.a_n, atol=1e-12)

    def test_zero_u_is_degenerate(self, amplitude50):
        alt = alternative_quantities(amplitude50, 0.0, 0.05)
        assert alt.degenerate
        assert alt.m_n_u == 0.0 and alt.eta_n == 1.0
        assert alt.mu_n_u == alt.sigma_n_u == alt.sigma_n0 == alt.b_n == 0.0
        with pytest.raises(ValueError):
            edgeworth_powers(alt)

    def test_small_u_approaches_null(self, amplitude50):
        alt = alternative_quantities(amplitude50, 1e-6, 0.05)
        core = core_quantities(amplitude50)
        assert not alt.degenerate
        assert abs(alt.m_n_u) < 2e-6
        assert_allclose(alt.eta_n, 1.0, atol=1e-6)
        assert_allclose(alt.gamma3_u, core.gamma3, rtol=1e-5)

    @given(model=amplitude_models(), u=st.floats(0.1, 3.0))
    def test_positive_scales(self, model, u):
        alt = alternative_quantities(model, u, 0.05)
        assert alt.eta_n > 0 and alt.sigma_n_u > 0 and alt.sigma_n0 > 0
        # the log-likelihood ratio has mean -KL under theta0 and +KL under theta_u
        assert alt.mu_n0 < 0 < alt.mu_n_u

    def test_negative_u(self, amplitude50):
        with pytest.raises(ValueError):
            alternative_quantities(amplitude50, -1.0, 0.05)


class TestExpansionCentering:
    def test_homogeneous_vanishes(self, homogeneous100):
        rep = expansion_centering(homogeneous100, 1.0, 0.05)
        assert abs(rep.diff_series) < 1e-15
        assert abs(rep.diff_direct) < 1e-12
        assert abs(rep.gamma_diff_direct - rep.gamma_diff_series) < 1e-12

    def test_amplitude_n400(self):
        rep = expansion_centering(intensity.amplitude(1.0, 400.0), 1.0, 0.05)
        assert abs(rep.diff_residual) <= 10 * 400**-1.5
        assert abs(rep.gamma_residual) <= 10 * 400**-1.5

    def test_residual_orders(self):
        ns = [100, 400, 1600]
        reps = [expansion_centering(intensity.amplitude(1.0, n), 1.0, 0.05) for n in ns]
        assert abs(_slope(ns, [r.diff_residual for r in reps]) + 1.5) < 0.3
        assert abs(_slope(ns, [r.gamma_residual for r in reps]) + 1.5) < 0.3

    def test_alternative_coefficient_degrades_residual(self):
        ns = [100, 400, 1600]
        reps = [expansion_centering(intensity.amplitude(1.0, n), 1.0, 0.05, printed=True) for n in ns]
        assert _slope(ns, [r.diff_residual for r in reps]) > -1.2

    def test_difference_is_order_one_over_n(self):
        ns = [100, 400, 1600]
        diffs = [alternative_quantities(intensity.amplitude(1.0, n), 1.0, 0.05) for n in ns]
        diffs = [a.A_n - a.a_n for a in diffs]
        assert abs(_slope(ns, diffs) + 1.0) < 0.2
        c = max(abs(d) * n for d, n in zip(diffs, ns))
        assert all(abs(d) <= c / n for d, n in zip(diffs, ns))

    def test_series_sum_matches_power_loss(self):
        """At the leading order the centering difference times n(A) reproduces u^3 J_n / 8."""
        model = intensity.amplitude(1.0, 400.0)
        core = core_quantities(model)
        sm = SeriesMoments.from_core(core)
        # with gamma'_3(u) - gamma_3(u) the H2 terms cancel; only the J_n part survives
        u, z = 1.0, Z05
        diff = a_minus_a_series(sm, u, z)
        gdiff = 1.5 * u * (sm.p221 + sm.g3**2 - sm.g4 - sm.g3 * sm.p111)
        total = diff + gdiff / 6 * ((u - z) ** 2 - 1)
        assert_allclose(total, u**3 * core.j_n / 8, rtol=1e-10)

    def test_requires_positive_u(self, amplitude50):
        with pytest.raises(ValueError):
            expansion_centering(amplitude50, 0.0, 0.05)


class TestPowerRepresentations:
    def test_homogeneous_second_order(self, homogeneous100):
        u = 1.5
        d = u - Z05
        expected = norm.cdf(d) + u * (Z05 - 2 * u) / 6 * 0.1 * norm.pdf(d)
        assert_allclose(power_representation_second(homogeneous100, u, 0.05), expected, rtol=1e-12)

    def test_small_u_gives_size(self, amplitude50):
        assert_allclose(power_representation_second(amplitude50, 1e-9, 0.05), 0.05, atol=1e-9)
        assert_allclose(power_representation_third(amplitude50, 1e-9, 0.05), 0.05, atol=1e-3)

    @given(model=amplitude_models(), u=st.floats(0.1, 3.0))
    def test_first_term_is_q_polynomial(self, model, u):
        core = core_quantities(model)
        d = u - Z05
        second = power_representation_second(model, u, 0.05, core)
        assert_allclose(second, norm.cdf(d) + q_polynomial(core, u, 0.05) * norm.pdf(d), rtol=1e-13)

    def test_homogeneous_third_order_uses_cumulants_only(self, homogeneous100):
        core = core_quantities(homogeneous100)
        sm = SeriesMoments.from_core(core)
        assert sm.p111 == sm.p1101 == sm.p221 == sm.p102 == 0.0
        alt = alternative_quantities(homogeneous100, 1.0, 0.05, core=core)
        score, _ = edgeworth_powers(alt)
        assert abs(power_representation_third(homogeneous100, 1.0, 0.05, core) - score) < 2e-4

    def test_orders_against_direct_expansion(self):
        ns = [100, 400, 1600]
        res2, res3, res3_printed = [], [], []
        for n in ns:
            m = intensity.amplitude(1.0, n)
            core = core_quantities(m)
            score, _ = edgeworth_powers(alternative_quantities(m, 1.0, 0.05, core=core))
            res2.append(power_representation_second(m, 1.0, 0.05, core) - score)
            res3.append(power_representation_third(m, 1.0, 0.05, core) - score)
            res3_printed.append(power_representation_third(m, 1.0, 0.05, core, printed=True) - score)
        assert abs(_slope(ns, res2) + 1.0) < 0.2
        assert abs(_slope(ns, res3) + 1.5) < 0.2
        assert abs(_slope(ns, res3_printed) + 1.0) < 0.2

    def test_requires_positive_u(self, amplitude50):
        with pytest.raises(ValueError):
            power_representation_second(amplitude50, 0.0, 0.05)
        with pytest.raises(ValueError):
            power_representation_third(amplitude50, -1.0, 0.05)


class TestNpThresholdMc:
    def test_homogeneous_lattice(self, homogeneous100):
        thr = np_threshold_mc(homogeneous100, 1.0, 0.05, 10_000, SeedSpec(17))
        k = (thr + 10.0) / math.log(1.1)
        assert abs(k - round(k)) < 1e-9
        assert abs(round(k) - poisson.isf(0.05, 100)) <= 1

    def test_median(self, amplitude50):
        kernel = StatKernel.build(amplitude50, us=(1.0,))
        _, llr = simulate_statistics(kernel, 1.0, 5, 0, 10_001)
        thr = np_threshold_mc(amplitude50, 1.0, 0.5, 10_001, SeedSpec(5))
        assert thr == np.sort(llr[0])[5000]

    def test_errors(self, amplitude50):
        with pytest.raises(ValueError):
            np_threshold_mc(amplitude50, 1.0, 0.05, 9_999, SeedSpec(1))
        with pytest.raises(ValueError):
            np_threshold_mc(amplitude50, 0.0, 0.05, 10_000, SeedSpec(1))

    def test_empirical_threshold_is_observed(self):
        values = np.array([3.0, 1.0, 2.0, 5.0, 4.0])
        assert empirical_threshold(values, 0.2) == 4.0
        assert empirical_threshold(values, 0.5) == 3.0


class TestCompensation:
    def test_score_is_standardized_under_null(self):
        m = intensity.amplitude(1.0, 100.0)
        reps = 100_000
        delta, _ = simulate_statistics(StatKernel.build(m), 1.0, 606, 0, reps)
        assert abs(delta.mean()) <= 3 * delta.std(ddof=1) / math.sqrt(reps)
        var_se = math.sqrt(np.var((delta - delta.mean()) ** 2, ddof=1) / reps)
        assert abs(delta.var(ddof=1) - 1.0) <= 3 * var_se

    def test_statistics_match_single_realization_route(self, amplitude50):
        kernel = StatKernel.build(amplitude50, us=(0.7,))
        delta, llr = simulate_statistics(kernel, 1.05, 12, 3, 9)
        for k, i in enumerate(range(3, 9)):
            r = sample(amplitude50, 1.05, SeedSpec(12, i))
            assert_allclose(delta[k], score_statistic(r, amplitude50), rtol=1e-11, atol=1e-12)
            assert_allclose(llr[0, k], log_likelihood_ratio(r, amplitude50, 0.7), rtol=1e-10, atol=1e-12)
