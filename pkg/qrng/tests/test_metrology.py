import itertools
import math

import numpy as np
from django.test import SimpleTestCase, tag
from scipy import integrate

from qrng.domain import DistrustLevel, NoiseModel, TimingBudget, default_noise_model
from qrng.exceptions import ConfigurationError, DeembedError, InsufficientDataError, NumericalError
from qrng.metrology import (
    NoiseBreakdown,
    arcsine_cdf,
    arcsine_pdf,
    brute_force_parity_epsilon,
    combine_noise,
    confidence_sweep,
    deembed_sigma,
    effective_half_swing,
    epsilon_bound,
    epsilon_from_p1,
    fit_arcsine_histogram,
    freshness,
    freshness_discrepancy,
    jitter_pvalue,
    jitter_sigma_multiple,
    mean_vc_discrepancy,
    mean_vc_from_p1,
    p1_given_vc,
    parity_epsilon,
    predictability_report,
    predictability_table,
    two_sided_tail,
)

# Reference bounds at six sigma: (sigma_vc, eps_max^4, eps_max^6).
REFERENCE = {
    DistrustLevel.ORDINARY: (8.6, 2.5e-5, 1.3e-7),
    DistrustLevel.DIGITIZER_PARANOID: (11.7, 8.6e-5, 8.0e-7),
    DistrustLevel.FULLY_PARANOID: (14.5, 2.0e-4, 2.9e-6),
}


class ArcsineLawTests(SimpleTestCase):
    def test_pdf_is_normalised(self):
        total, _ = integrate.quad(lambda x: float(arcsine_pdf(np.array([x]), 2.0)[0]), -2.0, 2.0, limit=200)
        self.assertAlmostEqual(total, 1.0, places=4)

    def test_pdf_vanishes_outside_the_swing(self):
        np.testing.assert_array_equal(arcsine_pdf(np.array([-3.0, 2.5]), 2.0), [0.0, 0.0])

    def test_cdf(self):
        self.assertAlmostEqual(float(arcsine_cdf(0.0, 483.0)), 0.5)
        self.assertAlmostEqual(float(arcsine_cdf(483.0, 483.0)), 1.0)
        self.assertAlmostEqual(float(arcsine_cdf(-600.0, 483.0)), 0.0)

    def test_p1_given_vc(self):
        self.assertAlmostEqual(p1_given_vc(0.0, 483.0).p1, 0.5)
        probability = p1_given_vc(54.6, 469.0)
        self.assertFalse(probability.saturated)
        self.assertLess(abs(probability.p1 - 0.537141), 1e-5)
        self.assertAlmostEqual(p1_given_vc(-54.6, 469.0).p1, 1.0 - probability.p1)

    def test_p1_saturates_outside_the_swing(self):
        self.assertEqual(p1_given_vc(500.0, 483.0), (1.0, True))
        self.assertEqual(p1_given_vc(-500.0, 483.0), (0.0, True))

    def test_p1_needs_positive_swing(self):
        with self.assertRaises(ConfigurationError):
            p1_given_vc(1.0, 0.0)

    def test_epsilon_from_p1(self):
        self.assertAlmostEqual(epsilon_from_p1(0.75), 0.5)
        self.assertAlmostEqual(epsilon_from_p1(0.25), 0.5)
        self.assertEqual(epsilon_from_p1(0.5), 0.0)


class NoiseCombinationTests(SimpleTestCase):
    def setUp(self):
        self.breakdown = NoiseBreakdown.from_noise_model(default_noise_model())

    def test_measured_noise_reproduces_reference_sigmas(self):
        for level, (sigma_vc, _, _) in REFERENCE.items():
            self.assertLess(abs(combine_noise(self.breakdown, level) - sigma_vc), 0.3, level)

    def test_exact_combinations(self):
        self.assertAlmostEqual(combine_noise(self.breakdown, DistrustLevel.ORDINARY), math.sqrt(77.27))
        self.assertAlmostEqual(combine_noise(self.breakdown, 'digitizer-paranoid'), math.sqrt(17.98) + 7.7)
        self.assertAlmostEqual(combine_noise(self.breakdown, DistrustLevel.FULLY_PARANOID), 14.7)

    def test_paranoia_never_lowers_the_sigma(self):
        values = [combine_noise(self.breakdown, level) for level in DistrustLevel]
        self.assertEqual(values, sorted(values))

    def test_incomplete_breakdown(self):
        with self.assertRaises(ConfigurationError) as caught:
            combine_noise(NoiseBreakdown({'vS': 1.0, 'vX': 2.0}), DistrustLevel.ORDINARY)
        self.assertIn("unknown source vX", caught.exception.violations)
        self.assertIn("missing source vRef", caught.exception.violations)

    def test_tail_fraction(self):
        self.assertAlmostEqual(two_sided_tail(6) / 1.973e-9, 1.0, places=2)


class PredictabilityTests(SimpleTestCase):
    def setUp(self):
        self.noise = default_noise_model()

    def test_effective_half_swing(self):
        self.assertAlmostEqual(effective_half_swing(self.noise, 6), 469.15, places=1)

    def test_bounds_within_a_factor_of_two_of_reference(self):
        for level, (_, eps4, eps6) in REFERENCE.items():
            self.assertLess(abs(math.log(predictability_report(self.noise, level, 4).epsilon_max_k / eps4)),
                            math.log(2.0), level)
            self.assertLess(abs(math.log(predictability_report(self.noise, level, 6).epsilon_max_k / eps6)),
                            math.log(2.0), level)

    def test_ordinary_bound_values(self):
        report = predictability_report(self.noise, DistrustLevel.ORDINARY, 4)
        self.assertAlmostEqual(report.vc_bound, 3.0 + 6 * math.sqrt(77.27))
        self.assertLess(abs(report.epsilon_max_k / 3.30e-5 - 1.0), 0.02)
        self.assertAlmostEqual(report.epsilon_max_k, report.epsilon_max ** 4)
        self.assertFalse(report.saturated)

    def test_bound_grows_with_confidence(self):
        sweep = confidence_sweep(self.noise, DistrustLevel.ORDINARY, 4)
        self.assertEqual(sorted(sweep), [1, 2, 6])
        self.assertLess(sweep[1], sweep[2])
        self.assertLess(sweep[2], sweep[6])

    def test_saturated_bound_certifies_nothing(self):
        report = epsilon_bound(self.noise, sigma_vc=100.0, n_sigmas=6, k=4)
        self.assertTrue(report.saturated)
        self.assertEqual(report.epsilon_max, 1.0)
        self.assertEqual(report.epsilon_max_k, 1.0)

    def test_arm_fluctuations_larger_than_the_mean(self):
        with self.assertRaises(NumericalError):
            effective_half_swing(NoiseModel(sigma_vS=50.0), 6)

    def test_bad_arguments(self):
        with self.assertRaises(ConfigurationError):
            epsilon_bound(self.noise, 8.0, n_sigmas=0)
        with self.assertRaises(ConfigurationError):
            epsilon_bound(self.noise, 8.0, k=0)

    def test_table_layout(self):
        reports = predictability_table(self.noise)
        self.assertEqual(
            [(report.distrust, report.k) for report in reports],
            [(level, k) for level in DistrustLevel for k in (4, 6)],
        )
        self.assertTrue(all(report.freshness_ns is not None for report in reports))
        self.assertEqual(reports[0].as_dict()['distrust'], 'ordinary')


class ParityTests(SimpleTestCase):
    def test_product_rule(self):
        self.assertAlmostEqual(parity_epsilon([0.5, 0.5]), 0.25)
        self.assertEqual(parity_epsilon([]), 1.0)
        with self.assertRaises(ConfigurationError):
            parity_epsilon([1.5])

    def test_brute_force_oracle_agrees(self):
        grid = (0.0, 0.01, 0.07, 0.3, 0.9)
        for k in range(1, 11):
            for eps in grid:
                self.assertAlmostEqual(brute_force_parity_epsilon([eps] * k), parity_epsilon([eps] * k), delta=1e-12)

    def test_brute_force_oracle_mixed_bounds(self):
        for eps_list in itertools.product((0.02, 0.2, 0.6), repeat=4):
            self.assertAlmostEqual(brute_force_parity_epsilon(eps_list), parity_epsilon(eps_list), delta=1e-12)


class MeasurementTests(SimpleTestCase):
    def test_mean_vc_from_p1(self):
        self.assertAlmostEqual(mean_vc_from_p1(0.50035, 966.0), 0.5311, places=4)
        self.assertAlmostEqual(mean_vc_from_p1(0.5, 966.0), 0.0)
        with self.assertRaises(ConfigurationError):
            mean_vc_from_p1(1.0, 966.0)

    def test_mean_vc_discrepancy(self):
        values = mean_vc_discrepancy(default_noise_model())
        self.assertEqual(values['configured'], 3.0)
        self.assertAlmostEqual(values['from_p1'], 0.5311, places=4)

    def test_deembed(self):
        self.assertAlmostEqual(deembed_sigma(1.9, [1.7]), 0.8485, places=4)
        self.assertAlmostEqual(deembed_sigma(8.4, [3.4]), 7.681, places=3)
        self.assertEqual(deembed_sigma(2.0, []), 2.0)

    def test_deembed_rejects_larger_backgrounds(self):
        with self.assertRaises(DeembedError):
            deembed_sigma(1.7, [1.9])


class FreshnessTests(SimpleTestCase):
    def setUp(self):
        self.budget = TimingBudget()

    def test_single_bit_interval(self):
        interval = freshness(self.budget, 1)
        self.assertAlmostEqual(interval.lower, 10.03)
        self.assertAlmostEqual(interval.upper, 11.03)
        self.assertAlmostEqual(interval.width, 1.0)
        # Reference values carry two decimals of edge-budget rounding.
        self.assertLess(abs(interval.lower - 10.01), 0.05)
        self.assertLess(abs(interval.upper - 11.07), 0.05)

    def test_gap_to_the_published_interval(self):
        fresh = freshness_discrepancy(self.budget)
        self.assertEqual(fresh['measured'], [10.01, 11.07])
        np.testing.assert_allclose(fresh['computed'], [10.03, 11.03])
        np.testing.assert_allclose(fresh['gap_ns'], [0.02, -0.04], atol=1e-9)
        np.testing.assert_allclose(freshness_discrepancy(self.budget, (10.03, 11.03))['gap_ns'], [0.0, 0.0], atol=1e-9)

    def test_parity_adds_clock_periods(self):
        self.assertLess(abs(freshness(self.budget, 4).upper - 26.07), 0.05)
        self.assertLess(abs(freshness(self.budget, 6).upper - 36.07), 0.05)
        self.assertEqual(round(freshness(self.budget, 4).upper), 26)
        self.assertEqual(round(freshness(self.budget, 6).upper), 36)

    def test_bad_k(self):
        with self.assertRaises(ConfigurationError):
            freshness(self.budget, 0)

    def test_jitter_pvalue(self):
        self.assertLess(abs(jitter_pvalue(1.4e-5, 1_000_000, 0) / 8e-7 - 1.0), 0.1)
        self.assertAlmostEqual(jitter_pvalue(1.4e-5, 1_000_000, 14), 0.570, places=2)
        self.assertEqual(jitter_pvalue(0.0, 10, 0), 1.0)
        with self.assertRaises(ConfigurationError):
            jitter_pvalue(0.1, 0, 0)

    def test_jitter_sigma_multiple(self):
        self.assertEqual(jitter_sigma_multiple(self.budget), 5.0)


class ArcsineFitTests(SimpleTestCase):
    def test_recovers_a_blurred_arcsine(self):
        rng = np.random.default_rng(12)
        n = 200_000
        samples = 502.0 + 480.0 * np.cos(rng.uniform(0.0, 2.0 * math.pi, n)) + rng.normal(0.0, 5.0, n)
        fit = fit_arcsine_histogram(samples, bin_width=4.0)
        self.assertAlmostEqual(fit.center, 502.0, delta=1.0)
        self.assertAlmostEqual(fit.two_dvphi, 960.0, delta=2.0)
        self.assertAlmostEqual(fit.blur, 5.0, delta=0.5)
        self.assertGreater(fit.p_value, 1e-4)
        self.assertEqual(fit.counts.sum(), n)

    def test_needs_enough_samples(self):
        with self.assertRaises(InsufficientDataError):
            fit_arcsine_histogram(np.zeros(10))

    @tag('slow')
    def test_simulated_signal_has_the_measured_swing(self):
        from qrng.domain import SimConfig
        from qrng.photonics import simulate_pulse_train

        train = simulate_pulse_train(SimConfig(n_pulses=1_000_000), default_noise_model(), np.random.default_rng(3))
        fit = fit_arcsine_histogram(train.v, amplitude_sigma=1.6)
        self.assertLess(abs(fit.two_dvphi / 966.0 - 1.0), 0.02)
