import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from scipy.stats import kstest

from qrng.config import GeneratorConfig
from qrng.exceptions import BitFileError, ConfigurationError, InsufficientDataError
from qrng.extractor import BitKind, BitStream, distill, extract
from qrng.pipeline import simulate
from qrng.stats import (
    PClass,
    TestOutcome,
    autocorrelation,
    battery_failure_rates,
    block_frequency,
    classify_p,
    export,
    gamma_bound,
    gamma_bound_binomial,
    gamma_distribution_check,
    import_export,
    lag_product_counts,
    longest_run,
    longest_runs_per_block,
    mini_battery,
    monobit,
    runs,
    serial,
    write_autocorr_csv,
)

LONGEST_RUN_VECTOR = (
    '11001100000101010110110001001100111000000000001001001101010100010001001111010110100000001101011111001100'
    '111001101101100010110010'
)


def random_stream(n, seed, p1=0.5, kind=BitKind.EXTRACTED):
    bits = (np.random.default_rng(seed).random(n) < p1).astype(np.uint8)
    return BitStream.from_bits(bits, kind)


class AutocorrelationTests(SimpleTestCase):
    def test_counts_match_direct_products(self):
        x = random_stream(10_000, 1)
        bits = x.to_bits().astype(np.int64)
        expected = [int(np.sum(bits[:-k] * bits[k:])) for k in range(1, 71)]
        self.assertEqual(lag_product_counts(x, 70), expected)
        self.assertEqual(lag_product_counts(x, 70, workers=4, chunk_bits=128), expected)

    def test_estimator(self):
        x = random_stream(5000, 2)
        bits = x.to_bits().astype(float)
        results = autocorrelation(x, 3, chunk_bits=64)
        mean = bits.mean()
        for result in results:
            k = result.k
            self.assertAlmostEqual(result.gamma_hat, float(np.sum(bits[:-k] * bits[k:]) / (5000 - k) - mean ** 2))
            self.assertAlmostEqual(result.sigma_stat, 1.0 / (4.0 * np.sqrt(5000)))
            self.assertIsNone(result.bound)

    def test_biased_parity_stream_decays_as_a_power(self):
        raw = random_stream(400_000, 3, p1=0.25, kind=BitKind.RAW)
        results = autocorrelation(extract(raw), 4, bound_epsilon=0.5)
        for result in results:
            self.assertAlmostEqual(result.four_gamma, 0.5 ** result.k, delta=0.01)
            self.assertAlmostEqual(result.bound, 0.5 ** result.k / 4.0)

    def test_distillation_leaves_only_the_k_th_power(self):
        raw = random_stream(1_200_000, 4, p1=0.25, kind=BitKind.RAW)
        z = distill(extract(raw), 3)
        self.assertAlmostEqual(autocorrelation(z, 1)[0].four_gamma, 0.5 ** 3, delta=0.01)

    def test_too_short(self):
        with self.assertRaises(InsufficientDataError):
            autocorrelation(random_stream(100, 5), 10)
        with self.assertRaises(ConfigurationError):
            autocorrelation(random_stream(100, 5), 0)

    def test_bounds(self):
        self.assertAlmostEqual(gamma_bound(0.07, 3), 0.07 ** 3 / 4.0)
        for k in range(1, 8):
            self.assertAlmostEqual(gamma_bound_binomial(0.07, k), gamma_bound(0.07, k))
        with self.assertRaises(ConfigurationError):
            gamma_bound(1.5, 1)

    def test_csv_is_reproducible(self):
        x = random_stream(20_000, 6)
        with tempfile.TemporaryDirectory() as directory:
            first, second = Path(directory) / 'a.csv', Path(directory) / 'b.csv'
            write_autocorr_csv(autocorrelation(x, 10, 0.07), first, {'ordinary': 0.0758})
            write_autocorr_csv(autocorrelation(x, 10, 0.07, workers=3, chunk_bits=1024), second, {'ordinary': 0.0758})
            self.assertEqual(first.read_bytes(), second.read_bytes())
            lines = first.read_text().splitlines()
        self.assertEqual(lines[0], 'k,gamma_hat,four_gamma_hat,sigma_stat,bound,bound_ordinary')
        self.assertEqual(len(lines), 11)

    def test_unbiased_scores_are_standard_normal(self):
        streams = [random_stream(10_000, seed) for seed in range(100, 300)]
        self.assertGreater(gamma_distribution_check(streams, 1), 1e-3)
        with self.assertRaises(InsufficientDataError):
            gamma_distribution_check(streams[:10], 1)

    def test_three_sigma_excursions_are_rare(self):
        excursions = 0
        for seed in range(1000, 4000):
            result = autocorrelation(random_stream(2048, seed), 1)[0]
            excursions += abs(result.gamma_hat) > 3.0 * result.sigma_stat
        self.assertLessEqual(excursions / 3000, 0.006)

    def test_simulated_stream_respects_the_bias_bound(self):
        config = GeneratorConfig().with_simulation(
            n_pulses=2_000_000, rng_seed=21, bias_target=0.07, feedback_time_constant=0.1,
        )
        run = simulate(config)
        results = autocorrelation(run.extracted, 10, bound_epsilon=0.07)
        for result in results:
            self.assertLessEqual(abs(result.four_gamma), 0.07 ** result.k + 24.0 * result.sigma_stat, msg=result.k)
        # Excess ones in d flip the sign of the parity correlation.
        self.assertAlmostEqual(results[0].four_gamma, -0.07, delta=0.01)


class ReferenceVectorTests(SimpleTestCase):
    def test_monobit(self):
        self.assertAlmostEqual(monobit('1011010101'), 0.527089, places=6)

    def test_block_frequency(self):
        self.assertAlmostEqual(block_frequency('0110011010', block=3), 0.801252, places=6)

    def test_runs(self):
        self.assertAlmostEqual(runs('1001101011'), 0.147232, places=6)

    def test_runs_prerequisite(self):
        self.assertEqual(runs('1111111111'), 0.0)

    def test_runs_on_a_constant_stream(self):
        self.assertEqual(runs('0000000000'), 0.0)
        self.assertEqual(runs('0000'), 0.0)
        self.assertEqual(runs(np.ones(3, dtype=np.uint8)), 0.0)

    def test_serial(self):
        first, second = serial('0011011101', m=3)
        self.assertAlmostEqual(first, 0.808792, places=6)
        self.assertAlmostEqual(second, 0.670320, places=6)

    def test_longest_run(self):
        bits = np.frombuffer(LONGEST_RUN_VECTOR.encode(), dtype=np.uint8) - ord('0')
        self.assertEqual(bits.size, 128)
        longest = longest_runs_per_block(bits, 8)
        self.assertEqual(np.bincount(np.clip(longest, 1, 4) - 1, minlength=4).tolist(), [4, 9, 3, 0])
        self.assertLess(abs(longest_run(LONGEST_RUN_VECTOR) - 0.180609), 1e-4)

    def test_longest_run_needs_a_block(self):
        with self.assertRaises(InsufficientDataError):
            longest_run('1' * 100)

    def test_serial_block_length(self):
        with self.assertRaises(ConfigurationError):
            serial('0101', m=1)

    def test_inputs_may_be_streams(self):
        stream = BitStream.from_bits([1, 0, 1, 1, 0, 1, 0, 1, 0, 1])
        self.assertAlmostEqual(monobit(stream), 0.527089, places=6)


class ClassificationTests(SimpleTestCase):
    def test_classes(self):
        self.assertEqual(classify_p(0.5), PClass.PASS)
        self.assertEqual(classify_p(0.995), PClass.WEAK)
        self.assertEqual(classify_p(5e-3), PClass.WEAK)
        self.assertEqual(classify_p(1e-7), PClass.FAIL)
        self.assertEqual(classify_p(1e-20), PClass.EPS)
        self.assertEqual(classify_p(0.0), PClass.EPS2)
        self.assertTrue(PClass.EPS.failed)
        self.assertFalse(PClass.WEAK.failed)

    def test_failure_rates(self):
        ideal = [[TestOutcome('monobit', (i + 0.5) / 300)] for i in range(300)]
        rate = battery_failure_rates(ideal)[0]
        self.assertEqual(rate.not_passed, 6)
        self.assertAlmostEqual(rate.rate, 0.02)
        self.assertTrue(rate.consistent())
        broken = [[TestOutcome('monobit', 0.0)] for _ in range(300)]
        self.assertFalse(battery_failure_rates(broken)[0].consistent())
        with self.assertRaises(InsufficientDataError):
            battery_failure_rates([])


class BatteryTests(SimpleTestCase):
    def test_names_and_chunk_independence(self):
        x = random_stream(1_000_000, 7)
        whole = mini_battery(x)
        chunked = mini_battery(x, chunk_bits=1 << 12)
        self.assertEqual(
            [outcome.name for outcome in whole],
            ['monobit', 'block_frequency', 'runs', 'serial_1', 'serial_2', 'longest_run'],
        )
        for a, b in zip(whole, chunked):
            self.assertAlmostEqual(a.p_value, b.p_value, places=9)
        self.assertFalse(any(outcome.verdict.failed for outcome in whole))

    def test_needs_a_million_bits(self):
        with self.assertRaises(InsufficientDataError):
            mini_battery(random_stream(1000, 8))

    def test_p_values_are_uniform_over_many_runs(self):
        p_values = {}
        for seed in range(500, 800):
            for outcome in mini_battery(random_stream(100_000, seed), min_bits=100_000):
                p_values.setdefault(outcome.name, []).append(outcome.p_value)
        self.assertEqual(len(p_values), 6)
        for name, values in p_values.items():
            self.assertEqual(len(values), 300)
            self.assertGreater(kstest(values, 'uniform').pvalue, 1e-3, msg=name)

    def test_biased_raw_bits_fail_and_distillation_cures_them(self):
        raw = random_stream(3_000_000, 9, p1=0.535, kind=BitKind.RAW)
        raw_outcomes = {outcome.name: outcome for outcome in mini_battery(raw)}
        self.assertLess(min(raw_outcomes['monobit'].p_value, 1 - raw_outcomes['monobit'].p_value), 1e-6)
        x = extract(raw)
        # The parity stream is balanced but its transitions follow the raw bias.
        x_outcomes = {outcome.name: outcome for outcome in mini_battery(x)}
        self.assertTrue(x_outcomes['runs'].verdict.failed)
        z = distill(x, 3)
        self.assertFalse(any(outcome.verdict.failed for outcome in mini_battery(z)))


class ExportTests(SimpleTestCase):
    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.stream = BitStream.from_bits([1, 0, 0, 1, 1, 1, 0, 1, 0, 1], BitKind.DISTILLED, 4)

    def tearDown(self):
        self.directory.cleanup()

    def path(self, name):
        return Path(self.directory.name) / name

    def test_ascii(self):
        export(self.stream, 'ascii01', self.path('bits.txt'))
        self.assertEqual(self.path('bits.txt').read_text(), '1001110101')
        back = import_export(self.path('bits.txt'), 'ascii01', kind=BitKind.DISTILLED, k=4)
        self.assertEqual(back, self.stream)

    def test_rawbytes(self):
        export(self.stream, 'rawbytes', self.path('bits.bin'))
        self.assertEqual(self.path('bits.bin').read_bytes(), bytes([0b10111001, 0b10]))
        back = import_export(self.path('bits.bin'), 'rawbytes', length=10, kind=BitKind.DISTILLED, k=4)
        self.assertEqual(back, self.stream)

    def test_unknown_format(self):
        with self.assertRaises(ConfigurationError):
            export(self.stream, 'hex', self.path('bits.hex'))

    def test_ascii_with_other_characters(self):
        self.path('bad.txt').write_text('0120')
        with self.assertRaises(BitFileError):
            import_export(self.path('bad.txt'), 'ascii01')
