"""Two-point autocorrelation, a small randomness battery and bit exporters.

The autocorrelation works on packed words with integer counts, so it is exact
at any length and chunk-parallel runs merge bit-identically. Battery tests are
streaming accumulators fed with unpacked chunks; running a test on a short
array is the single-chunk case.
"""
import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy import special
from scipy.stats import binomtest, chisquare, norm

from .exceptions import BitFileError, ConfigurationError, InsufficientDataError
from .extractor import WORD_BITS, BitKind, BitStream

logger = logging.getLogger(__name__)

MIN_BATTERY_BITS = 1_000_000
BLOCK_FREQUENCY_SIZE = 128
SERIAL_BLOCK = 2
IDEAL_NOT_PASS_RATE = 0.02
EXPORT_FORMATS = ('ascii01', 'rawbytes')


# Autocorrelation

@dataclass(frozen=True)
class AutocorrResult:
    k: int
    gamma_hat: float
    sigma_stat: float
    n_bits: int
    bound: float | None = None

    @property
    def four_gamma(self):
        return 4.0 * self.gamma_hat


def _shift_down(words, k):
    """Packed stream whose bit i is bit i+k of ``words``; bits past the end read as zero."""
    q, r = divmod(k, WORD_BITS)
    src = np.zeros(words.size + 1, dtype=np.uint64)
    tail = words[q:]
    src[:tail.size] = tail
    if r == 0:
        return src[:words.size]
    return (src[:-1] >> np.uint64(r)) | (src[1:] << np.uint64(WORD_BITS - r))


def _lag_products(words, lo, hi, k_max):
    """sum_i x_i*x_{i+k} for i in words [lo, hi), k = 1..k_max, with look-ahead past ``hi``."""
    ahead = k_max // WORD_BITS + 1
    segment = words[lo:hi + ahead]
    body = segment[:hi - lo]
    return [int(np.bitwise_count(body & _shift_down(segment, k)[:hi - lo]).sum(dtype=np.int64))
            for k in range(1, k_max + 1)]


def lag_product_counts(x, k_max, workers=1, chunk_bits=1 << 22):
    """Exact integer counts of x_i*x_{i+k} for k = 1..k_max."""
    chunk_words = max(1, chunk_bits // WORD_BITS)
    bounds = [(lo, min(lo + chunk_words, x.words.size)) for lo in range(0, x.words.size, chunk_words)]
    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(lambda span: _lag_products(x.words, span[0], span[1], k_max), bounds))
    else:
        partials = [_lag_products(x.words, lo, hi, k_max) for lo, hi in bounds]
    return [sum(column) for column in zip(*partials)] if partials else [0] * k_max


def autocorrelation(x, k_max, bound_epsilon=None, workers=1, chunk_bits=1 << 22):
    """Gamma_hat(k) = sum x_i x_{i+k} / (N - k) - mean^2 for k = 1..k_max."""
    if k_max < 1:
        raise ConfigurationError("k_max must be at least 1")
    n = x.length
    if n <= 10 * k_max:
        raise InsufficientDataError(f"{n} bits is too short for lags up to {k_max}")
    ones = x.ones()
    products = lag_product_counts(x, k_max, workers, chunk_bits)
    mean = ones / n
    sigma_stat = 1.0 / (4.0 * math.sqrt(n))
    return [
        AutocorrResult(
            k=k,
            gamma_hat=count / (n - k) - mean * mean,
            sigma_stat=sigma_stat,
            n_bits=n,
            bound=gamma_bound(bound_epsilon, k) if bound_epsilon is not None else None,
        )
        for k, count in zip(range(1, k_max + 1), products)
    ]


def gamma_bound(epsilon_max, k):
    """Largest |Gamma_x(k)| allowed by per-bit predictability epsilon_max: epsilon_max^k / 4."""
    if not 0.0 <= epsilon_max <= 1.0:
        raise ConfigurationError("epsilon_max must lie in [0, 1]")
    return epsilon_max ** k / 4.0


def gamma_bound_binomial(epsilon, k):
    """The same bound summed over the even-count outcomes of k biased raw bits."""
    p, q = 0.5 * (1.0 - epsilon), 0.5 * (1.0 + epsilon)
    even = sum(math.comb(k, 2 * j) * p ** (2 * j) * q ** (k - 2 * j) for j in range(k // 2 + 1))
    return (2.0 * even - 1.0) / 4.0


def gamma_distribution_check(streams, k, n_bins=10):
    """Pearson chi^2 p-value of the per-run 4*Gamma_hat(k) against N(0, (4 sigma_stat)^2)."""
    streams = list(streams)
    if len(streams) < 100:
        raise InsufficientDataError(f"{len(streams)} runs given, at least 100 needed")
    scores = []
    for stream in streams:
        result = autocorrelation(stream, k)[k - 1]
        scores.append(result.gamma_hat / result.sigma_stat)
    inner_edges = norm.ppf(np.linspace(0.0, 1.0, n_bins + 1)[1:-1])
    observed = np.bincount(np.searchsorted(inner_edges, scores, side='right'), minlength=n_bins)
    expected = np.full(n_bins, len(scores) / n_bins)
    return float(chisquare(observed, expected).pvalue)


def write_autocorr_csv(results, path, level_bounds=None):
    """CSV rows (k, gamma_hat, 4*gamma_hat, sigma_stat, bound[, bound_<level>...])."""
    level_bounds = dict(level_bounds or {})
    with Path(path).open('w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle)
        writer.writerow(['k', 'gamma_hat', 'four_gamma_hat', 'sigma_stat', 'bound']
                        + [f'bound_{level}' for level in level_bounds])
        for result in results:
            writer.writerow(
                [result.k, repr(result.gamma_hat), repr(result.four_gamma), repr(result.sigma_stat),
                 '' if result.bound is None else repr(result.bound)]
                + [repr(eps ** result.k) for eps in level_bounds.values()]
            )


# Battery

class PClass(str, Enum):
    """Classes of Delta(p) = min(p, 1 - p)."""

    PASS = 'pass'
    WEAK = 'weak'
    FAIL = 'fail'
    EPS = 'eps'
    EPS2 = 'eps2'

    @property
    def failed(self):
        return self in (PClass.FAIL, PClass.EPS, PClass.EPS2)


def classify_p(p_value):
    delta = min(p_value, 1.0 - p_value)
    if delta >= 1e-2:
        return PClass.PASS
    if delta >= 1e-6:
        return PClass.WEAK
    if delta >= 1e-15:
        return PClass.FAIL
    if delta >= 1e-300:
        return PClass.EPS
    return PClass.EPS2


class Monobit:
    name = 'monobit'

    def __init__(self):
        self.n = 0
        self.ones = 0

    def update(self, bits):
        self.n += bits.size
        self.ones += int(np.count_nonzero(bits))

    def p_value(self):
        s = abs(2 * self.ones - self.n)
        return float(math.erfc(s / math.sqrt(2.0 * self.n)))


class BlockFrequency:
    name = 'block_frequency'

    def __init__(self, block=BLOCK_FREQUENCY_SIZE):
        self.block = block
        self.carry = np.zeros(0, dtype=np.uint8)
        self.blocks = 0
        self.chi2 = 0.0

    def update(self, bits):
        bits = np.concatenate([self.carry, bits])
        usable = bits.size - bits.size % self.block
        if usable:
            fractions = bits[:usable].reshape(-1, self.block).sum(axis=1) / self.block
            self.chi2 += float(np.sum((fractions - 0.5) ** 2))
            self.blocks += usable // self.block
        self.carry = bits[usable:]

    def p_value(self):
        if not self.blocks:
            raise InsufficientDataError("no complete block")
        return float(special.gammaincc(self.blocks / 2.0, 2.0 * self.block * self.chi2))


class Runs:
    name = 'runs'

    def __init__(self):
        self.n = 0
        self.ones = 0
        self.transitions = 0
        self.last = None

    def update(self, bits):
        if not bits.size:
            return
        self.n += bits.size
        self.ones += int(np.count_nonzero(bits))
        self.transitions += int(np.count_nonzero(np.diff(bits)))
        if self.last is not None and bits[0] != self.last:
            self.transitions += 1
        self.last = bits[-1]

    def p_value(self):
        pi = self.ones / self.n
        if pi in (0.0, 1.0) or abs(pi - 0.5) >= 2.0 / math.sqrt(self.n):
            return 0.0
        runs = self.transitions + 1
        spread = 2.0 * pi * (1.0 - pi)
        return float(math.erfc(abs(runs - self.n * spread) / (spread * math.sqrt(2.0 * self.n))))


def _pattern_counts(bits, m):
    """Counts of every overlapping m-bit window of ``bits``."""
    windows = bits.size - m + 1
    if windows <= 0:
        return np.zeros(1 << m, dtype=np.int64)
    index = np.zeros(windows, dtype=np.int64)
    for j in range(m):
        index = (index << 1) | bits[j:j + windows]
    return np.bincount(index, minlength=1 << m)


class Serial:
    """Serial test with cyclic wrap; two p-values."""

    name = 'serial'

    def __init__(self, m=SERIAL_BLOCK):
        if m < 2:
            raise ConfigurationError("serial block length must be at least 2")
        self.m = m
        self.n = 0
        self.head = np.zeros(0, dtype=np.uint8)
        self.tail = np.zeros(0, dtype=np.uint8)
        self.counts = np.zeros(1 << m, dtype=np.int64)

    def update(self, bits):
        bits = np.asarray(bits, dtype=np.uint8)
        if self.head.size < self.m - 1:
            self.head = np.concatenate([self.head, bits[:self.m - 1 - self.head.size]])
        joined = np.concatenate([self.tail, bits])
        self.counts += _pattern_counts(joined, self.m)
        self.tail = joined[-(self.m - 1):]
        self.n += bits.size

    def _psi2(self, counts, length):
        if length == 0:
            return 0.0
        return float((1 << length) / self.n * np.sum(counts.astype(float) ** 2) - self.n)

    def p_values(self):
        counts = self.counts + _pattern_counts(np.concatenate([self.tail, self.head]), self.m)
        # Cyclic windows: shorter patterns are marginals of the m-bit counts.
        shorter = counts.reshape(-1, 2).sum(axis=1)
        shortest = shorter.reshape(-1, 2).sum(axis=1) if self.m > 2 else np.array([self.n])
        psi_m = self._psi2(counts, self.m)
        psi_m1 = self._psi2(shorter, self.m - 1)
        psi_m2 = self._psi2(shortest, self.m - 2)
        first = psi_m - psi_m1
        second = psi_m - 2.0 * psi_m1 + psi_m2
        return (
            float(special.gammaincc(2.0 ** (self.m - 2), first / 2.0)),
            float(special.gammaincc(2.0 ** (self.m - 3), second / 2.0)),
        )


# (block length, run-length categories (low, high), category probabilities)
LONGEST_RUN_TABLES = (
    (750_000, 10_000, (10, 16), (0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727)),
    (6_272, 128, (4, 9), (0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124)),
    (128, 8, (1, 4), (0.2148, 0.3672, 0.2305, 0.1875)),
)


def longest_runs_per_block(bits, block):
    """Longest run of ones in each complete ``block``-bit block."""
    rows = bits.size // block
    if not rows:
        return np.zeros(0, dtype=np.int64)
    padded = np.zeros((rows, block + 2), dtype=np.uint8)
    padded[:, 1:-1] = bits[:rows * block].reshape(rows, block)
    zeros = np.flatnonzero(padded.ravel() == 0)
    gaps = np.diff(zeros) - 1
    longest = np.zeros(rows, dtype=np.int64)
    np.maximum.at(longest, zeros[:-1] // (block + 2), gaps)
    return longest


class LongestRun:
    name = 'longest_run'

    def __init__(self, n_bits):
        for minimum, block, categories, probabilities in LONGEST_RUN_TABLES:
            if n_bits >= minimum:
                break
        else:
            raise InsufficientDataError(f"longest-run test needs at least 128 bits, got {n_bits}")
        self.block = block
        self.low, self.high = categories
        self.probabilities = np.array(probabilities)
        self.carry = np.zeros(0, dtype=np.uint8)
        self.nu = np.zeros(len(probabilities), dtype=np.int64)

    def update(self, bits):
        bits = np.concatenate([self.carry, bits])
        longest = longest_runs_per_block(bits, self.block)
        category = np.clip(longest, self.low, self.high) - self.low
        self.nu += np.bincount(category, minlength=self.nu.size)
        self.carry = bits[longest.size * self.block:]

    def p_value(self):
        blocks = int(self.nu.sum())
        expected = blocks * self.probabilities
        chi2 = float(np.sum((self.nu - expected) ** 2 / expected))
        return float(special.gammaincc((self.nu.size - 1) / 2.0, chi2 / 2.0))


def _as_bits(bits):
    if isinstance(bits, BitStream):
        return bits.to_bits()
    if isinstance(bits, str):
        return np.frombuffer(bits.encode('ascii'), dtype=np.uint8) - ord('0')
    return np.asarray(bits, dtype=np.uint8)


def _run_single(accumulator, bits):
    accumulator.update(_as_bits(bits))
    return accumulator


def monobit(bits):
    return _run_single(Monobit(), bits).p_value()


def block_frequency(bits, block=BLOCK_FREQUENCY_SIZE):
    return _run_single(BlockFrequency(block), bits).p_value()


def runs(bits):
    return _run_single(Runs(), bits).p_value()


def serial(bits, m=SERIAL_BLOCK):
    return _run_single(Serial(m), bits).p_values()


def longest_run(bits):
    bits = _as_bits(bits)
    return _run_single(LongestRun(bits.size), bits).p_value()


@dataclass(frozen=True)
class TestOutcome:
    name: str
    p_value: float

    @property
    def verdict(self):
        return classify_p(self.p_value)


def mini_battery(x, chunk_bits=1 << 22, min_bits=MIN_BATTERY_BITS):
    """Monobit, block-frequency, runs, serial-2 and longest-run over one streaming pass."""
    if x.length < min_bits:
        raise InsufficientDataError(f"battery needs at least {min_bits} bits, got {x.length}")
    monobit_test, block_test, runs_test = Monobit(), BlockFrequency(), Runs()
    serial_test, longest_test = Serial(), LongestRun(x.length)
    accumulators = (monobit_test, block_test, runs_test, serial_test, longest_test)
    for chunk in x.iter_chunks(chunk_bits - chunk_bits % WORD_BITS):
        for accumulator in accumulators:
            accumulator.update(chunk)
    serial_first, serial_second = serial_test.p_values()
    return [
        TestOutcome('monobit', monobit_test.p_value()),
        TestOutcome('block_frequency', block_test.p_value()),
        TestOutcome('runs', runs_test.p_value()),
        TestOutcome('serial_1', serial_first),
        TestOutcome('serial_2', serial_second),
        TestOutcome('longest_run', longest_test.p_value()),
    ]


@dataclass(frozen=True)
class FailureRate:
    test: str
    not_passed: int
    runs: int
    p_value: float

    @property
    def rate(self):
        return self.not_passed / self.runs

    def consistent(self, alpha=1e-3):
        return self.p_value >= alpha


def battery_failure_rates(battery_runs, ideal_rate=IDEAL_NOT_PASS_RATE):
    """Per-test share of non-pass verdicts over many runs, binomial-tested against the ideal rate."""
    battery_runs = list(battery_runs)
    if not battery_runs:
        raise InsufficientDataError("no battery runs given")
    names = [outcome.name for outcome in battery_runs[0]]
    rates = []
    for position, name in enumerate(names):
        not_passed = sum(run[position].verdict != PClass.PASS for run in battery_runs)
        result = binomtest(not_passed, len(battery_runs), ideal_rate)
        rates.append(FailureRate(name, not_passed, len(battery_runs), float(result.pvalue)))
    return rates


# Export

def export(x, fmt, path, chunk_bits=1 << 22):
    """Write bits as ASCII '0'/'1' characters or as raw LSB-first bytes, no header."""
    if fmt not in EXPORT_FORMATS:
        raise ConfigurationError(f"unknown export format {fmt!r}; choose from {', '.join(EXPORT_FORMATS)}")
    with Path(path).open('wb') as handle:
        if fmt == 'rawbytes':
            handle.write(x.to_bytes())
            return
        for chunk in x.iter_chunks(chunk_bits - chunk_bits % WORD_BITS):
            handle.write((chunk + ord('0')).astype(np.uint8).tobytes())


def import_export(path, fmt, length=None, kind=BitKind.RAW, k=1):
    """Read back a file written by ``export``."""
    data = Path(path).read_bytes()
    if fmt == 'rawbytes':
        return BitStream.from_bytes(data, length, kind, k)
    if fmt != 'ascii01':
        raise ConfigurationError(f"unknown export format {fmt!r}")
    bits = np.frombuffer(data, dtype=np.uint8) - ord('0')
    if bits.size and bits.max() > 1:
        raise BitFileError(f"{path}: ascii01 file holds characters other than '0' and '1'")
    if length is not None:
        bits = bits[:length]
    return BitStream.from_bits(bits, kind, k)
