"""One-bit digitization against a noisy, feedback-controlled reference.

d_i = 1 iff v(t_i) > v_ref(t_i), with v_ref = v_ref_mean + N(0, sigma_ref)
drawn independently per pulse. A single-pole integrator moves v_ref_mean by
g*(d - target) so that <d> settles at the target; excess ones raise the
reference and lower P(d=1).
"""
import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize, stats

from .exceptions import ConfigurationError, FitConvergenceError, InsufficientDataError
from .extractor import BitKind, BitStream
from .metrology import deembed_sigma
from .photonics import PulseTrain, simulate_pulse_train

logger = logging.getLogger(__name__)

MIN_TRANSITION_EVENTS = 100_000


@dataclass
class ComparatorState:
    v_ref_mean: float
    sigma_ref: float
    integrator_state: float = 0.0
    # ms
    time_constant: float = 1.0
    # Mbps
    pulse_rate: float = 200.0
    # Half swing of the signal seen by the loop, sets the gain.
    half_swing: float = 483.0
    target: float = 0.5
    feedback: bool = True
    # Pulses per integrator update.
    block: int = 1
    pending_count: int = field(default=0, repr=False)
    pending_ones: int = field(default=0, repr=False)

    def __post_init__(self):
        errors = []
        if self.sigma_ref < 0:
            errors.append("sigma_ref < 0")
        if self.time_constant <= 0:
            errors.append("time_constant <= 0")
        if self.block < 1:
            errors.append("block < 1")
        if not 0.0 < self.target < 1.0:
            errors.append("target outside (0, 1)")
        if errors:
            raise ConfigurationError("invalid comparator state", errors)

    @classmethod
    def for_config(cls, config):
        """Start-up state for a ``GeneratorConfig``: centred on the analog distribution plus the offset."""
        simulation, noise, comparator = config.simulation, config.noise, config.comparator
        state = cls(
            v_ref_mean=noise.mean_vS + noise.mean_vL + comparator.v_ref_offset,
            sigma_ref=noise.sigma_vRef,
            time_constant=simulation.feedback_time_constant,
            pulse_rate=simulation.pulse_rate,
            half_swing=noise.half_swing_dvphi,
            target=simulation.target_mean,
            feedback=comparator.feedback,
            block=comparator.feedback_block,
        )
        logger.debug(
            "comparator loop: gain %.3g mV/pulse, %d pulses per time constant, block %d",
            state.gain, state.pulses_per_time_constant, state.block,
        )
        return state

    @property
    def pulses_per_time_constant(self):
        return self.pulse_rate * self.time_constant * 1e3

    @property
    def gain(self):
        # Near balance P(d=1) changes by 1/(pi*half_swing) per mV of reference.
        return math.pi * self.half_swing / self.pulses_per_time_constant

    def _close_block(self):
        step = self.gain * (self.pending_ones - self.target * self.pending_count)
        self.integrator_state += step
        self.v_ref_mean += step
        self.pending_count = 0
        self.pending_ones = 0


def _voltages(samples):
    if isinstance(samples, PulseTrain):
        return samples.v
    if isinstance(samples, np.ndarray):
        return samples.astype(float, copy=False)
    return np.array([sample.v for sample in samples], dtype=float)


def decision_levels(v, sigma_ref, reference_noise):
    """Voltages less the reference noise: v > v_ref_mean + n  <=>  v - n > v_ref_mean."""
    return np.asarray(v, dtype=float) - sigma_ref * reference_noise


def digitize_voltages(v, comp, rng):
    """0/1 decisions for voltages ``v``; advances ``comp`` in place."""
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        raise ConfigurationError("digitize needs at least one sample")
    return decide(decision_levels(v, comp.sigma_ref, rng.standard_normal(v.size)), comp)


def decide(effective, comp):
    """Decisions for noise-shifted voltages against the reference level, running the feedback loop."""
    if not comp.feedback:
        return (effective > comp.v_ref_mean).astype(np.uint8)
    bits = np.empty(effective.size, dtype=np.uint8)
    position = 0
    while position < effective.size:
        take = min(comp.block - comp.pending_count, effective.size - position)
        window = slice(position, position + take)
        decided = effective[window] > comp.v_ref_mean
        bits[window] = decided
        comp.pending_ones += int(np.count_nonzero(decided))
        comp.pending_count += take
        if comp.pending_count == comp.block:
            comp._close_block()
        position += take
    return bits


def digitize(samples, comp, rng):
    """Raw bits d for a pulse train, a sequence of ``PulseSample`` or an array of voltages."""
    return BitStream.from_bits(digitize_voltages(_voltages(samples), comp, rng), BitKind.RAW)


def scope_copy(v, sigma, rng):
    """The analog signal as recorded through a splitter that adds Gaussian noise."""
    v = np.asarray(v, dtype=float)
    if sigma <= 0:
        return v.copy()
    return v + rng.normal(0.0, sigma, v.size)


@dataclass(frozen=True)
class TransitionCurve:
    v_bin: np.ndarray
    n0: np.ndarray
    n1: np.ndarray

    @property
    def counts(self):
        return self.n0 + self.n1

    @property
    def p1(self):
        counts = self.counts
        return np.divide(self.n1, counts, out=np.zeros(counts.shape), where=counts > 0)

    def wilson_sigma(self, z=1.0):
        """Half-width of the Wilson score interval per bin."""
        counts = self.counts.astype(float)
        centre = (self.n1 + 0.5 * z ** 2) / (counts + z ** 2)
        return z * np.sqrt(centre * (1.0 - centre) / (counts + z ** 2))

    def isotonic(self):
        populated = self.counts > 0
        result = optimize.isotonic_regression(self.p1[populated], weights=self.counts[populated])
        return result.x

    def is_monotone(self, n_sigma=4.0):
        """Binned frequencies agree with a nondecreasing curve within ``n_sigma`` Wilson widths."""
        populated = self.counts > 0
        deviation = np.abs(self.p1[populated] - self.isotonic())
        return bool(np.all(deviation <= n_sigma * self.wilson_sigma()[populated] + 1e-12))

    def to_csv(self, path):
        with Path(path).open('w', newline='', encoding='utf-8') as handle:
            writer = csv.writer(handle)
            writer.writerow(('v_bin', 'n0', 'n1', 'p1'))
            for v_bin, n0, n1, p1 in zip(self.v_bin, self.n0, self.n1, self.p1):
                writer.writerow((f'{v_bin:.6g}', int(n0), int(n1), f'{p1:.9g}'))


def transition_curve(v, bits, bin_width=1.0):
    v = np.asarray(v, dtype=float)
    bits = np.asarray(bits, dtype=np.uint8)
    if v.shape != bits.shape:
        raise ConfigurationError("samples and bits must be index-aligned")
    start = math.floor(v.min() / bin_width) * bin_width
    edges = np.arange(start, v.max() + 2 * bin_width, bin_width)
    total, _ = np.histogram(v, bins=edges)
    ones, _ = np.histogram(v[bits == 1], bins=edges)
    return TransitionCurve(v_bin=0.5 * (edges[:-1] + edges[1:]), n0=total - ones, n1=ones)


@dataclass(frozen=True)
class TransitionFit:
    sigma: float
    raw_sigma: float
    center: float
    curve: TransitionCurve
    residuals: np.ndarray
    step_limited: bool = False


def _gaussian_cdf(v, center, sigma):
    return stats.norm.cdf((v - center) / abs(sigma))


def estimate_transition_width(v, bits, splitter_noise_sigma=0.0, bin_width=1.0,
                              min_events=MIN_TRANSITION_EVENTS):
    """Comparator transition width from aligned analog samples and bits.

    Fits a Gaussian CDF to the binned P(d=1 | v) with Wilson weights, then
    removes ``splitter_noise_sigma`` in quadrature. The bin-width blur
    (``bin_width**2 / 12``) stays in ``sigma``.
    """
    curve = transition_curve(v, bits, bin_width)
    p1 = curve.p1
    counts = curve.counts
    mixed = (counts > 0) & (p1 > 0.0) & (p1 < 1.0)
    if mixed.sum() < 2:
        # Every bin is all zeros or all ones: a step narrower than a bin.
        ones_start = curve.v_bin[np.argmax((counts > 0) & (p1 > 0.5))]
        width = bin_width / math.sqrt(12.0)
        logger.info("transition narrower than the %.3g mV bin; reporting the step limit", bin_width)
        return TransitionFit(width, width, float(ones_start - 0.5 * bin_width), curve, np.zeros(0), True)
    low, high = curve.v_bin[mixed].min(), curve.v_bin[mixed].max()
    in_region = (np.asarray(v) >= low - bin_width) & (np.asarray(v) <= high + bin_width)
    if int(in_region.sum()) < min_events:
        raise InsufficientDataError(
            f"{int(in_region.sum())} events in the transition region, at least {min_events} needed"
        )
    window = (counts > 0) & (curve.v_bin >= low - 5 * bin_width) & (curve.v_bin <= high + 5 * bin_width)
    x, y, weights = curve.v_bin[window], p1[window], curve.wilson_sigma()[window]
    start = (float(np.interp(0.5, np.maximum.accumulate(y), x)), max(0.25 * (high - low), bin_width))
    try:
        params, _ = optimize.curve_fit(_gaussian_cdf, x, y, p0=start, sigma=weights, maxfev=5000)
    except RuntimeError as exc:
        residuals = y - _gaussian_cdf(x, *start)
        raise FitConvergenceError(f"transition fit did not converge: {exc}", residuals) from exc
    center, raw_sigma = float(params[0]), abs(float(params[1]))
    residuals = y - _gaussian_cdf(x, center, raw_sigma)
    sigma = deembed_sigma(raw_sigma, [splitter_noise_sigma]) if splitter_noise_sigma else raw_sigma
    return TransitionFit(sigma, raw_sigma, center, curve, residuals)


def measure_transition(config, n_pulses, rng, splitter_noise_sigma=0.0, bin_width=1.0):
    """Comparator x-y measurement on a simulated train.

    The analog samples are recorded through a splitter adding
    ``splitter_noise_sigma`` against the bits they produced; the reference
    stays at its start-up level for the whole record.
    """
    comp = ComparatorState.for_config(config)
    comp.feedback = False
    train = simulate_pulse_train(config.simulation, config.noise, rng, process=config.phase_process,
                                 n_pulses=n_pulses)
    bits = digitize_voltages(train.v, comp, rng)
    recorded = scope_copy(train.v, splitter_noise_sigma, rng)
    return estimate_transition_width(recorded, bits, splitter_noise_sigma, bin_width)
