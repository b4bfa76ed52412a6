"""Heterodyne phase-diffusion analysis.

A beat note between a local oscillator of amplitude A and the field E(t) is
measured as v(t) = |A + dA + E(t) e^{-i W t} / 2|^2. Dropping the terms of
second order in dA and E leaves

    v(t) - A^2 = 2 dA + A (cos Wt Re E + sin Wt Im E),

which is linear in the state (dA, Re E, Im E) and is tracked with a Kalman
filter and Rauch-Tung-Striebel smoother. The smoothed field gives the phase
dispersion per amplitude bin and its power-law scaling. Amplitudes are in
units of A; times in nanoseconds.
"""
import csv
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from filterpy.kalman import KalmanFilter
from scipy import signal

from .exceptions import ConfigurationError, CovarianceError, InsufficientDataError

logger = logging.getLogger(__name__)

DEFAULT_SAMPLE_RATE = 20.0
DEFAULT_OMEGA = 2.0 * math.pi * 3.0
DEFAULT_DT_PS = 50.0
MIN_SAMPLES = 1000
MIN_PAIRS = 100
MIN_FIT_BINS = 4
# A bin saturates when its mean resultant is within this many of its 1/sqrt(pairs) floor.
SATURATION_FLOOR = 3.0


@dataclass(frozen=True)
class DriftParams:
    """Amplitude drift: relaxation rate (1/ns) toward the equilibrium amplitude.

    An equilibrium amplitude of 0 is the below-threshold case, a complex
    Ornstein-Uhlenbeck process about zero.
    """

    damping: float = 0.0
    equilibrium_amplitude: float = 0.0


@dataclass(frozen=True)
class HeterodyneTrace:
    samples: np.ndarray
    # GSa/s
    sample_rate: float = DEFAULT_SAMPLE_RATE
    # rad/ns
    omega: float = DEFAULT_OMEGA
    lo_amplitude: float = 1.0
    baseline: float | None = None

    def __post_init__(self):
        if self.sample_rate <= 2.0 * self.omega / (2.0 * math.pi):
            raise ConfigurationError(
                f"sample rate {self.sample_rate} GSa/s cannot resolve a {self.omega / (2 * math.pi):.3g} GHz beat"
            )

    def __len__(self):
        return self.samples.size

    @property
    def dt(self):
        return 1.0 / self.sample_rate

    @property
    def times(self):
        return np.arange(self.samples.size) * self.dt

    @property
    def offset(self):
        return self.lo_amplitude ** 2 if self.baseline is None else self.baseline

    def scaled(self, factor):
        """The trace with its signal about the baseline multiplied by ``factor``."""
        samples = self.offset + factor * (self.samples - self.offset)
        return HeterodyneTrace(samples, self.sample_rate, self.omega, self.lo_amplitude, self.baseline)

    def measurement_rows(self):
        """Time-varying measurement row (2, A cos Wt, A sin Wt) per sample."""
        phase = self.omega * self.times
        rows = np.empty((self.samples.size, 1, 3))
        rows[:, 0, 0] = 2.0
        rows[:, 0, 1] = self.lo_amplitude * np.cos(phase)
        rows[:, 0, 2] = self.lo_amplitude * np.sin(phase)
        return rows


@dataclass(frozen=True)
class FieldEstimate:
    delta_a: np.ndarray
    re: np.ndarray
    im: np.ndarray
    variances: np.ndarray | None = None
    sample_rate: float = DEFAULT_SAMPLE_RATE
    # Posterior E|e_{t+1} - e_t|^2 of the field error, summed over both quadratures.
    increment_variances: np.ndarray | None = None

    @property
    def field(self):
        return self.re + 1j * self.im

    @property
    def amplitude(self):
        return np.hypot(self.re, self.im)

    @property
    def phase(self):
        return np.arctan2(self.im, self.re)

    def __len__(self):
        return self.re.size

    def rms_error(self, truth, skip=0):
        """rms distance between the estimated and true field, ignoring the first ``skip`` samples."""
        return float(np.sqrt(np.mean(np.abs(self.field[skip:] - truth.field[skip:]) ** 2)))


# Synthesis

def _field_path(diffusion_coefficient, drift, n, dt, rng, initial):
    kicks = math.sqrt(diffusion_coefficient * dt) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    kicks[0] = 0.0
    if drift.equilibrium_amplitude == 0:
        # Linear in E: E_{j+1} = (1 - g dt) E_j + kick_j
        decay = 1.0 - drift.damping * dt
        field, _ = signal.lfilter([1.0], [1.0, -decay], kicks, zi=np.array([initial], dtype=complex))
        return field
    field = np.empty(n, dtype=complex)
    current = complex(initial)
    for j in range(n):
        size = abs(current)
        if size > 0:
            current += drift.damping * (drift.equilibrium_amplitude - size) * dt * current / size
        current += kicks[j]
        field[j] = current
    return field


def _stationary_amplitude(diffusion_coefficient, drift):
    if drift.equilibrium_amplitude > 0:
        return drift.equilibrium_amplitude
    if drift.damping > 0:
        return math.sqrt(diffusion_coefficient / drift.damping)
    return 0.0


def measure_field(field, rng, noise_sigma=0.0, delta_a=None, sample_rate=DEFAULT_SAMPLE_RATE,
                  omega=DEFAULT_OMEGA, lo_amplitude=1.0):
    """Beat-note samples of ``field``, including the terms the filter model drops."""
    n = field.size
    delta_a = np.zeros(n) if delta_a is None else delta_a
    beat = field * np.exp(-1j * omega * np.arange(n) / sample_rate)
    samples = np.abs(lo_amplitude + delta_a + 0.5 * beat) ** 2
    if noise_sigma > 0:
        samples = samples + rng.normal(0.0, noise_sigma, n)
    return HeterodyneTrace(samples, sample_rate, omega, lo_amplitude)


def synthesize_trace(diffusion_coefficient, drift_params, noise_sigma, n_samples, rng, *,
                     sample_rate=DEFAULT_SAMPLE_RATE, omega=DEFAULT_OMEGA, lo_amplitude=1.0,
                     global_phase=0.0, initial_field=None, lo_sigma=0.0):
    """A beat-note trace and the true field behind it.

    The field takes equal, independent kicks in both quadratures (diffusion
    coefficient per quadrature, per ns) and drifts per ``drift_params``. With
    ``lo_sigma`` the oscillator amplitude wanders as a random walk.
    """
    if n_samples < MIN_SAMPLES:
        raise ConfigurationError(f"n_samples must be at least {MIN_SAMPLES}")
    if diffusion_coefficient < 0:
        raise ConfigurationError("diffusion_coefficient must be non-negative")
    dt = 1.0 / sample_rate
    if initial_field is None:
        initial_field = _stationary_amplitude(diffusion_coefficient, drift_params)
    field = _field_path(diffusion_coefficient, drift_params, n_samples, dt, rng, initial_field)
    field = field * np.exp(1j * global_phase)
    delta_a = np.cumsum(rng.normal(0.0, lo_sigma * math.sqrt(dt), n_samples)) if lo_sigma > 0 else np.zeros(n_samples)
    trace = measure_field(field, rng, noise_sigma, delta_a, sample_rate, omega, lo_amplitude)
    truth = FieldEstimate(delta_a, field.real.copy(), field.imag.copy(), None, sample_rate)
    return trace, truth


def synthesize_scaled_phase_field(exponent, strength, drift_params, n_samples, rng, *,
                                  sample_rate=DEFAULT_SAMPLE_RATE, reference_amplitude=None):
    """A field whose per-sample phase kicks scale as |E|^exponent.

    Exponent -1 mimics spontaneous emission, 0 an amplitude-independent
    (refractive-index-like) noise and +1 a fluctuating nonlinearity. The
    amplitude follows the drift process; ``strength`` is the rms phase kick
    at ``reference_amplitude``. The kick from sample j to j+1 is scaled by
    the amplitude at j.
    """
    dt = 1.0 / sample_rate
    amplitude_path = np.abs(_field_path(1.0, drift_params, n_samples, dt, rng, _stationary_amplitude(1.0, drift_params)))
    reference = reference_amplitude or float(np.median(amplitude_path))
    scale = np.power(np.maximum(amplitude_path, 1e-12) / reference, exponent)
    kicks = strength * scale * rng.standard_normal(n_samples)
    phase = np.concatenate(([0.0], np.cumsum(kicks[:-1])))
    field = amplitude_path * np.exp(1j * phase)
    return FieldEstimate(np.zeros(n_samples), field.real.copy(), field.imag.copy(), None, sample_rate)


# Filtering

def _as_triplet(value):
    values = np.broadcast_to(np.asarray(value, dtype=float), (3,))
    return values.copy()


def _filter(trace, process_noise, measurement_noise, prior_variance):
    """Kalman filter over (dA, Re E, Im E) with random-walk dynamics.

    ``process_noise`` is the per-sample rms step of each state (scalar or
    triplet), ``measurement_noise`` the rms measurement noise.
    """
    if measurement_noise <= 0:
        raise ConfigurationError("measurement_noise must be positive")
    kf = KalmanFilter(dim_x=3, dim_z=1)
    kf.x = np.zeros((3, 1))
    kf.F = np.eye(3)
    kf.P = np.diag(_as_triplet(prior_variance))
    kf.Q = np.diag(_as_triplet(process_noise) ** 2)
    kf.R = np.array([[measurement_noise ** 2]])
    rows = trace.measurement_rows()
    zs = trace.samples - trace.offset
    means, covariances, _, _ = kf.batch_filter(zs, Hs=list(rows))
    return kf, means, covariances


def _check_covariances(covariances, stage):
    symmetric = 0.5 * (covariances + np.swapaxes(covariances, 1, 2))
    try:
        np.linalg.cholesky(symmetric)
    except np.linalg.LinAlgError as exc:
        raise CovarianceError(f"{stage} covariance lost positive-definiteness") from exc
    return symmetric


def _estimate(means, covariances, sample_rate, increment_variances=None):
    states = means.reshape(-1, 3)
    variances = np.diagonal(covariances, axis1=1, axis2=2).copy()
    return FieldEstimate(states[:, 0].copy(), states[:, 1].copy(), states[:, 2].copy(), variances, sample_rate,
                         increment_variances)


def _field_increment_variances(covariances, gains):
    """E|e_{t+1} - e_t|^2 over the field quadratures from smoothed covariances.

    The lag-one error covariance of the smoother is G_t P_{t+1}, with G_t the
    smoother gain.
    """
    cross = np.einsum('nij,njk->nik', gains[:-1], covariances[1:])
    quadratures = [1, 2]
    own = covariances[:, quadratures, quadratures].sum(axis=1)
    return own[:-1] + own[1:] - 2.0 * cross[:, quadratures, quadratures].sum(axis=1)


def kalman_filter(trace, process_noise, measurement_noise, prior_variance=1.0):
    """Forward-only estimate."""
    _, means, covariances = _filter(trace, process_noise, measurement_noise, prior_variance)
    return _estimate(means, _check_covariances(covariances, "filter"), trace.sample_rate)


def rts_smooth(trace, process_noise, measurement_noise, prior_variance=1.0):
    """Forward Kalman filter followed by the backward Rauch-Tung-Striebel pass."""
    kf, means, covariances = _filter(trace, process_noise, measurement_noise, prior_variance)
    covariances = _check_covariances(covariances, "filter")
    smoothed, smoothed_cov, gains, _ = kf.rts_smoother(means, covariances)
    smoothed_cov = _check_covariances(smoothed_cov, "smoother")
    increments = _field_increment_variances(smoothed_cov, gains)
    return _estimate(smoothed, smoothed_cov, trace.sample_rate, increments)


def estimate_diffusion(est, skip=0):
    """Per-quadrature diffusion coefficient from the mean squared field step.

    E|E_{t+1} - E_t|^2 = 2 D dt; a smoothed estimate adds back the error of
    its increments from ``increment_variances``. ``skip`` samples are
    dropped at both ends.
    """
    field = est.field
    stop = field.size - skip
    if stop - skip < 2:
        raise InsufficientDataError(f"{field.size} samples leave nothing after skipping {skip} at each end")
    steps = np.abs(np.diff(field[skip:stop])) ** 2
    if est.increment_variances is not None:
        steps = steps + est.increment_variances[skip:stop - 1]
    return float(steps.mean() * est.sample_rate / 2.0)


# Dispersion and scaling

@dataclass(frozen=True)
class DispersionBin:
    low: float
    high: float
    amplitude: float
    dphi_rms: float
    pairs: int
    valid: bool = True
    saturated: bool = False


def mean_resultant(delta_phi):
    return float(abs(np.mean(np.exp(1j * np.asarray(delta_phi)))))


def _holevo_from_resultant(resultant):
    if resultant < 1e-12:
        return math.inf
    return math.sqrt(max(resultant ** -2 - 1.0, 0.0))


def holevo_rms(delta_phi):
    """sqrt(|<exp(i dphi)>|^-2 - 1); infinite when the mean resultant vanishes."""
    return _holevo_from_resultant(mean_resultant(delta_phi))


def _lag_samples(dt_ps, sample_rate):
    lag = round(dt_ps * 1e-3 * sample_rate)
    if lag < 1:
        raise ConfigurationError(f"{dt_ps} ps is shorter than one sample at {sample_rate} GSa/s")
    return lag


def holevo_dispersion(est, dt_ps=DEFAULT_DT_PS, amplitude_bins=20, min_pairs=MIN_PAIRS):
    """Phase dispersion over ``dt_ps`` per bin of the starting amplitude |E(t)|.

    ``amplitude_bins`` is a bin count (logarithmic bins over the observed
    range) or an explicit array of edges. Bins with fewer than ``min_pairs``
    pairs come back with ``valid`` unset. A bin whose mean resultant is
    indistinguishable from that of uniform increments is ``saturated`` and
    its dispersion infinite.
    """
    lag = _lag_samples(dt_ps, est.sample_rate)
    amplitude = est.amplitude[:-lag]
    delta_phi = np.angle(np.exp(1j * (est.phase[lag:] - est.phase[:-lag])))
    if np.isscalar(amplitude_bins):
        positive = amplitude[amplitude > 0]
        if not positive.size:
            raise InsufficientDataError("field amplitude is zero everywhere")
        edges = np.geomspace(positive.min(), positive.max(), int(amplitude_bins) + 1)
    else:
        edges = np.asarray(amplitude_bins, dtype=float)
    which = np.digitize(amplitude, edges) - 1
    bins = []
    for index, (low, high) in enumerate(zip(edges[:-1], edges[1:])):
        members = which == index
        pairs = int(members.sum())
        if pairs < min_pairs:
            logger.info("amplitude bin [%.4g, %.4g) has %d pairs; skipped", low, high, pairs)
            bins.append(DispersionBin(low, high, math.sqrt(low * high), math.nan, pairs, valid=False))
            continue
        resultant = mean_resultant(delta_phi[members])
        saturated = resultant < SATURATION_FLOOR / math.sqrt(pairs)
        if saturated:
            logger.info("amplitude bin [%.4g, %.4g): phase increments look uniform; saturated", low, high)
        bins.append(DispersionBin(
            low, high, float(amplitude[members].mean()),
            math.inf if saturated else _holevo_from_resultant(resultant), pairs, saturated=saturated,
        ))
    return bins


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    stderr: float
    n_bins: int
    # Weighted mean of log(dphi_rms |E|): the intercept with the slope held at -1.
    level: float = math.nan

    def diffusion_coefficient(self, dt_ps=DEFAULT_DT_PS):
        """Per-quadrature diffusion implied by dphi = sqrt(D dt) / |E| (meaningful for slope -1)."""
        return math.exp(2.0 * self.level) / (dt_ps * 1e-3)


def fit_scaling(bins):
    """Weighted least squares of log dphi_rms against log |E|, weights sqrt(pairs)."""
    usable = [b for b in bins if b.valid and not b.saturated and b.dphi_rms > 0]
    if len(usable) < MIN_FIT_BINS:
        raise InsufficientDataError(f"{len(usable)} usable bins, at least {MIN_FIT_BINS} needed")
    x = np.log([b.amplitude for b in usable])
    y = np.log([b.dphi_rms for b in usable])
    pairs = np.array([b.pairs for b in usable], dtype=float)
    coefficients, covariance = np.polyfit(x, y, 1, w=np.sqrt(pairs), cov=True)
    return ScalingFit(
        slope=float(coefficients[0]),
        intercept=float(coefficients[1]),
        stderr=float(math.sqrt(max(covariance[0, 0], 0.0))),
        n_bins=len(usable),
        level=float(np.average(x + y, weights=pairs)),
    )


class Mechanism(str, Enum):
    SPONTANEOUS_EMISSION = 'spontaneous-emission'
    REFRACTIVE_INDEX = 'refractive-index'
    NONLINEARITY = 'nonlinearity'

    @property
    def slope(self):
        return {
            Mechanism.SPONTANEOUS_EMISSION: -1.0,
            Mechanism.REFRACTIVE_INDEX: 0.0,
            Mechanism.NONLINEARITY: 1.0,
        }[self]


def classify_mechanism(fit):
    """The mechanism whose characteristic slope lies nearest the fitted one."""
    return min(Mechanism, key=lambda mechanism: abs(fit.slope - mechanism.slope))


# Files

def read_trace_csv(path, omega=DEFAULT_OMEGA, lo_amplitude=1.0):
    """Trace from CSV columns (time_ns, v_mV); the sample rate comes from the time column."""
    with Path(path).open(newline='', encoding='utf-8') as handle:
        reader = csv.DictReader(handle)
        if not reader.fieldnames or not {'time_ns', 'v_mV'} <= set(reader.fieldnames):
            raise ConfigurationError(f"{path}: expected columns time_ns, v_mV")
        rows = [(float(row['time_ns']), float(row['v_mV'])) for row in reader]
    if len(rows) < 2:
        raise InsufficientDataError(f"{path}: fewer than two samples")
    times, values = np.array(rows).T
    return HeterodyneTrace(values, 1.0 / float(np.median(np.diff(times))), omega, lo_amplitude)


def read_trace_f32(path, sample_rate=DEFAULT_SAMPLE_RATE, omega=DEFAULT_OMEGA, lo_amplitude=1.0):
    samples = np.fromfile(str(path), dtype='<f4').astype(float)
    return HeterodyneTrace(samples, sample_rate, omega, lo_amplitude)


def write_trace_csv(trace, path):
    with Path(path).open('w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle)
        writer.writerow(('time_ns', 'v_mV'))
        for time, value in zip(trace.times, trace.samples):
            writer.writerow((repr(float(time)), repr(float(value))))


def write_bins_csv(bins, path):
    with Path(path).open('w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle)
        writer.writerow(('amplitude', 'low', 'high', 'dphi_rms', 'pairs', 'valid', 'saturated'))
        for b in bins:
            writer.writerow((repr(b.amplitude), repr(b.low), repr(b.high), repr(b.dphi_rms), b.pairs,
                             int(b.valid), int(b.saturated)))
