"""Predictability calculus for the one-bit digitized interference signal.

A raw bit is d = theta(v_phi + v_c), where v_phi = dv*cos(phi) is the trusted
interference term and v_c collects every untrusted contribution. Knowing v_c,
an adversary predicts d with probability P = (1 + eps)/2; this module bounds
eps from the measured noise statistics, combines bounds over parity
extraction, and budgets the freshness time of the output bits.
"""
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import optimize, stats

from .domain import DistrustLevel, TimingBudget
from .exceptions import (
    ConfigurationError,
    DeembedError,
    FitConvergenceError,
    InsufficientDataError,
    NumericalError,
)

logger = logging.getLogger(__name__)

NOISE_SOURCES = ('vS', 'vL', 'vPD', 'vHO', 'vRef')
DEFAULT_CONFIDENCE_SIGMAS = 6
# Measured raw-bit mean <P1> used to estimate <v_c>.
MEASURED_P1_MEAN = 0.50035
# Published single-event freshness interval, ns.
MEASURED_FRESHNESS = (10.01, 11.07)


class BitProbability(NamedTuple):
    p1: float
    saturated: bool


class FreshnessInterval(NamedTuple):
    lower: float
    upper: float

    @property
    def width(self):
        return self.upper - self.lower


# Arcsine law of v_phi = dv*cos(phi) for uniform phi.

def arcsine_pdf(x, dvphi):
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < dvphi
    out = np.zeros_like(x)
    out[inside] = 1.0 / (math.pi * np.sqrt(dvphi - x[inside]) * np.sqrt(x[inside] + dvphi))
    return out


def arcsine_cdf(x, dvphi):
    x = np.clip(np.asarray(x, dtype=float), -dvphi, dvphi)
    return (2.0 / math.pi) * np.arcsin(np.sqrt(0.5 + x / (2.0 * dvphi)))


def p1_given_vc(vc, dvphi):
    """P(d=1 | v_c) for interference half swing ``dvphi``.

    Outside |v_c| <= dvphi the bit is deterministic; the result is then 0 or 1
    with ``saturated`` set.
    """
    if dvphi <= 0:
        raise ConfigurationError("dvphi must be positive")
    if abs(vc) > dvphi:
        return BitProbability(1.0 if vc > 0 else 0.0, True)
    return BitProbability((2.0 / math.pi) * math.asin(math.sqrt(0.5 + vc / (2.0 * dvphi))), False)


def epsilon_from_p1(p1):
    """Excess predictability 2*max(P1, 1-P1) - 1."""
    return 2.0 * max(p1, 1.0 - p1) - 1.0


@dataclass(frozen=True)
class NoiseBreakdown:
    """rms deviation per untrusted noise source, mV."""

    sigmas: dict = field(default_factory=dict)

    @classmethod
    def from_noise_model(cls, noise):
        return cls(dict(noise.sigmas()))

    def require_complete(self):
        missing = [name for name in NOISE_SOURCES if name not in self.sigmas]
        unknown = [name for name in self.sigmas if name not in NOISE_SOURCES]
        if missing or unknown:
            raise ConfigurationError(
                "incomplete noise breakdown",
                [f"missing source {name}" for name in missing] + [f"unknown source {name}" for name in unknown],
            )


def combine_noise(breakdown, level):
    """rms deviation of v_c under the correlation assumption of ``level``.

    Ordinary: independent sources, quadrature sum. Digitizer paranoid: the
    reference adds linearly to the quadrature sum of the others. Fully
    paranoid: all sources add linearly.
    """
    breakdown.require_complete()
    level = DistrustLevel(level)
    sigmas = breakdown.sigmas
    if level == DistrustLevel.ORDINARY:
        return math.sqrt(sum(sigmas[name] ** 2 for name in NOISE_SOURCES))
    if level == DistrustLevel.DIGITIZER_PARANOID:
        others = math.sqrt(sum(sigmas[name] ** 2 for name in NOISE_SOURCES if name != 'vRef'))
        return others + sigmas['vRef']
    return sum(sigmas[name] for name in NOISE_SOURCES)


def two_sided_tail(n_sigmas):
    """Fraction of a Gaussian beyond +-n_sigmas."""
    return float(2.0 * stats.norm.sf(n_sigmas))


@dataclass(frozen=True)
class PredictabilityReport:
    distrust: DistrustLevel | None
    sigma_vc: float
    vc_bound: float
    dvphi_eff: float
    epsilon_max: float
    k: int
    epsilon_max_k: float
    confidence_sigmas: int
    tail_fraction: float
    freshness_ns: FreshnessInterval | None
    saturated: bool = False

    def as_dict(self):
        return {
            'distrust': self.distrust.value if self.distrust else None,
            'sigma_vc': self.sigma_vc,
            'vc_bound': self.vc_bound,
            'dvphi_eff': self.dvphi_eff,
            'epsilon_max': self.epsilon_max,
            'k': self.k,
            'epsilon_max_k': self.epsilon_max_k,
            'confidence_sigmas': self.confidence_sigmas,
            'tail_fraction': self.tail_fraction,
            'freshness_ns': list(self.freshness_ns) if self.freshness_ns else None,
            'saturated': self.saturated,
        }


def effective_half_swing(noise, n_sigmas):
    """Half swing reduced for n-sigma low fluctuations of both arm signals."""
    short = 1.0 - n_sigmas * noise.sigma_vS / noise.mean_vS
    long = 1.0 - n_sigmas * noise.sigma_vL / noise.mean_vL
    if short <= 0 or long <= 0:
        raise NumericalError(f"{n_sigmas}-sigma arm fluctuations exceed the mean arm signal")
    return noise.half_swing_dvphi * math.sqrt(short) * math.sqrt(long)


def epsilon_bound(noise, sigma_vc, n_sigmas=DEFAULT_CONFIDENCE_SIGMAS, k=1, distrust=None, budget=None):
    """Bound eps_max at |<v_c>| + n_sigmas*sigma_vc and its k-bit parity eps_max^k."""
    if n_sigmas < 1:
        raise ConfigurationError("n_sigmas must be at least 1")
    if k < 1:
        raise ConfigurationError("k must be at least 1")
    dvphi_eff = effective_half_swing(noise, n_sigmas)
    vc_bound = abs(noise.mean_vc) + n_sigmas * sigma_vc
    probability = p1_given_vc(vc_bound, dvphi_eff)
    epsilon_max = 1.0 if probability.saturated else epsilon_from_p1(probability.p1)
    if probability.saturated:
        logger.info("v_c bound %.3f mV exceeds half swing %.3f mV; no randomness certified", vc_bound, dvphi_eff)
    return PredictabilityReport(
        distrust=DistrustLevel(distrust) if distrust else None,
        sigma_vc=sigma_vc,
        vc_bound=vc_bound,
        dvphi_eff=dvphi_eff,
        epsilon_max=epsilon_max,
        k=k,
        epsilon_max_k=epsilon_max ** k,
        confidence_sigmas=n_sigmas,
        tail_fraction=two_sided_tail(n_sigmas),
        freshness_ns=freshness(budget, k) if budget is not None else None,
        saturated=probability.saturated,
    )


def predictability_report(noise, level, k, n_sigmas=DEFAULT_CONFIDENCE_SIGMAS, budget=None):
    sigma_vc = combine_noise(NoiseBreakdown.from_noise_model(noise), level)
    return epsilon_bound(noise, sigma_vc, n_sigmas, k, distrust=level, budget=budget)


def predictability_table(noise, levels=tuple(DistrustLevel), ks=(4, 6), n_sigmas=DEFAULT_CONFIDENCE_SIGMAS,
                         budget=None):
    """One report per (distrust level, k), laid out level-major, one row per level."""
    budget = budget if budget is not None else TimingBudget()
    return [
        predictability_report(noise, level, k, n_sigmas, budget)
        for level in levels
        for k in ks
    ]


def confidence_sweep(noise, level, k, sigma_levels=(1, 2, 6)):
    """eps_max^k at several confidence multipliers, for the bound bars of the correlation plot."""
    return {n: predictability_report(noise, level, k, n).epsilon_max_k for n in sigma_levels}


def parity_epsilon(eps_list):
    """Bound on eps of the XOR of independent bits with per-bit bounds eps_j: their product."""
    eps = [float(value) for value in eps_list]
    if any(not 0.0 <= value <= 1.0 for value in eps):
        raise ConfigurationError("every epsilon must lie in [0, 1]")
    return math.prod(eps)


def brute_force_parity_epsilon(eps_list):
    """Predictability 2P - 1 of the parity, by enumerating all 2^k raw-bit outcomes."""
    p_zero = [0.5 * (1.0 + value) for value in eps_list]
    even = 0.0
    for outcome in itertools.product((0, 1), repeat=len(p_zero)):
        probability = math.prod(p if bit == 0 else 1.0 - p for bit, p in zip(outcome, p_zero))
        if sum(outcome) % 2 == 0:
            even += probability
    return 2.0 * max(even, 1.0 - even) - 1.0


def mean_vc_from_p1(p1_mean, two_dvphi):
    """<v_c> from the measured raw-bit mean: 2dv * (sin^2(pi*<P1>/2) - 1/2)."""
    if not 0.0 < p1_mean < 1.0:
        raise ConfigurationError("p1_mean must lie strictly between 0 and 1")
    return two_dvphi * (math.sin(p1_mean * math.pi / 2.0) ** 2 - 0.5)


def mean_vc_discrepancy(noise, p1_mean=MEASURED_P1_MEAN):
    """Configured <v_c> next to the value the measured <P1> implies."""
    implied = mean_vc_from_p1(p1_mean, 2.0 * noise.half_swing_dvphi)
    return {'configured': noise.mean_vc, 'from_p1': implied, 'p1_mean': p1_mean}


def deembed_sigma(total, backgrounds):
    """Quadrature subtraction sqrt(total^2 - sum bg^2)."""
    radicand = total ** 2 - sum(bg ** 2 for bg in backgrounds)
    if radicand < 0:
        raise DeembedError(
            f"backgrounds exceed total ({total} mV): imaginary de-embed sqrt({radicand:.4g}); "
            "measurements are inconsistent"
        )
    return math.sqrt(radicand)


def freshness(budget, k):
    """Freshness-time interval (ns) for k raw bits of parity."""
    if k < 1:
        raise ConfigurationError("k must be at least 1")
    spread = 3 * budget.edge_uncertainty * 1e-3 + budget.jitter_bound * 1e-3
    extra = budget.clock_period * (k - 1)
    return FreshnessInterval(budget.total_best - spread + extra, budget.total_best + spread + extra)


def freshness_discrepancy(budget, measured=MEASURED_FRESHNESS):
    """Single-event interval from ``budget`` next to the published one, with the gap at each end."""
    computed = freshness(budget, 1)
    return {
        'computed': list(computed),
        'measured': list(measured),
        'gap_ns': [computed.lower - measured[0], computed.upper - measured[1]],
    }


def jitter_pvalue(window_tail_prob, n_traces, observed_outside):
    """Poisson probability of seeing at most ``observed_outside`` edges outside the window."""
    if n_traces < 1:
        raise ConfigurationError("n_traces must be at least 1")
    expected = window_tail_prob * n_traces
    if expected == 0:
        return 1.0
    return float(stats.poisson.cdf(observed_outside, expected))


def jitter_sigma_multiple(budget, sigma_jitter_ps=40.0):
    """How many rms jitter widths the jitter bound covers, if jitter is Gaussian."""
    return budget.jitter_bound / sigma_jitter_ps


# Histogram fit of the analog signal.

@dataclass(frozen=True)
class ArcsineFit:
    center: float
    half_swing: float
    blur: float
    chi2: float
    dof: int
    p_value: float
    edges: np.ndarray
    counts: np.ndarray
    expected: np.ndarray

    @property
    def two_dvphi(self):
        return 2.0 * self.half_swing


def blurred_arcsine_bin_probabilities(edges, center, half_swing, blur, amplitude_sigma=0.0, n_phase=2048):
    """Bin probabilities of c + A*cos(phi) + N(0, blur), A ~ N(half_swing, amplitude_sigma)."""
    phi = (np.arange(n_phase) + 0.5) * (math.pi / n_phase)
    cos_phi = np.cos(phi)[:, None]
    spread = np.sqrt(blur ** 2 + (amplitude_sigma * cos_phi) ** 2)
    cdf = stats.norm.cdf((np.asarray(edges)[None, :] - center - half_swing * cos_phi) / spread)
    return np.diff(cdf.mean(axis=0))


def fit_arcsine_histogram(samples, bin_width=4.0, amplitude_sigma=0.0, min_expected=5.0):
    """Fit centre, half swing and Gaussian blur to a voltage histogram; Pearson chi^2 of the fit."""
    samples = np.asarray(samples, dtype=float)
    if samples.size < 1000:
        raise InsufficientDataError("arcsine fit needs at least 1000 samples")
    lo, hi = samples.min() - bin_width, samples.max() + bin_width
    edges = np.arange(lo, hi + bin_width, bin_width)
    counts, _ = np.histogram(samples, bins=edges)
    total = samples.size

    def model(_, center, half_swing, blur):
        return total * blurred_arcsine_bin_probabilities(edges, center, half_swing, abs(blur), amplitude_sigma)

    start = (float(samples.mean()), float(math.sqrt(2.0) * samples.std()), 5.0)
    weights = np.sqrt(np.maximum(counts, 1.0))
    try:
        params, _ = optimize.curve_fit(model, edges[:-1], counts, p0=start, sigma=weights, maxfev=2000)
    except RuntimeError as exc:
        raise FitConvergenceError(f"arcsine fit did not converge: {exc}") from exc
    center, half_swing, blur = float(params[0]), float(params[1]), abs(float(params[2]))
    expected = model(None, center, half_swing, blur)
    kept = expected >= min_expected
    chi2 = float(np.sum((counts[kept] - expected[kept]) ** 2 / expected[kept]))
    dof = int(kept.sum()) - 1 - 3
    return ArcsineFit(
        center=center,
        half_swing=half_swing,
        blur=blur,
        chi2=chi2,
        dof=dof,
        p_value=float(stats.chi2.sf(chi2, dof)),
        edges=edges,
        counts=counts,
        expected=expected,
    )
