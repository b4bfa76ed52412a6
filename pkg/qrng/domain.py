"""Domain value types shared by every generator module.

Voltages are millivolts, times nanoseconds unless a field says picoseconds.
All types are frozen pydantic models: immutable after construction and safe
to share between worker threads.
"""
import math
from enum import Enum

from pydantic import BaseModel, ConfigDict, Field

from .exceptions import ConfigurationError


class DistrustLevel(str, Enum):
    """Assumed correlation structure among the untrusted noises."""

    ORDINARY = 'ordinary'
    DIGITIZER_PARANOID = 'digitizer-paranoid'
    FULLY_PARANOID = 'fully-paranoid'

    @property
    def label(self):
        return {
            DistrustLevel.ORDINARY: 'Ordinary',
            DistrustLevel.DIGITIZER_PARANOID: 'Dig. par.',
            DistrustLevel.FULLY_PARANOID: 'Fully par.',
        }[self]


class PhaseMode(str, Enum):
    FULLY_RANDOM = 'fully-random'
    LANGEVIN_FIELD = 'langevin-field'


class HangoverMode(str, Enum):
    """I.i.d. Gaussian hangover, or a fixed leakage kernel over the previous pulses' power."""

    IID = 'iid'
    CORRELATED = 'correlated'


class FrozenModel(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')


class NoiseModel(FrozenModel):
    """Means and rms deviations of the technical noises, visibility and interference swing."""

    mean_vS: float = 251.0
    mean_vL: float = 251.0
    sigma_vS: float = 1.1
    sigma_vL: float = 1.3
    sigma_vPD: float = 0.8
    sigma_vHO: float = 3.8
    sigma_vRef: float = 7.7
    visibility: float = 0.955
    mean_vc: float = 3.0
    # Half the peak-to-peak range of the interference term.
    half_swing_dvphi: float = 483.0

    @property
    def interference_amplitude(self):
        """Amplitude 2V*sqrt(<vS><vL>) of the simulated interference term."""
        return 2.0 * self.visibility * math.sqrt(max(self.mean_vS, 0.0) * max(self.mean_vL, 0.0))

    def sigmas(self):
        """Per-source rms deviations keyed by the names used in noise breakdowns."""
        return {
            'vS': self.sigma_vS,
            'vL': self.sigma_vL,
            'vPD': self.sigma_vPD,
            'vHO': self.sigma_vHO,
            'vRef': self.sigma_vRef,
        }


class TimingBudget(FrozenModel):
    """Measured circuit delays and their uncertainties for the freshness-time bound."""

    t1_best: float = 7.82
    t2_best: float = 1.16
    t3_best: float = 1.55
    # Per-edge systematic uncertainty, picoseconds.
    edge_uncertainty: float = 100.0
    # Jitter bound, picoseconds.
    jitter_bound: float = 200.0
    clock_period: float = 5.0

    @property
    def total_best(self):
        return self.t1_best + self.t2_best + self.t3_best


class PhaseProcess(FrozenModel):
    """Pulse-to-pulse phase process."""

    mode: PhaseMode = PhaseMode.FULLY_RANDOM
    # rad^2/ns at unit field amplitude; LangevinField only.
    diffusion_coefficient: float = 10.0
    below_threshold_time: float = 3.0
    # Euler-Maruyama step, ns.
    step: float = 0.01
    # Field amplitude left in the cavity when the laser drops below threshold.
    initial_amplitude: float = 1.0


class ComparatorSettings(FrozenModel):
    """Comparator start-up and feedback-loop settings."""

    feedback: bool = True
    # Set-point offset from the centre of the analog distribution at start-up, mV.
    v_ref_offset: float = 0.0
    # Pulses per integrator update; 1 is the exact per-pulse loop.
    feedback_block: int = 1024


class SimConfig(FrozenModel):
    pulse_rate: float = 200.0
    n_pulses: int = 1_000_000
    rng_seed: int = Field(default=0, ge=0, lt=2**64)
    phase_mode: PhaseMode = PhaseMode.FULLY_RANDOM
    # Forced excess <d>: the feedback loop settles at <d> = (1 + bias_target)/2.
    bias_target: float | None = None
    # Integrator time constant, ms.
    feedback_time_constant: float = 1.0
    hangover_mode: HangoverMode = HangoverMode.IID

    @property
    def pulses_per_time_constant(self):
        # Mbps * ms = 1e3 pulses.
        return self.pulse_rate * self.feedback_time_constant * 1e3

    @property
    def target_mean(self):
        return 0.5 * (1.0 + (self.bias_target or 0.0))


def default_noise_model():
    """The measured noise model: derived-variable column of the noise statistics table."""
    return NoiseModel(
        mean_vS=251.0,
        mean_vL=251.0,
        sigma_vS=1.1,
        sigma_vL=1.3,
        sigma_vPD=0.8,
        sigma_vHO=3.8,
        sigma_vRef=7.7,
        visibility=0.955,
        mean_vc=3.0,
        half_swing_dvphi=483.0,
    )


def _noise_violations(noise):
    errors = []
    for name in ('sigma_vS', 'sigma_vL', 'sigma_vPD', 'sigma_vHO', 'sigma_vRef'):
        if getattr(noise, name) < 0:
            errors.append(f"{name} < 0")
    if not 0.0 <= noise.visibility <= 1.0:
        errors.append("visibility outside [0, 1]")
    if noise.half_swing_dvphi <= 0:
        errors.append("half_swing_dvphi <= 0")
    elif abs(noise.mean_vc) >= noise.half_swing_dvphi:
        errors.append("|mean_vc| >= half_swing_dvphi")
    return errors


def _config_violations(config):
    errors = []
    if config.pulse_rate <= 0:
        errors.append("pulse_rate <= 0")
    if config.n_pulses < 1:
        errors.append("n_pulses < 1")
    if config.feedback_time_constant <= 0:
        errors.append("feedback_time_constant <= 0")
    if config.bias_target is not None and not -1.0 < config.bias_target < 1.0:
        errors.append("bias_target outside (-1, 1)")
    return errors


def _phase_violations(phase):
    errors = []
    if phase.mode == PhaseMode.LANGEVIN_FIELD and phase.diffusion_coefficient <= 0:
        errors.append("diffusion_coefficient <= 0 in langevin-field mode")
    if phase.below_threshold_time <= 0:
        errors.append("below_threshold_time <= 0")
    if phase.step <= 0:
        errors.append("step <= 0")
    return errors


def _timing_violations(budget):
    return [
        f"{name} <= 0"
        for name in ('t1_best', 't2_best', 't3_best', 'edge_uncertainty', 'jitter_bound', 'clock_period')
        if getattr(budget, name) <= 0
    ]


def validate(config, noise, phase=None, budget=None):
    """Every invariant violation of the given objects; an empty list means valid."""
    errors = _config_violations(config) + _noise_violations(noise)
    if phase is not None:
        errors += _phase_violations(phase)
    if budget is not None:
        errors += _timing_violations(budget)
    return errors


def require_valid(config, noise, phase=None, budget=None):
    errors = validate(config, noise, phase, budget)
    if errors:
        raise ConfigurationError("invalid configuration", errors)
