"""Per-pulse analog voltages of the interferometer output.

Each pulse sample is v = vS + vL + vPhi + vHO + vPD with the interference term
vPhi = 2V*sqrt(vS*vL)*cos(phi). Only the value at the decision instant is
simulated, not the pulse waveform.

Generation is split in two steps so long trains can be produced in parallel
chunks: ``draw_components`` makes every random draw of a chunk and depends on
nothing but its generator, ``assemble_train`` then applies the order-dependent
parts (phase walk, correlated hangover) given the state left by the previous
chunk.
"""
import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .domain import HangoverMode, PhaseMode, PhaseProcess, require_valid
from .exceptions import ConfigurationError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
COMPONENT_NAMES = ('vS', 'vL', 'vPhi', 'vHO', 'vPD')
# Leakage weights of the previous two pulses' power in correlated-hangover mode.
HANGOVER_KERNEL = (1.0, 0.5)


@dataclass(frozen=True)
class PulseSample:
    v: float
    phi: float
    components: dict | None = None

    def __post_init__(self):
        if self.components is not None:
            total = sum(self.components[name] for name in COMPONENT_NAMES)
            if abs(total - self.v) > 1e-9:
                raise ConfigurationError(f"components sum to {total}, sample is {self.v}")


@dataclass
class PulseTrain:
    """Struct-of-arrays pulse samples; indexing yields ``PulseSample``."""

    v: np.ndarray
    phi: np.ndarray
    vS: np.ndarray
    vL: np.ndarray
    vPhi: np.ndarray
    vHO: np.ndarray
    vPD: np.ndarray

    def __len__(self):
        return self.v.size

    def __getitem__(self, index):
        return PulseSample(
            v=float(self.v[index]),
            phi=float(self.phi[index]),
            components={name: float(getattr(self, name)[index]) for name in COMPONENT_NAMES},
        )

    def __iter__(self):
        for index in range(len(self)):
            yield self[index]

    def component_residual(self):
        """Largest |v - sum of components| over the train."""
        if not len(self):
            return 0.0
        total = self.vS + self.vL + self.vPhi + self.vHO + self.vPD
        return float(np.max(np.abs(total - self.v)))

    def to_csv(self, path):
        with Path(path).open('w', newline='', encoding='utf-8') as handle:
            writer = csv.writer(handle)
            writer.writerow(('pulse_index', 'v', 'phi') + COMPONENT_NAMES)
            columns = [self.v, self.phi] + [getattr(self, name) for name in COMPONENT_NAMES]
            for index, row in enumerate(zip(*columns)):
                writer.writerow([index] + [repr(float(value)) for value in row])

    def to_float32(self, path):
        self.v.astype('<f4').tofile(str(path))


def load_float32(path):
    return np.fromfile(str(path), dtype='<f4').astype(float)


class TrainState(NamedTuple):
    """What a chunk hands to the next one: last phase and the last two centred powers."""

    phase: float = 0.0
    powers: tuple = (0.0, 0.0)


@dataclass
class ComponentDraws:
    vS: np.ndarray
    vL: np.ndarray
    vPD: np.ndarray
    # Standard normals for i.i.d. hangover; unused in correlated mode.
    hangover: np.ndarray
    # Uniform phases, or phase increments of the field walk.
    phase: np.ndarray
    phase_is_increment: bool = False
    clamped: int = 0


def langevin_phase_increments(process, size, rng):
    """Phase change of each pulse's field over the below-threshold interval.

    The field starts at ``initial_amplitude`` on the real axis and takes
    Euler-Maruyama steps of ``process.step`` ns, with equal independent
    diffusion in both quadratures. A rotation of the start phase rotates the
    walk with it, so the increment is independent of the previous phase.
    """
    if process.diffusion_coefficient == 0:
        return np.zeros(size)
    n_steps = max(1, round(process.below_threshold_time / process.step))
    dt = process.below_threshold_time / n_steps
    scale = math.sqrt(process.diffusion_coefficient * dt)
    real = np.full(size, float(process.initial_amplitude))
    imag = np.zeros(size)
    for _ in range(n_steps):
        real += scale * rng.standard_normal(size)
        imag += scale * rng.standard_normal(size)
    return np.arctan2(imag, real)


def next_phase(process, prev_phase, rng):
    """Phase of the next pulse."""
    if process.mode == PhaseMode.FULLY_RANDOM:
        return float(rng.uniform(0.0, TWO_PI))
    increment = langevin_phase_increments(process, 1, rng)[0]
    return float((prev_phase + increment) % TWO_PI)


def phase_sequence(process, n, rng, prev_phase=0.0):
    if process.mode == PhaseMode.FULLY_RANDOM:
        return rng.uniform(0.0, TWO_PI, n)
    return (prev_phase + np.cumsum(langevin_phase_increments(process, n, rng))) % TWO_PI


def _clamped_normal(mean, sigma, size, rng):
    values = rng.normal(mean, sigma, size)
    negative = values < 0
    count = int(negative.sum())
    if count:
        values[negative] = 0.0
    return values, count


def draw_components(config, noise, n, rng, process):
    """All random draws of an ``n``-pulse chunk, in a fixed order."""
    vS, clamped_short = _clamped_normal(noise.mean_vS, noise.sigma_vS, n, rng)
    vL, clamped_long = _clamped_normal(noise.mean_vL, noise.sigma_vL, n, rng)
    vPD = rng.normal(0.0, noise.sigma_vPD, n)
    hangover = rng.standard_normal(n) if config.hangover_mode == HangoverMode.IID else np.zeros(0)
    if process.mode == PhaseMode.FULLY_RANDOM:
        phase = rng.uniform(0.0, TWO_PI, n)
    else:
        phase = langevin_phase_increments(process, n, rng)
    clamped = clamped_short + clamped_long
    if clamped:
        logger.warning("clamped %d negative vS/vL draws at 0 mV", clamped)
    return ComponentDraws(vS, vL, vPD, hangover, phase, process.mode == PhaseMode.LANGEVIN_FIELD, clamped)


def chunk_is_stateless(config, process):
    """True when a chunk's samples depend on nothing the previous chunk leaves behind."""
    return process.mode == PhaseMode.FULLY_RANDOM and config.hangover_mode == HangoverMode.IID


def centred_power_variance(noise):
    """Variance of vS + vL + vPhi for uniformly random phase."""
    amplitude = noise.interference_amplitude
    return noise.sigma_vS ** 2 + noise.sigma_vL ** 2 + 0.5 * amplitude ** 2


def correlated_hangover(powers, history, noise):
    """Hangover as a fixed linear functional of the previous two pulses' centred power.

    Scaled so its rms equals sigma_vHO for uniformly random phase.
    """
    variance = centred_power_variance(noise)
    if variance == 0 or noise.sigma_vHO == 0:
        return np.zeros(powers.shape)
    norm = math.sqrt(sum(weight ** 2 for weight in HANGOVER_KERNEL))
    scale = noise.sigma_vHO / (norm * math.sqrt(variance))
    padded = np.concatenate([np.asarray(history, dtype=float)[::-1], powers])
    previous = padded[1:-1]
    before = padded[:-2]
    return scale * (HANGOVER_KERNEL[0] * previous + HANGOVER_KERNEL[1] * before)


def assemble_train(draws, config, noise, state=TrainState(), forced_phase=None):
    """Combine a chunk's draws into samples; returns the train and the state for the next chunk."""
    if forced_phase is not None:
        phi = np.full(draws.vS.size, float(forced_phase))
    elif not draws.phase_is_increment:
        phi = draws.phase
    else:
        phi = (state.phase + np.cumsum(draws.phase)) % TWO_PI
    vPhi = 2.0 * noise.visibility * np.sqrt(draws.vS * draws.vL) * np.cos(phi)
    powers = draws.vS + draws.vL + vPhi - (noise.mean_vS + noise.mean_vL)
    if config.hangover_mode == HangoverMode.IID:
        vHO = noise.sigma_vHO * draws.hangover
    else:
        vHO = correlated_hangover(powers, state.powers, noise)
    v = draws.vS + draws.vL + vPhi + vHO + draws.vPD
    train = PulseTrain(v=v, phi=phi, vS=draws.vS, vL=draws.vL, vPhi=vPhi, vHO=vHO, vPD=draws.vPD)
    if v.size == 0:
        return train, state
    history = (float(powers[-1]), float(powers[-2]) if powers.size > 1 else state.powers[0])
    return train, TrainState(float(phi[-1]), history)


def simulate_pulse_train(config, noise, rng, *, process=None, forced_phase=None, n_pulses=None,
                         state=TrainState()):
    """``config.n_pulses`` (or ``n_pulses``) samples with all technical noises."""
    process = process if process is not None else PhaseProcess(mode=config.phase_mode)
    require_valid(config, noise, process)
    n = config.n_pulses if n_pulses is None else n_pulses
    draws = draw_components(config, noise, n, rng, process)
    train, _ = assemble_train(draws, config, noise, state, forced_phase)
    return train


@dataclass(frozen=True)
class ClassStats:
    mean: float
    rms: float
    count: int

    @classmethod
    def of(cls, values):
        values = np.asarray(values, dtype=float).ravel()
        return cls(float(values.mean()), float(values.std()), int(values.size))


def simulate_blocked_path(config, noise, blocked, n, rng, scope_sigma=0.0):
    """Steady pulses with one arm blocked: no interference; hangover only shifts the mean."""
    if blocked not in ('short', 'long'):
        raise ConfigurationError("blocked must be 'short' or 'long'")
    if blocked == 'short':
        arm = rng.normal(noise.mean_vL, noise.sigma_vL, n)
    else:
        arm = rng.normal(noise.mean_vS, noise.sigma_vS, n)
    v = arm + rng.normal(0.0, noise.sigma_vPD, n) + rng.normal(0.0, scope_sigma, n)
    return ClassStats.of(v)


@dataclass(frozen=True)
class InterruptedTrainStats:
    first_pulse: ClassStats
    interfering: ClassStats
    last_pulse: ClassStats
    long_path_only: ClassStats
    scope_sigma: float = 0.0

    def deembedded_hangover(self):
        """sigma_vHO from the last pulse, with the long-path-only background removed."""
        from .metrology import deembed_sigma

        return deembed_sigma(self.last_pulse.rms, [self.long_path_only.rms])

    def as_dict(self):
        return {
            name: {'mean': stats.mean, 'rms': stats.rms, 'count': stats.count}
            for name, stats in (
                ('first_pulse', self.first_pulse),
                ('interfering', self.interfering),
                ('last_pulse', self.last_pulse),
                ('long_path_only', self.long_path_only),
            )
        }


def simulate_interrupted_train(config, noise, train_length, rng, n_trains=None, scope_sigma=0.0):
    """Emulate periodically interrupted modulation.

    In each train the first pulse sees only the short path, pulses 2..n-1
    interfere, and the last pulse sees only the long path plus the hangover of
    its predecessors. ``scope_sigma`` adds the oscilloscope noise present in
    measured traces.
    """
    if train_length < 3:
        raise ConfigurationError("train_length must be at least 3")
    n_trains = n_trains if n_trains is not None else max(1, config.n_pulses // train_length)
    shape = (n_trains, train_length)
    vS, _ = _clamped_normal(noise.mean_vS, noise.sigma_vS, shape, rng)
    vL, _ = _clamped_normal(noise.mean_vL, noise.sigma_vL, shape, rng)
    # The first pulse has no long-path partner; the last has no short-path pulse.
    vS[:, -1] = 0.0
    vL[:, 0] = 0.0
    phi = rng.uniform(0.0, TWO_PI, shape)
    vPhi = 2.0 * noise.visibility * np.sqrt(vS * vL) * np.cos(phi)
    if config.hangover_mode == HangoverMode.IID:
        vHO = rng.normal(0.0, noise.sigma_vHO, shape)
    else:
        means = np.full(shape, noise.mean_vS + noise.mean_vL)
        means[:, 0] = noise.mean_vS
        means[:, -1] = noise.mean_vL
        powers = vS + vL + vPhi - means
        vHO = np.stack([correlated_hangover(row, (0.0, 0.0), noise) for row in powers])
    # Nothing precedes the first pulse of a train.
    vHO[:, 0] = 0.0
    v = vS + vL + vPhi + vHO + rng.normal(0.0, noise.sigma_vPD, shape) + rng.normal(0.0, scope_sigma, shape)
    return InterruptedTrainStats(
        first_pulse=ClassStats.of(v[:, 0]),
        interfering=ClassStats.of(v[:, 1:-1]),
        last_pulse=ClassStats.of(v[:, -1]),
        long_path_only=simulate_blocked_path(config, noise, 'short', v.size // train_length, rng, scope_sigma),
        scope_sigma=scope_sigma,
    )
