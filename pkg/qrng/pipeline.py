"""Chunked simulate -> digitize -> extract runs and the throughput benchmark.

Chunk ``c`` of a run draws from its own generator, spawned from the run seed
by chunk index, so results do not depend on the number of workers. Worker
threads make every random draw of a chunk, including the comparator's
reference noise, and assemble the samples when the chunk needs nothing from
its predecessor. Only the phase walk, correlated hangover and the feedback
threshold run chunk by chunk in order.
"""
import logging
import os
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from django.conf import settings

from .digitizer import ComparatorState, decide, decision_levels
from .exceptions import ConfigurationError
from .extractor import WORD_BITS, BitKind, BitStream, extract, pack_bits
from .photonics import ComponentDraws, TrainState, assemble_train, chunk_is_stateless, draw_components

logger = logging.getLogger(__name__)

MIN_BENCH_BITS = 10 ** 8


def resolve_workers(workers=None):
    workers = settings.QRNG_WORKERS if workers is None else workers
    if workers < 0:
        raise ConfigurationError("workers must be non-negative")
    return workers or os.cpu_count() or 1


def resolve_chunk_pulses(chunk_pulses=None):
    chunk_pulses = settings.QRNG_CHUNK_BITS if chunk_pulses is None else chunk_pulses
    chunk_pulses -= chunk_pulses % WORD_BITS
    if chunk_pulses <= 0:
        raise ConfigurationError("chunk size must hold at least 64 pulses")
    return chunk_pulses


def chunk_generators(seed, n_chunks):
    return [np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(n_chunks)]


@dataclass
class SimulationRun:
    raw: BitStream
    extracted: BitStream
    comparator: ComparatorState
    clamped: int = 0

    @property
    def raw_mean(self):
        return self.raw.ones() / self.raw.length

    def summary(self):
        return {
            'n_pulses': self.raw.length,
            'raw_mean': self.raw_mean,
            'raw_bias': 2.0 * self.raw_mean - 1.0,
            'v_ref_mean': self.comparator.v_ref_mean,
            'clamped': self.clamped,
        }


@dataclass
class PreparedChunk:
    """What the parallel stage hands to the ordered one."""

    clamped: int
    # Decision levels when the chunk is stateless, reference noise otherwise.
    levels: np.ndarray
    draws: ComponentDraws | None = None


def prepare_chunk(config, n, rng, sigma_ref):
    """Every draw of a chunk, assembled and shifted by the reference noise when no state is needed."""
    simulation, noise, process = config.simulation, config.noise, config.phase_process
    draws = draw_components(simulation, noise, n, rng, process)
    reference_noise = rng.standard_normal(n)
    if not chunk_is_stateless(simulation, process):
        return PreparedChunk(draws.clamped, reference_noise, draws)
    train, _ = assemble_train(draws, simulation, noise)
    return PreparedChunk(draws.clamped, decision_levels(train.v, sigma_ref, reference_noise))


def generate_raw(config, workers=1, chunk_pulses=None):
    """Raw bits d for ``config`` and the comparator state after the last pulse."""
    config = config.validated()
    simulation, noise = config.simulation, config.noise
    n = simulation.n_pulses
    chunk_pulses = resolve_chunk_pulses(chunk_pulses)
    spans = [(lo, min(lo + chunk_pulses, n)) for lo in range(0, n, chunk_pulses)]
    generators = chunk_generators(simulation.rng_seed, len(spans))
    comparator = ComparatorState.for_config(config)
    workers = max(1, workers)
    state = TrainState()
    words, clamped = [], 0

    def prepare(index):
        lo, hi = spans[index]
        return prepare_chunk(config, hi - lo, generators[index], comparator.sigma_ref)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        pending = deque()
        submitted = 0
        for _ in spans:
            while submitted < len(spans) and len(pending) <= workers:
                pending.append(pool.submit(prepare, submitted))
                submitted += 1
            chunk = pending.popleft().result()
            levels = chunk.levels
            if chunk.draws is not None:
                train, state = assemble_train(chunk.draws, simulation, noise, state)
                levels = decision_levels(train.v, comparator.sigma_ref, levels)
            words.append(pack_bits(decide(levels, comparator)))
            clamped += chunk.clamped
    raw = BitStream(np.concatenate(words), n, BitKind.RAW)
    logger.debug("generated %d raw bits in %d chunks", n, len(spans))
    return raw, comparator, clamped


def simulate(config, workers=1, chunk_pulses=None, x0=0):
    raw, comparator, clamped = generate_raw(config, workers, chunk_pulses)
    return SimulationRun(raw, extract(raw, x0, workers), comparator, clamped)


@dataclass(frozen=True)
class BenchResult:
    n_bits: int
    workers: int
    seconds: float
    extraction_seconds: float

    @property
    def bits_per_second(self):
        return self.n_bits / self.seconds

    @property
    def extraction_rate(self):
        return self.n_bits / self.extraction_seconds

    def as_dict(self):
        return {
            'n_bits': self.n_bits,
            'workers': self.workers,
            'seconds': self.seconds,
            'bits_per_second': self.bits_per_second,
            'extraction_seconds': self.extraction_seconds,
            'extraction_bits_per_second': self.extraction_rate,
        }


def throughput_bench(config, n_bits, workers=None, enforce_minimum=True, chunk_pulses=None):
    """Wall-clock rate of the whole simulate -> digitize -> extract chain for ``n_bits`` pulses."""
    if enforce_minimum and n_bits < MIN_BENCH_BITS:
        raise ConfigurationError(f"benchmark needs at least {MIN_BENCH_BITS} bits, got {n_bits}")
    workers = resolve_workers(workers)
    config = config.with_simulation(n_pulses=n_bits)
    started = time.perf_counter()
    raw, _, _ = generate_raw(config, workers, chunk_pulses)
    extract_started = time.perf_counter()
    extract(raw, 0, workers)
    finished = time.perf_counter()
    result = BenchResult(n_bits, workers, finished - started, finished - extract_started)
    logger.info("%d bits in %.2f s: %.3g bits/s", n_bits, result.seconds, result.bits_per_second)
    return result
