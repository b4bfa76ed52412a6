import math

import numpy as np

from ...forms import HeterodyneForm
from ...heterodyne import (
    DEFAULT_DT_PS,
    MIN_PAIRS,
    DriftParams,
    classify_mechanism,
    estimate_diffusion,
    fit_scaling,
    holevo_dispersion,
    kalman_filter,
    read_trace_csv,
    read_trace_f32,
    rts_smooth,
    synthesize_trace,
    write_bins_csv,
)
from ...management.base import GeneratorCommand

DEFAULT_DIFFUSION = 0.0005
DEFAULT_DAMPING = 0.1
DEFAULT_NOISE_SIGMA = 0.005
DEFAULT_SAMPLES = 20_000
DEFAULT_BINS = 12
# per-sample rms step of the oscillator-amplitude state
LO_STEP = 1e-4


class Command(GeneratorCommand):
    help = ("Recover the field from a heterodyne trace (Kalman filter and RTS smoother) and fit how its "
            "phase dispersion scales with amplitude.")
    form_class = HeterodyneForm

    def add_command_arguments(self, parser):
        parser.add_argument('--in', dest='input', help="Trace file; without it a trace is synthesized.")
        parser.add_argument('--trace-format', choices=['csv', 'f32'],
                            help="Trace file format: csv (time_ns, v_mV) or raw float32 (default csv).")
        parser.add_argument('--diffusion', type=float,
                            help=f"Synthetic field diffusion per quadrature, 1/ns (default {DEFAULT_DIFFUSION}).")
        parser.add_argument('--damping', type=float,
                            help=f"Synthetic amplitude relaxation rate, 1/ns (default {DEFAULT_DAMPING}).")
        parser.add_argument('--equilibrium', type=float,
                            help="Synthetic equilibrium amplitude; 0 is below threshold (default 0).")
        parser.add_argument('--noise-sigma', type=float,
                            help=f"Synthetic detection noise (default {DEFAULT_NOISE_SIGMA}).")
        parser.add_argument('--samples', type=int, help=f"Synthetic trace length (default {DEFAULT_SAMPLES}).")
        parser.add_argument('--process-noise', type=float,
                            help="Filter rms field step per sample (default from --diffusion).")
        parser.add_argument('--measurement-noise', type=float,
                            help="Filter rms measurement noise (default --noise-sigma).")
        parser.add_argument('--dt-ps', type=float, help=f"Phase-dispersion lag, ps (default {DEFAULT_DT_PS:g}).")
        parser.add_argument('--bins', type=int, help=f"Logarithmic amplitude bins (default {DEFAULT_BINS}).")
        parser.add_argument('--min-pairs', type=int, help=f"Pairs a bin needs to count (default {MIN_PAIRS}).")
        parser.add_argument('--out', help="CSV file for the amplitude bins.")
        parser.add_argument('--forward-only', action='store_true', help="Skip the backward smoothing pass.")

    def load_trace(self, config, options):
        if options.get('input'):
            if options.get('trace_format') == 'f32':
                return read_trace_f32(options['input']), None
            return read_trace_csv(options['input']), None
        drift = DriftParams(
            damping=options.get('damping') if options.get('damping') is not None else DEFAULT_DAMPING,
            equilibrium_amplitude=options.get('equilibrium') or 0.0,
        )
        rng = np.random.default_rng(config.simulation.rng_seed)
        return synthesize_trace(
            self.diffusion(options), drift, self.noise_sigma(options),
            options.get('samples') or DEFAULT_SAMPLES, rng,
        )

    def diffusion(self, options):
        return options.get('diffusion') if options.get('diffusion') is not None else DEFAULT_DIFFUSION

    def noise_sigma(self, options):
        return options.get('noise_sigma') if options.get('noise_sigma') is not None else DEFAULT_NOISE_SIGMA

    def run(self, config, options):
        trace, truth = self.load_trace(config, options)
        field_step = options.get('process_noise') or math.sqrt(self.diffusion(options) / trace.sample_rate)
        measurement_noise = options.get('measurement_noise') or self.noise_sigma(options) or 1e-3
        estimator = kalman_filter if options.get('forward_only') else rts_smooth
        estimate = estimator(trace, (LO_STEP, field_step, field_step), measurement_noise)
        dt_ps = options.get('dt_ps') or DEFAULT_DT_PS
        bins = holevo_dispersion(estimate, dt_ps, options.get('bins') or DEFAULT_BINS,
                                 options.get('min_pairs') or MIN_PAIRS)
        fit = fit_scaling(bins)
        outputs = {
            'source': options.get('input') or 'synthetic',
            'samples': len(trace),
            'sample_rate': trace.sample_rate,
            'estimator': 'filter' if options.get('forward_only') else 'smoother',
            'slope': fit.slope,
            'slope_stderr': fit.stderr,
            'fitted_bins': fit.n_bins,
            'mechanism': classify_mechanism(fit).value,
            'diffusion_estimate': estimate_diffusion(estimate, skip=int(trace.sample_rate)),
            'bins': [
                {'amplitude': b.amplitude, 'dphi_rms': b.dphi_rms, 'pairs': b.pairs, 'valid': b.valid,
                 'saturated': b.saturated}
                for b in bins
            ],
        }
        if truth is not None:
            outputs['rms_field_error'] = estimate.rms_error(truth, skip=int(trace.sample_rate))
        if options.get('out'):
            write_bins_csv(bins, options['out'])
            outputs['out'] = options['out']
        return outputs

    def render(self, outputs):
        self.stdout.write(f"{outputs['samples']} samples from {outputs['source']} at "
                          f"{outputs['sample_rate']:g} GSa/s ({outputs['estimator']})")
        self.stdout.write(f"slope {outputs['slope']:+.3f} +- {outputs['slope_stderr']:.3f} "
                          f"over {outputs['fitted_bins']} bins: {outputs['mechanism']}")
        self.stdout.write(f"diffusion estimate {outputs['diffusion_estimate']:.3g} /ns")
        if 'rms_field_error' in outputs:
            self.stdout.write(f"rms field error {outputs['rms_field_error']:.3g}")
