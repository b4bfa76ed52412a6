import numpy as np

from ...digitizer import measure_transition
from ...extractor import BitKind, distill, write_bitfile
from ...forms import SimulateForm
from ...management.base import GeneratorCommand
from ...photonics import simulate_interrupted_train, simulate_pulse_train
from ...pipeline import simulate

DEFAULT_ANALOG_PULSES = 10_000
DEFAULT_TRANSITION_PULSES = 5_000_000


class Command(GeneratorCommand):
    help = "Simulate the generator and write raw, extracted or distilled bits to a bit file."
    form_class = SimulateForm

    def add_command_arguments(self, parser):
        parser.add_argument('--bits', type=int, help="Number of pulses (raw bits) to simulate.")
        parser.add_argument('--out', help="Bit file to write.")
        parser.add_argument('--k', type=int, help="Distillation factor for the distilled stage (default 1).")
        parser.add_argument('--stage', choices=['raw', 'extracted', 'distilled'],
                            help="Which stream goes to --out (default distilled).")
        parser.add_argument('--stdout-raw', action='store_true',
                            help="Write the stream's packed bytes to standard output without a header.")
        parser.add_argument('--phase-mode', choices=['fully-random', 'langevin-field'], help="Phase process.")
        parser.add_argument('--hangover-mode', choices=['iid', 'correlated'], help="Hangover model.")
        parser.add_argument('--bias', type=float, help="Raw-bit excess the feedback loop settles at.")
        parser.add_argument('--vref-offset', type=float, help="Start-up reference offset from centre, mV.")
        parser.add_argument('--no-feedback', action='store_true', help="Hold the reference level fixed.")
        parser.add_argument('--pulses-csv', help="Also write per-pulse analog samples as CSV.")
        parser.add_argument('--samples-f32', help="Also write analog samples as little-endian float32.")
        parser.add_argument('--analog-pulses', type=int,
                            help=f"Pulses in the analog outputs (default {DEFAULT_ANALOG_PULSES}).")
        parser.add_argument('--interrupted-train', type=int,
                            help="Also emulate interrupted trains of this length and report per-class stats.")
        parser.add_argument('--scope-sigma', type=float,
                            help="Oscilloscope noise added to the interrupted-train emulation, mV.")
        parser.add_argument('--transition-csv',
                            help="Also emulate the comparator x-y measurement and write its transition curve as CSV.")
        parser.add_argument('--transition-pulses', type=int,
                            help=f"Pulses in the x-y measurement (default {DEFAULT_TRANSITION_PULSES}).")
        parser.add_argument('--splitter-sigma', type=float,
                            help="Noise the analog splitter adds to the x-y record, mV; removed from the fitted width.")

    def configure(self, config, options):
        config = config.with_simulation(
            n_pulses=options.get('bits'),
            phase_mode=options.get('phase_mode') or None,
            hangover_mode=options.get('hangover_mode') or None,
            bias_target=options.get('bias'),
        )
        comparator = {}
        if options.get('no_feedback'):
            comparator['feedback'] = False
        if options.get('vref_offset') is not None:
            comparator['v_ref_offset'] = options['vref_offset']
        if comparator:
            config = config.model_copy(update={'comparator': config.comparator.model_copy(update=comparator)})
        return config.validated()

    def select_stage(self, run, stage, k):
        if stage == 'raw':
            return run.raw
        if stage == 'extracted':
            return run.extracted
        return distill(run.extracted, k, self.chunk_bits)

    def run(self, config, options):
        config = self.configure(config, options)
        stage = options.get('stage') or 'distilled'
        k = options.get('k') or 1
        run = simulate(config, self.workers)
        stream = self.select_stage(run, stage, k)
        outputs = dict(run.summary(), stage=stage, k=k if stream.kind == BitKind.DISTILLED else 1,
                       length=stream.length)
        if options.get('out'):
            write_bitfile(stream, options['out'])
            outputs['out'] = options['out']
        elif options.get('stdout_raw'):
            self.write_raw(stream.to_bytes())
        if options.get('pulses_csv') or options.get('samples_f32'):
            train = simulate_pulse_train(
                config.simulation, config.noise, np.random.default_rng([config.simulation.rng_seed, 1]),
                process=config.phase_process, n_pulses=options.get('analog_pulses') or DEFAULT_ANALOG_PULSES,
            )
            if options.get('pulses_csv'):
                train.to_csv(options['pulses_csv'])
                outputs['pulses_csv'] = options['pulses_csv']
            if options.get('samples_f32'):
                train.to_float32(options['samples_f32'])
                outputs['samples_f32'] = options['samples_f32']
        if options.get('interrupted_train'):
            stats = simulate_interrupted_train(
                config.simulation, config.noise, options['interrupted_train'],
                np.random.default_rng([config.simulation.rng_seed, 2]),
                scope_sigma=options.get('scope_sigma') or 0.0,
            )
            outputs['interrupted'] = stats.as_dict()
            outputs['deembedded_sigma_vHO'] = stats.deembedded_hangover()
        if options.get('transition_csv'):
            fit = measure_transition(
                config, options.get('transition_pulses') or DEFAULT_TRANSITION_PULSES,
                np.random.default_rng([config.simulation.rng_seed, 3]), options.get('splitter_sigma') or 0.0,
            )
            fit.curve.to_csv(options['transition_csv'])
            outputs['transition'] = {
                'sigma_ref': fit.sigma,
                'raw_sigma': fit.raw_sigma,
                'center': fit.center,
                'step_limited': fit.step_limited,
                'csv': options['transition_csv'],
            }
        return outputs
