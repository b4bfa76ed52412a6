from ...forms import BenchForm
from ...management.base import GeneratorCommand
from ...pipeline import MIN_BENCH_BITS, throughput_bench


class Command(GeneratorCommand):
    help = "Time the simulate -> digitize -> extract chain."
    form_class = BenchForm

    def add_command_arguments(self, parser):
        parser.add_argument('--bits', type=int, help=f"Pulses per repetition (default {MIN_BENCH_BITS}).")
        parser.add_argument('--repeat', type=int, help="Repetitions; the fastest is reported (default 1).")
        parser.add_argument('--allow-small', action='store_true',
                            help=f"Accept fewer than {MIN_BENCH_BITS} bits (rates are then not representative).")

    def run(self, config, options):
        n_bits = options.get('bits') or MIN_BENCH_BITS
        results = [
            throughput_bench(config, n_bits, self.workers, enforce_minimum=not options.get('allow_small'))
            for _ in range(options.get('repeat') or 1)
        ]
        best = min(results, key=lambda result: result.seconds)
        return dict(best.as_dict(), repeat=len(results))

    def render(self, outputs):
        self.stdout.write(
            f"{outputs['n_bits']} bits on {outputs['workers']} workers: {outputs['seconds']:.3f} s, "
            f"{outputs['bits_per_second']:.3g} bits/s (extraction alone {outputs['extraction_bits_per_second']:.3g})"
        )
