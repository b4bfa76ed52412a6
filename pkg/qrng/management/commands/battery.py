from ...extractor import BitStream, read_bitfile
from ...forms import BatteryForm
from ...management.base import GeneratorCommand
from ...stats import MIN_BATTERY_BITS, battery_failure_rates, mini_battery


class Command(GeneratorCommand):
    help = "Monobit, block-frequency, runs, serial and longest-run tests on a bit file."
    form_class = BatteryForm

    def add_command_arguments(self, parser):
        parser.add_argument('--in', dest='input', help="Bit file to test.")
        parser.add_argument('--sequences', type=int,
                            help=f"Split the file into this many equal sequences (each at least "
                                 f"{MIN_BATTERY_BITS} bits) and report per-test failure rates.")

    def split(self, x, sequences):
        size = x.length // sequences
        for n in range(sequences):
            yield BitStream.from_bits(x.slice_bits(n * size, (n + 1) * size), x.kind, x.k)

    def run(self, config, options):
        x = read_bitfile(options['input'])
        sequences = options.get('sequences') or 1
        battery_runs = [
            mini_battery(part, self.chunk_bits) for part in (self.split(x, sequences) if sequences > 1 else [x])
        ]
        outputs = {
            'input': options['input'],
            'n_bits': x.length,
            'sequences': sequences,
            'tests': [
                {'test': outcome.name, 'p_value': outcome.p_value, 'verdict': outcome.verdict.value}
                for outcome in battery_runs[0]
            ],
        }
        if sequences > 1:
            outputs['failure_rates'] = [
                {'test': rate.test, 'not_passed': rate.not_passed, 'runs': rate.runs,
                 'rate': rate.rate, 'p_value': rate.p_value, 'consistent': rate.consistent()}
                for rate in battery_failure_rates(battery_runs)
            ]
        return outputs

    def render(self, outputs):
        label = "first sequence" if outputs['sequences'] > 1 else f"{outputs['n_bits']} bits"
        self.stdout.write(f"{outputs['input']} ({label})")
        for test in outputs['tests']:
            self.stdout.write(f"  {test['test']:<16} p = {test['p_value']:.6f}  {test['verdict']}")
        for rate in outputs.get('failure_rates', []):
            self.stdout.write(
                f"  {rate['test']:<16} {rate['not_passed']}/{rate['runs']} not passed "
                f"(binomial p = {rate['p_value']:.3g})"
            )
