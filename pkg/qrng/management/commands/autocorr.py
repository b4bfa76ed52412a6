from ...domain import DistrustLevel
from ...extractor import read_bitfile
from ...forms import AutocorrForm
from ...management.base import GeneratorCommand
from ...metrology import predictability_report
from ...stats import autocorrelation, write_autocorr_csv

DEFAULT_KMAX = 10


class Command(GeneratorCommand):
    help = "Autocorrelation of a bit file at lags 1..kmax, next to the predictability bounds."
    form_class = AutocorrForm

    def add_command_arguments(self, parser):
        parser.add_argument('--in', dest='input', help="Bit file, usually extracted bits.")
        parser.add_argument('--kmax', type=int, help=f"Largest lag (default {DEFAULT_KMAX}).")
        parser.add_argument('--out', help="CSV file for the per-lag estimates.")
        parser.add_argument('--epsilon', type=float,
                            help="Per-bit excess predictability for the 'bound' column (e.g. the raw bias).")

    def run(self, config, options):
        x = read_bitfile(options['input'])
        k_max = options.get('kmax') or DEFAULT_KMAX
        results = autocorrelation(x, k_max, options.get('epsilon'), self.workers, self.chunk_bits)
        level_bounds = {
            level.value: predictability_report(config.noise, level, 1).epsilon_max
            for level in DistrustLevel
        }
        if options.get('out'):
            write_autocorr_csv(results, options['out'], level_bounds)
        return {
            'input': options['input'],
            'n_bits': x.length,
            'out': options.get('out') or None,
            'lags': [
                {'k': r.k, 'gamma_hat': r.gamma_hat, 'four_gamma_hat': r.four_gamma,
                 'sigma_stat': r.sigma_stat, 'bound': r.bound}
                for r in results
            ],
            'epsilon_max': level_bounds,
        }

    def render(self, outputs):
        self.stdout.write(f"{outputs['n_bits']} bits from {outputs['input']}")
        self.stdout.write(f"{'k':>3} {'4*gamma_hat':>13} {'4*sigma_stat':>13}")
        for lag in outputs['lags']:
            self.stdout.write(f"{lag['k']:>3} {lag['four_gamma_hat']:>13.3e} {4 * lag['sigma_stat']:>13.3e}")
        if outputs['out']:
            self.stdout.write(f"written to {outputs['out']}")
