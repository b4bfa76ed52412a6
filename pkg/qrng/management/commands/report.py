import csv
from pathlib import Path

from ...domain import DistrustLevel
from ...forms import ReportForm
from ...management.base import GeneratorCommand
from ...metrology import (
    DEFAULT_CONFIDENCE_SIGMAS,
    MEASURED_P1_MEAN,
    confidence_sweep,
    fit_arcsine_histogram,
    freshness_discrepancy,
    jitter_pvalue,
    jitter_sigma_multiple,
    mean_vc_discrepancy,
    predictability_table,
)
from ...models import PredictabilityRecord
from ...photonics import load_float32

DEFAULT_KS = (4, 6)
CSV_COLUMNS = (
    'distrust', 'k', 'n_sigmas', 'sigma_vc', 'vc_bound', 'dvphi_eff',
    'epsilon_max', 'epsilon_max_k', 'tail_fraction', 'freshness_low_ns', 'freshness_high_ns',
)


class Command(GeneratorCommand):
    help = "Predictability bounds per distrust level and k, with freshness times and optional checks."
    form_class = ReportForm

    def add_command_arguments(self, parser):
        parser.add_argument('--distrust', choices=[level.value for level in DistrustLevel] + ['all'],
                            help="Distrust level to report (default all).")
        parser.add_argument('--k', help="Comma-separated raw bits per output bit (default 4,6).")
        parser.add_argument('--sigmas', type=int,
                            help=f"Confidence multiplier on sigma_vc (default {DEFAULT_CONFIDENCE_SIGMAS}).")
        parser.add_argument('--csv', help="Also write the table rows as CSV.")
        parser.add_argument('--p1-mean', type=float,
                            help=f"Measured raw-bit mean; compares the <v_c> it implies (e.g. {MEASURED_P1_MEAN}).")
        parser.add_argument('--samples', help="float32 sample file to fit with the blurred arcsine law.")
        parser.add_argument('--bin-width', type=float, help="Histogram bin width for --samples, mV (default 4).")
        parser.add_argument('--jitter-tail', type=float,
                            help="Probability that one edge falls outside the timing window.")
        parser.add_argument('--jitter-traces', type=int, help="Number of recorded edges.")
        parser.add_argument('--jitter-observed', type=int, help="Edges observed outside the window (default 0).")

    def run(self, config, options):
        distrust = options.get('distrust') or 'all'
        levels = tuple(DistrustLevel) if distrust == 'all' else (DistrustLevel(distrust),)
        ks = tuple(options.get('k') or DEFAULT_KS)
        n_sigmas = options.get('sigmas') or DEFAULT_CONFIDENCE_SIGMAS
        reports = predictability_table(config.noise, levels, ks, n_sigmas, config.timing)
        outputs = {
            'n_sigmas': n_sigmas,
            'ks': list(ks),
            'rows': [report.as_dict() for report in reports],
            'confidence_sweep': {
                level.value: {str(n): value for n, value in confidence_sweep(config.noise, level, ks[0]).items()}
                for level in levels
            },
            'jitter_sigma_multiple': jitter_sigma_multiple(config.timing),
            'freshness_vs_measured': freshness_discrepancy(config.timing),
        }
        if self.record is not None:
            PredictabilityRecord.objects.bulk_create(
                [PredictabilityRecord.from_report(report, self.record) for report in reports]
            )
        if options.get('csv'):
            self.write_csv(reports, options['csv'])
            outputs['csv'] = options['csv']
        if options.get('p1_mean') is not None:
            outputs['mean_vc'] = mean_vc_discrepancy(config.noise, options['p1_mean'])
        if options.get('samples'):
            fit = fit_arcsine_histogram(load_float32(options['samples']), options.get('bin_width') or 4.0)
            outputs['arcsine_fit'] = {
                'center': fit.center,
                'two_dvphi': fit.two_dvphi,
                'blur': fit.blur,
                'chi2': fit.chi2,
                'dof': fit.dof,
                'p_value': fit.p_value,
            }
        if options.get('jitter_tail') is not None and options.get('jitter_traces'):
            outputs['jitter_pvalue'] = jitter_pvalue(
                options['jitter_tail'], options['jitter_traces'], options.get('jitter_observed') or 0
            )
        return outputs

    def write_csv(self, reports, path):
        with Path(path).open('w', newline='', encoding='utf-8') as handle:
            writer = csv.writer(handle, lineterminator='\n')
            writer.writerow(CSV_COLUMNS)
            for report in reports:
                fresh = report.freshness_ns
                writer.writerow([
                    report.distrust.value, report.k, report.confidence_sigmas,
                    f"{report.sigma_vc:.6g}", f"{report.vc_bound:.6g}", f"{report.dvphi_eff:.6g}",
                    f"{report.epsilon_max:.6g}", f"{report.epsilon_max_k:.6g}", f"{report.tail_fraction:.6g}",
                    f"{fresh.lower:.4f}", f"{fresh.upper:.4f}",
                ])

    def render(self, outputs):
        ks = outputs['ks']
        header = f"{'distrust':<20}{'sigma_vc (mV)':>14}" + ''.join(f"{f'eps_max^{k} (tau_f)':>26}" for k in ks)
        self.stdout.write(header)
        cells = {}
        for row in outputs['rows']:
            cells.setdefault(row['distrust'], {'sigma_vc': row['sigma_vc']})[row['k']] = row
        for distrust, row in cells.items():
            line = f"{distrust:<20}{row['sigma_vc']:>14.1f}"
            for k in ks:
                cell = row[k]
                line += f"{cell['epsilon_max_k']:>14.1e} ({cell['freshness_ns'][1]:5.1f} ns)"
            self.stdout.write(line)
        self.stdout.write(f"confidence: {outputs['n_sigmas']} sigma "
                          f"(tail {outputs['rows'][0]['tail_fraction']:.2g})")
        fresh = outputs['freshness_vs_measured']
        (low, high), (published_low, published_high) = fresh['computed'], fresh['measured']
        self.stdout.write(f"freshness k=1: [{low:.2f}, {high:.2f}] ns, published [{published_low:.2f}, "
                          f"{published_high:.2f}] ns (gap {fresh['gap_ns'][0]:+.2f} / {fresh['gap_ns'][1]:+.2f} ns)")
        for key in ('mean_vc', 'arcsine_fit', 'jitter_pvalue', 'csv'):
            if key in outputs:
                self.stdout.write(f"{key}: {outputs[key]}")
