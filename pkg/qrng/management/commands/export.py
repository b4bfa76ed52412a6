from ...extractor import read_bitfile
from ...forms import ExportForm
from ...management.base import GeneratorCommand
from ...stats import EXPORT_FORMATS, export


class Command(GeneratorCommand):
    help = "Convert a bit file to a headerless format for external test suites."
    form_class = ExportForm

    def add_command_arguments(self, parser):
        parser.add_argument('--in', dest='input', help="Bit file to convert.")
        parser.add_argument('--format', choices=EXPORT_FORMATS,
                            help="ascii01: one '0'/'1' character per bit; rawbytes: packed bytes, LSB first.")
        parser.add_argument('--out', help="File to write.")
        parser.add_argument('--stdout-raw', action='store_true',
                            help="Write packed bytes to standard output instead (rawbytes layout).")

    def run(self, config, options):
        x = read_bitfile(options['input'])
        outputs = {'input': options['input'], 'n_bits': x.length, 'format': options['format']}
        if options.get('out'):
            export(x, options['format'], options['out'], self.chunk_bits)
            outputs['out'] = options['out']
        else:
            self.write_raw(x.to_bytes())
        return outputs
