from ...extractor import distill, extract, read_bitfile, write_bitfile
from ...forms import ExtractForm
from ...management.base import GeneratorCommand


class Command(GeneratorCommand):
    help = "Run the parity extractor over a raw bit file, then keep every k-th extracted bit."
    form_class = ExtractForm

    def add_command_arguments(self, parser):
        parser.add_argument('--in', dest='input', help="Raw bit file written by 'simulate --stage raw'.")
        parser.add_argument('--out', help="Bit file to write.")
        parser.add_argument('--k', type=int, help="Distillation factor; 1 writes the extracted stream.")
        parser.add_argument('--x0', type=int, help="Initial state of the parity machine (0 or 1, default 0).")
        parser.add_argument('--stdout-raw', action='store_true',
                            help="Write the packed bytes to standard output without a header.")

    def run(self, config, options):
        raw = read_bitfile(options['input'])
        k = options.get('k') or 1
        x = extract(raw, options.get('x0') or 0, self.workers)
        stream = x if k == 1 else distill(x, k, self.chunk_bits)
        outputs = {
            'input': options['input'],
            'raw_length': raw.length,
            'raw_mean': raw.ones() / raw.length if raw.length else None,
            'k': k,
            'length': stream.length,
            'mean': stream.ones() / stream.length if stream.length else None,
        }
        if options.get('out'):
            write_bitfile(stream, options['out'])
            outputs['out'] = options['out']
        else:
            self.write_raw(stream.to_bytes())
        return outputs
