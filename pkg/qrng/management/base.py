"""Shared plumbing of the generator commands.

Every command validates its options with a form, resolves the structured
config, runs, and reports either as text or as JSON (``--json``). Generator
errors become ``CommandError`` with exit code 1 (configuration), 2 (I/O) or
3 (numerical); each invocation is stored as a ``RunRecord`` when enabled.
"""
import json
import logging

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from django.db import DatabaseError, transaction

from ..config import dump_config, resolve_config
from ..exceptions import ConfigurationError, QrngError, exit_code_for
from ..forms import CommonForm
from ..models import RunRecord
from ..pipeline import resolve_chunk_pulses, resolve_workers

logger = logging.getLogger('qrng.commands')


def _jsonable(outputs):
    # NaN and infinities are not valid JSON column values.
    return json.loads(json.dumps(outputs, default=str), parse_constant=lambda _: None)


class GeneratorCommand(BaseCommand):
    form_class = CommonForm
    requires_system_checks = []
    requires_migrations_checks = False

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        # Bad flags raise CommandError (exit 1) instead of exiting with argparse's code 2.
        parser.called_from_command_line = False
        return parser

    def add_arguments(self, parser):
        parser.add_argument('--seed', type=int, help="Generator seed (0 <= seed < 2**64); overrides the config file.")
        parser.add_argument('--config', help="Structured config file (JSON). Default: qrng.json in QRNG_CONFIG_DIR.")
        parser.add_argument('--json', action='store_true', help="Write machine-readable JSON instead of text.")
        parser.add_argument('--workers', type=int, help="Worker threads; 0 uses every core. Default: QRNG_WORKERS.")
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def form_data(self, options):
        return {key: value for key, value in options.items() if value is not None}

    def handle(self, *args, **options):
        form = self.form_class(data=self.form_data(options))
        if not form.is_valid():
            raise CommandError(str(ConfigurationError("invalid options", form.violations())), returncode=1)
        cleaned = form.cleaned_data
        record = self.record = None
        self.raw_written = False
        try:
            config = resolve_config(cleaned.get('config') or None)
            if cleaned.get('seed') is not None:
                config = config.with_simulation(rng_seed=cleaned['seed'])
            self.workers = resolve_workers(cleaned.get('workers'))
            record = self.record = self.start_record(config)
            logger.info("%s started (seed %d, %d workers)", self.name, config.simulation.rng_seed, self.workers)
            outputs = self.run(config, cleaned)
        except (QrngError, OSError) as exc:
            code = exit_code_for(exc)
            self.finish_record(record, code, message=str(exc))
            logger.info("%s failed with exit code %d", self.name, code)
            raise CommandError(str(exc), returncode=code) from exc
        self.finish_record(record, 0, outputs)
        logger.info("%s finished", self.name)
        if self.raw_written:
            # Standard output carries the bit stream only.
            logger.info("%s: %s", self.name, outputs)
        elif options.get('json'):
            self.stdout.write(json.dumps(_jsonable(outputs), indent=2, sort_keys=True))
        elif outputs is not None:
            self.render(outputs)

    @property
    def name(self):
        return self.__module__.rsplit('.', 1)[-1]

    def run(self, config, options):
        raise NotImplementedError

    def render(self, outputs):
        for key, value in outputs.items():
            self.stdout.write(f"{key}: {value}")

    def write_raw(self, data):
        """Headerless bytes to standard output, for piping into external test suites."""
        stream = self.stdout._out
        getattr(stream, 'buffer', stream).write(data)
        self.raw_written = True

    @property
    def chunk_bits(self):
        return resolve_chunk_pulses()

    def start_record(self, config):
        if not settings.QRNG_RECORD_RUNS:
            return None
        try:
            with transaction.atomic():
                return RunRecord.objects.create(
                    command=self.name,
                    seed=config.simulation.rng_seed,
                    config=json.loads(dump_config(config)),
                )
        except DatabaseError as exc:
            logger.warning("run not recorded (%s); run 'manage.py migrate --run-syncdb' to enable", exc)
            return None

    def finish_record(self, record, exit_code, outputs=None, message=''):
        if record is None:
            return
        try:
            with transaction.atomic():
                record.finish(exit_code, _jsonable(outputs) if outputs else None, message)
        except DatabaseError as exc:
            logger.warning("run record not updated: %s", exc)
