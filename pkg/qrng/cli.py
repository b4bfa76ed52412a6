"""Entry point for the generator subcommands.

``run(argv)`` takes the arguments after the program name, runs exactly one
subcommand and returns its exit code: 0 on success, 1 for configuration
errors, 2 for I/O errors, 3 for numerical failures.
"""
import os
import sys

COMMANDS = ('simulate', 'extract', 'report', 'autocorr', 'battery', 'heterodyne', 'bench', 'export')
PROG = 'manage.py'


def usage():
    return f"usage: {PROG} {{{','.join(COMMANDS)}}} [options]; '{PROG} <command> --help' lists the flags"


def run(argv, stdout=None, stderr=None):
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'core.settings')
    import django
    from django.core.management import load_command_class
    from django.core.management.base import CommandError, OutputWrapper

    stderr = stderr or sys.stderr
    argv = list(argv)
    if not argv or argv[0] not in COMMANDS:
        stderr.write(f"unknown command {argv[0]!r}\n" if argv else "no command given\n")
        stderr.write(usage() + '\n')
        return 1
    django.setup()
    command = load_command_class('qrng', argv[0])
    if stdout is not None:
        command.stdout = OutputWrapper(stdout)
    command.stderr = OutputWrapper(stderr)
    try:
        command.run_from_argv([PROG] + argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    except CommandError as exc:
        # Raised while parsing flags, before the command runs.
        stderr.write(f"{exc}\n")
        return exc.returncode
    return 0
