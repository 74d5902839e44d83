"""
The canon_pose executable.

    python -m canon_pose <subcommand> [flags]

Each subcommand is an `alignment` management command. Exit codes: 0 success,
1 usage or configuration error, 2 data or format error, 3 numeric failure
during training. Errors are reported on stderr as one line, `ERROR <code>: ...`.
"""

import logging
import os
import sys
from typing import Optional, Sequence

import django
from django.core.management import load_command_class
from django.core.management.base import CommandError

logger = logging.getLogger(__name__)

PROG = 'canon_pose'

SUBCOMMANDS = {
    'prepare-mnist': 'prepare_mnist',
    'synth': 'synth',
    'train': 'train',
    'eval': 'eval',
    'render': 'render',
    'infer': 'infer',
}

USAGE = (
    f"usage: {PROG} {{{','.join(SUBCOMMANDS)}}} [flags]\n"
    f"Run `{PROG} <subcommand> --help` for the flags of one subcommand.\n"
)


def report_error(code: int, message: str) -> int:
    message = ' '.join(str(message).split())
    sys.stderr.write(f"ERROR {code}: {message}\n")
    return code


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Dispatch one subcommand and return the process exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'canon_pose.settings.local')
    django.setup()

    if not argv:
        sys.stderr.write(USAGE)
        return report_error(1, 'missing subcommand')
    if argv[0] in ('-h', '--help'):
        sys.stdout.write(USAGE)
        return 0

    subcommand, rest = argv[0], argv[1:]
    if subcommand not in SUBCOMMANDS:
        return report_error(1, f"unknown subcommand {subcommand!r}; choose one of {', '.join(SUBCOMMANDS)}")

    command = load_command_class('alignment', SUBCOMMANDS[subcommand])
    parser = command.create_parser(PROG, subcommand)
    try:
        options = vars(parser.parse_args(rest))
        args = options.pop('args', ())
        command.execute(*args, **options)
    except SystemExit as e:
        # --help exits through argparse
        return e.code if isinstance(e.code, int) else 0
    except CommandError as e:
        return report_error(e.returncode, e)
    return 0


def main() -> None:
    sys.exit(run())
