import argparse
import logging
import os
import sys

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError, DjangoHelpFormatter

from alignment.exceptions import CanonPoseError
from alignment.training import configure_threads

logger = logging.getLogger(__name__)


class PipelineHelpFormatter(DjangoHelpFormatter, argparse.ArgumentDefaultsHelpFormatter):
    pass


class PipelineCommand(BaseCommand):
    """
    Base for the canon_pose subcommands.

    Adds --threads and --quiet, shows defaults in --help, and turns library
    errors into CommandError carrying the exit code of the error class
    (1 usage, 2 data/format, 3 numeric).
    """

    requires_system_checks = []

    def create_parser(self, prog_name, subcommand, **kwargs):
        kwargs.setdefault('formatter_class', PipelineHelpFormatter)
        return super().create_parser(prog_name, subcommand, **kwargs)

    def add_arguments(self, parser):
        parser.add_argument(
            '--threads', type=int, default=None,
            help='Worker threads; 0 uses every core, 1 enables determinism mode '
                 '(default: CANON_POSE_THREADS)',
        )
        parser.add_argument('--quiet', action='store_true', help='Only log warnings and hide progress bars')
        self.add_pipeline_arguments(parser)

    def add_pipeline_arguments(self, parser):
        pass

    def resolve_threads(self, options) -> int:
        threads = options.get('threads')
        if threads is None:
            threads = settings.CANON_POSE_THREADS
        if threads < 0:
            raise CommandError(f"--threads must be non-negative, got {threads}", returncode=1)
        return threads

    def handle(self, *args, **options):
        self.quiet = options.get('quiet', False)
        self.progress = not self.quiet and sys.stderr.isatty()
        if self.quiet:
            logging.getLogger('alignment').setLevel(logging.WARNING)
        self.threads = self.resolve_threads(options)
        try:
            configure_threads(self.threads)
            self.run(*args, **options)
        except CanonPoseError as e:
            raise CommandError(str(e), returncode=e.exit_code) from e
        except OSError as e:
            raise CommandError(str(e), returncode=2) from e

    def run(self, *args, **options):
        raise NotImplementedError('subclasses of PipelineCommand must provide a run() method')

    def success(self, message: str) -> None:
        if not self.quiet:
            self.stdout.write(self.style.SUCCESS(message))

    @property
    def workers(self) -> int:
        """Thread count for dataset builders."""
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)
