from contextlib import contextmanager

from django.core.management.base import CommandError

from symbolic.exceptions import ConfigError, InfeasibleStep, LibraryError

EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3


@contextmanager
def exit_codes():
    """Turn engine errors into CommandError with the documented exit codes."""
    try:
        yield
    except InfeasibleStep as exc:
        raise CommandError(f"infeasible constraints: {exc}", returncode=EXIT_INFEASIBLE) from exc
    except (ConfigError, LibraryError) as exc:
        raise CommandError(f"invalid configuration: {exc}", returncode=EXIT_CONFIG) from exc


def add_config_arguments(parser):
    parser.add_argument('config', help='Experiment config file or bundled preset name')
    parser.add_argument(
        '--override',
        action='append',
        default=[],
        metavar='KEY=VALUE',
        help='Dotted-path override applied before validation, e.g. trainer.max_iterations=400',
    )
    parser.add_argument('--seed', type=int, help='Run a single seed instead of the configured list')


def config_overrides(options):
    overrides = list(options['override'])
    if options.get('seed') is not None:
        overrides.append(f"seeds=[{options['seed']}]")
    return overrides
