from django.core.management.base import BaseCommand, CommandError

from symbolic.constraints import build_constraint_set
from symbolic.exceptions import EnumerationTooLarge, LibraryError
from symbolic.experiment import load_config
from symbolic.library import build_library
from symbolic.policy import UniformPolicy
from symbolic.priors import build_prior_set
from symbolic.sampler import Sampler
from symbolic.sr_task import get_benchmark

from ._common import exit_codes


def parse_library(text):
    """``"+:2 sin:1 x:0"`` -> token descriptors."""
    spec = []
    for item in text.split():
        symbol, _, arity = item.rpartition(':')
        if not symbol or not arity.isdigit():
            raise LibraryError(f"library item {item!r} must look like symbol:arity")
        spec.append((symbol, int(arity)))
    return spec


class Command(BaseCommand):
    help = 'Prints the exact distribution of the untrained policy under a config\'s priors and constraints'

    def add_arguments(self, parser):
        source = parser.add_mutually_exclusive_group(required=True)
        source.add_argument('--library', help='Tokens as symbol:arity pairs, e.g. "+:2 sin:1 x:0"')
        source.add_argument('--benchmark', help='Use the library of a registered benchmark')
        parser.add_argument('--config', help='Take priors and constraints from this config or preset')
        parser.add_argument('--override', action='append', default=[], metavar='KEY=VALUE')
        parser.add_argument('--max-len', type=int, required=True)
        parser.add_argument('--top', type=int, default=20, help='Print the N most probable sequences')

    def handle(self, *args, **options):
        with exit_codes():
            if options['library']:
                library = build_library(parse_library(options['library']))
            else:
                library = get_benchmark(options['benchmark']).library()
            priors = constraints = None
            if options['config']:
                config = load_config(options['config'], options['override'])
                priors = build_prior_set(config.priors, library, config.base_dir)
                constraints = build_constraint_set(config.constraints, library)
            sampler = Sampler(
                UniformPolicy(len(library)), library, priors, constraints, length_cap=options['max_len']
            )
            try:
                distribution = sampler.enumerate_distribution(max_len=options['max_len'])
            except EnumerationTooLarge as exc:
                raise CommandError(str(exc)) from exc

        ranked = sorted(distribution.items(), key=lambda item: (-item[1], item[0]))
        for sequence, probability in ranked[:options['top']]:
            self.stdout.write(f"{probability:.10f}  {' '.join(library.decode(sequence))}")
        self.stdout.write(self.style.SUCCESS(
            f"{len(distribution)} reachable sequences, total probability {distribution.total:.12f}, "
            f"lost to dead ends {distribution.lost_mass:.3g}"
        ))
