from django.core.management.base import BaseCommand

from symbolic.experiment import load_config, validate_config

from ._common import add_config_arguments, config_overrides, exit_codes


class Command(BaseCommand):
    help = 'Checks an experiment config: schema, priors, constraints and feasibility of the first step'

    def add_arguments(self, parser):
        add_config_arguments(parser)

    def handle(self, *args, **options):
        with exit_codes():
            config = load_config(options['config'], config_overrides(options))
            report = validate_config(config)
        for benchmark, names in report.items():
            self.stdout.write(f"{benchmark}: {', '.join(names) or 'no constraints'}")
        self.stdout.write(self.style.SUCCESS(
            f"{config.name} ({config.method}) is valid: "
            f"{len(config.benchmarks)} benchmarks x {len(config.seeds)} seeds, hash {config.config_hash}"
        ))
