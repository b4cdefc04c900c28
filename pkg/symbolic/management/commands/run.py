from django.core.management.base import BaseCommand

from symbolic.experiment import aggregate, format_table, load_config, run_experiment, validate_config
from symbolic.models import ExperimentRun, RunResult

from ._common import add_config_arguments, config_overrides, exit_codes


class Command(BaseCommand):
    help = 'Runs an experiment config over its benchmarks and seeds, appending results as JSON lines'

    def add_arguments(self, parser):
        add_config_arguments(parser)
        parser.add_argument('--out', help='Results JSONL file (default: RESULTS_DIR/<name>.jsonl)')
        parser.add_argument('--dump-batches', metavar='DIR', help='Write every sampled batch to DIR as JSON lines')
        parser.add_argument('--workers', type=int, help='Parallel (benchmark, seed) runs')
        parser.add_argument('--no-db', action='store_true', help='Skip storing results in the database')

    def handle(self, *args, **options):
        with exit_codes():
            config = load_config(options['config'], config_overrides(options))
            validate_config(config)

            experiment = None if options['no_db'] else ExperimentRun.for_config(config)

            def on_record(record):
                if experiment is not None:
                    RunResult.from_record(experiment, record)
                style = self.style.SUCCESS if record.solved else self.style.WARNING
                self.stdout.write(style(
                    f"{record.benchmark} seed {record.seed}: "
                    f"{'solved' if record.solved else 'unsolved'} at step {record.steps_to_solve}, "
                    f"best {record.best_infix} (reward {record.best_reward:.6f})"
                ))

            records = run_experiment(
                config,
                on_record=on_record,
                workers=options['workers'],
                dump_dir=options['dump_batches'],
                out=options['out'],
            )

        self.stdout.write(format_table(aggregate(records)))
        self.stdout.write(self.style.SUCCESS(
            f"Wrote {len(records)} runs to {options['out'] or config.results_path}"
        ))
