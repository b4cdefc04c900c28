from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from symbolic.experiment import aggregate, format_table, read_records, write_summary_csv

from ._common import exit_codes


class Command(BaseCommand):
    help = 'Summarizes a results JSONL file: recovery rate and mean steps to solve'

    def add_arguments(self, parser):
        parser.add_argument('results', help='Results JSONL file written by the run command')
        parser.add_argument('--out', help='Also write the summary as CSV')
        parser.add_argument('--by', choices=['experiment', 'benchmark'], default='experiment')

    def handle(self, *args, **options):
        path = Path(options['results'])
        if not path.exists():
            raise CommandError(f"{path} does not exist")
        with exit_codes():
            rows = aggregate(read_records(path), by=options['by'])
        self.stdout.write(format_table(rows))
        if options['out']:
            write_summary_csv(rows, options['out'])
            self.stdout.write(self.style.SUCCESS(f"Wrote summary to {options['out']}"))
