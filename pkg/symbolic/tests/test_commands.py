import json
import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, override_settings

from symbolic.experiment import RunRecord, append_record, read_records
from symbolic.models import ExperimentRun, RunResult

SMALL = {
    "version": 1,
    "name": "smoke",
    "benchmarks": ["Nguyen-1"],
    "seeds": [0],
    "trainer": {"batch_size": 8, "max_iterations": 2},
    "policy": {"hidden_width": 8},
    "constraints": [{"constraint": "length", "min": 2, "max": 16}],
}


class CommandTestMixin:
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)

    def write_config(self, data, name="config.json"):
        path = self.dir / name
        path.write_text(json.dumps(data))
        return str(path)

    def call(self, *args):
        out = StringIO()
        call_command(*args, stdout=out)
        return out.getvalue()


class RunCommandTests(CommandTestMixin, TestCase):
    def test_run_stores_results(self):
        config = self.write_config(SMALL)
        out_path = self.dir / "results.jsonl"
        output = self.call('run', config, '--out', str(out_path), '--override', 'trainer.max_iterations=1')
        self.assertIn("Nguyen-1 seed 0", output)
        self.assertIn("recovery_rate", output)
        records = read_records(out_path)
        self.assertEqual(len(records), 1)
        self.assertEqual(records[0].max_iterations, 1)
        self.assertEqual(ExperimentRun.objects.count(), 1)
        self.assertEqual(RunResult.objects.get().benchmark, "Nguyen-1")

    def test_seed_flag_and_no_db(self):
        config = self.write_config(SMALL)
        out_path = self.dir / "results.jsonl"
        self.call('run', config, '--out', str(out_path), '--seed', '3', '--no-db')
        self.assertEqual([r.seed for r in read_records(out_path)], [3])
        self.assertEqual(RunResult.objects.count(), 0)

    def test_invalid_config_exits_with_2(self):
        config = self.write_config(dict(SMALL, version=9))
        with self.assertRaises(CommandError) as caught:
            self.call('run', config, '--out', str(self.dir / "r.jsonl"))
        self.assertEqual(caught.exception.returncode, 2)

    def test_infeasible_constraints_exit_with_3(self):
        data = dict(SMALL, constraints=[{"constraint": "type_unit", "positions": {"0": []}}])
        config = self.write_config(data)
        with self.assertRaises(CommandError) as caught:
            self.call('run', config, '--out', str(self.dir / "r.jsonl"))
        self.assertEqual(caught.exception.returncode, 3)
        self.assertEqual(ExperimentRun.objects.count(), 0)

    def test_infeasible_step_in_worker_exits_with_3(self):
        constraints = SMALL["constraints"] + [{"constraint": "type_unit", "positions": {"1": []}}]
        config = self.write_config(dict(SMALL, seeds=[0, 1], constraints=constraints))
        with self.assertRaises(CommandError) as caught:
            self.call('run', config, '--out', str(self.dir / "r.jsonl"), '--workers', '2', '--no-db')
        self.assertEqual(caught.exception.returncode, 3)


class ValidateConfigCommandTests(CommandTestMixin, SimpleTestCase):
    def test_preset(self):
        output = self.call('validate_config', 'all_subtree_length')
        self.assertIn("is valid", output)
        self.assertIn("Nguyen-12: trigonometric", output)

    def test_unknown_benchmark(self):
        config = self.write_config(dict(SMALL, benchmarks=["Nguyen-99"]))
        with self.assertRaises(CommandError) as caught:
            self.call('validate_config', config)
        self.assertEqual(caught.exception.returncode, 2)

    def test_bad_override(self):
        with self.assertRaises(CommandError) as caught:
            self.call('validate_config', 'none', '--override', 'trainer.batch_size=0')
        self.assertEqual(caught.exception.returncode, 2)


class SummarizeCommandTests(CommandTestMixin, SimpleTestCase):
    def test_summary_and_csv(self):
        path = self.dir / "runs.jsonl"
        for seed, solved in enumerate([True, False]):
            append_record(path, RunRecord(
                config_hash="c" * 16, experiment="smoke", method="dsr", benchmark="Nguyen-1", seed=seed,
                solved=solved, steps_to_solve=4 if solved else 10, max_iterations=10, best_reward=0.9,
                best_expression=["x1"], best_infix="x1", reward_trace=[0.9], wall_time=0.0,
            ))
        csv_path = self.dir / "summary.csv"
        output = self.call('summarize', str(path), '--out', str(csv_path), '--by', 'benchmark')
        self.assertIn("Nguyen-1", output)
        self.assertIn("50.0%", output)
        self.assertIn("7.0", output)
        self.assertTrue(csv_path.exists())

    def test_missing_file(self):
        with self.assertRaises(CommandError):
            self.call('summarize', str(self.dir / "missing.jsonl"))


class EnumerateCommandTests(CommandTestMixin, SimpleTestCase):
    def test_small_library(self):
        output = self.call('enumerate', '--library', '+:2 x:0', '--max-len', '3')
        self.assertIn("0.5000000000  x\n", output)
        self.assertIn("0.5000000000  + x x", output)
        self.assertIn("2 reachable sequences", output)

    def test_benchmark_library_with_config(self):
        output = self.call('enumerate', '--benchmark', 'Nguyen-1', '--config', 'lexicographical',
                           '--max-len', '4', '--top', '3')
        self.assertIn("reachable sequences", output)

    def test_bad_library(self):
        with self.assertRaises(CommandError) as caught:
            self.call('enumerate', '--library', '+ x:0', '--max-len', '3')
        self.assertEqual(caught.exception.returncode, 2)

    @override_settings(SYMBOLIC_SEARCH={"ENUMERATION_LIMIT": 10})
    def test_too_large(self):
        with self.assertRaises(CommandError):
            self.call('enumerate', '--library', '+:2 sin:1 x:0', '--max-len', '7')
