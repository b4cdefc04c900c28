"""Experiment harness: configs, (benchmark, seed) runs, JSONL results, summaries.

A config is a JSON document::

    {
      "version": 1,
      "name": "all_lexicographical",
      "method": "dsr",                      # or "random_search"
      "benchmarks": ["Nguyen-1", "Nguyen-2"],
      "seeds": [0, 1, 2, 3, 4],
      "trainer": {"batch_size": 500, "max_iterations": 400},
      "policy": {"hidden_width": 32, "cell": "gru"},
      "priors": [{"prior": "soft_length", "loc": 10, "scale": 5}],
      "constraints": [{"constraint": "length", "min": 2, "max": 32}],
      "length_cap": 32,
      "output": "results/all_lexicographical.jsonl"
    }

Only ``version``, ``name``, ``benchmarks`` and ``seeds`` are required.
"""

import copy
import csv
import hashlib
import json
import logging
import multiprocessing
import os
import time
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from pathlib import Path

import django
import numpy as np
import torch

from .conf import search_setting
from .constraints import build_constraint_set, check_feasible_start, validate_sequence
from .exceptions import ConfigError, InfeasibleStep, SymbolicSearchError
from .policy import Trainer, TrainerConfig, init_policy
from .priors import build_prior_set
from .sampler import Sampler, dump_batch
from .sr_task import get_benchmark, load_registry, make_dataset, recovered, reward, to_infix

logger = logging.getLogger(__name__)

CONFIG_VERSION = 1
METHODS = ("dsr", "random_search")
# Rewards below this never come from a sequence that fits the training
# sample to the recovery threshold, so they skip the resample check.
CANDIDATE_REWARD = 1.0 / (1.0 + 1e-6)


@dataclass
class ExperimentConfig:
    name: str
    benchmarks: list
    seeds: list
    method: str = "dsr"
    priors: list = field(default_factory=list)
    constraints: list = field(default_factory=list)
    trainer: TrainerConfig = None
    hidden_width: int = None
    cell: str = None
    length_cap: int = None
    output: Path = None
    base_dir: Path = None
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def config_hash(self):
        return config_hash(self.raw)

    @property
    def results_path(self):
        if self.output is not None:
            return self.output
        return Path(search_setting("RESULTS_DIR")) / f"{self.name}.jsonl"


def config_hash(data):
    canonical = json.dumps(data, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def _parse_value(text):
    try:
        return json.loads(text)
    except ValueError:
        return text


def apply_overrides(data, overrides):
    """Apply ``key.path=value`` overrides; values are JSON when they parse."""
    data = copy.deepcopy(data)
    for override in overrides or ():
        if "=" not in override:
            raise ConfigError(f"override {override!r} must look like key=value")
        key, text = override.split("=", 1)
        parts = key.strip().split(".")
        node = data
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-object")
        node[parts[-1]] = _parse_value(text)
    return data


def parse_config(data, base_dir=None):
    if not isinstance(data, dict):
        raise ConfigError("experiment config must be a JSON object")
    version = data.get("version")
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version!r}; expected {CONFIG_VERSION}")
    for key in ("name", "benchmarks", "seeds"):
        if not data.get(key):
            raise ConfigError(f"config is missing {key!r}")
    method = data.get("method", "dsr")
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")
    seeds = data["seeds"]
    if not all(isinstance(seed, int) and not isinstance(seed, bool) and seed >= 0 for seed in seeds):
        raise ConfigError(f"seeds must be non-negative integers, got {seeds}")

    trainer_values = dict(data.get("trainer", {}))
    if method == "random_search":
        trainer_values["learning_rate"] = 0.0
    try:
        trainer = TrainerConfig(**trainer_values)
    except TypeError as exc:
        raise ConfigError(f"bad trainer section: {exc}") from None

    policy = data.get("policy", {})
    output = data.get("output")
    base_dir = Path(base_dir) if base_dir is not None else None
    if output is not None:
        output = Path(output)
    return ExperimentConfig(
        name=str(data["name"]),
        benchmarks=list(data["benchmarks"]),
        seeds=list(seeds),
        method=method,
        priors=list(data.get("priors", [])),
        constraints=list(data.get("constraints", [])),
        trainer=trainer,
        hidden_width=policy.get("hidden_width"),
        cell=policy.get("cell"),
        length_cap=data.get("length_cap"),
        output=output,
        base_dir=base_dir,
        raw=data,
    )


def resolve_config_path(name_or_path):
    """A config file path, or the name of a bundled preset."""
    path = Path(name_or_path)
    if path.exists():
        return path
    preset = Path(search_setting("PRESETS_DIR")) / f"{name_or_path}.json"
    if preset.exists():
        return preset
    raise ConfigError(f"no config file or preset named {name_or_path!r}")


def load_config(path, overrides=()):
    path = resolve_config_path(path)
    try:
        data = json.loads(Path(path).read_text())
    except ValueError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None
    return parse_config(apply_overrides(data, overrides), base_dir=Path(path).parent)


@dataclass
class RunSetup:
    benchmark: object
    library: object
    priors: object
    constraints: object


def build_setup(config, benchmark_name, registry=None):
    benchmark = get_benchmark(benchmark_name, registry)
    library = benchmark.library()
    priors = build_prior_set(config.priors, library, config.base_dir)
    constraints = build_constraint_set(config.constraints, library)
    return RunSetup(benchmark, library, priors, constraints)


def validate_config(config, registry=None):
    """Build every benchmark's priors and constraints and check that the
    empty prefix is feasible. Returns the constraint names per benchmark."""
    registry = registry if registry is not None else load_registry()
    report = {}
    for name in config.benchmarks:
        setup = build_setup(config, name, registry)
        check_feasible_start(setup.constraints)
        report[name] = setup.constraints.names
    return report


@dataclass
class RunRecord:
    config_hash: str
    experiment: str
    method: str
    benchmark: str
    seed: int
    solved: bool
    steps_to_solve: int
    max_iterations: int
    best_reward: float
    best_expression: list
    best_infix: str
    reward_trace: list
    wall_time: float

    def to_json(self):
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, line):
        return cls(**json.loads(line))


def run_single(config, benchmark_name, seed, dump_dir=None, registry=None):
    """One (benchmark, seed) run: sample, reward, check recovery, train."""
    started = time.perf_counter()
    setup = build_setup(config, benchmark_name, registry)
    library, benchmark = setup.library, setup.benchmark
    trainer_config = config.trainer
    policy = init_policy(library, config.hidden_width, seed=seed, cell=config.cell)
    trainer = Trainer(policy, trainer_config)
    sampler = Sampler(policy, library, setup.priors, setup.constraints, length_cap=config.length_cap)
    dataset = make_dataset(benchmark, seed)
    dump_path = None
    if dump_dir is not None:
        Path(dump_dir).mkdir(parents=True, exist_ok=True)
        dump_path = Path(dump_dir) / f"{config.name}_{benchmark.name}_seed{seed}.jsonl"

    logger.info("run start: %s %s seed=%d method=%s", config.name, benchmark.name, seed, config.method)
    best_reward, best_sequence = -1.0, None
    solved_sequence, steps = None, trainer_config.max_iterations
    trace = []
    for iteration in range(1, trainer_config.max_iterations + 1):
        try:
            records = sampler.sample_batch(trainer_config.batch_size, seed, iteration)
        except InfeasibleStep as exc:
            logger.error("%s %s seed=%d aborted: %s", config.name, benchmark.name, seed, exc)
            raise
        rewards = np.array([reward(library, r.sequence, dataset) for r in records])
        if dump_path is not None:
            dump_batch(dump_path, library, records, rewards)

        top = int(np.argmax(rewards))
        if rewards[top] > best_reward:
            best_reward, best_sequence = float(rewards[top]), records[top].sequence
        trace.append(best_reward)

        checked = set()
        for index in np.flatnonzero(rewards >= CANDIDATE_REWARD):
            key = tuple(records[index].sequence)
            if key in checked:
                continue
            checked.add(key)
            if recovered(library, records[index].sequence, benchmark, seed):
                solved_sequence = records[index].sequence
                break
        setup.constraints.after_batch([r.sequence for r in records])
        if solved_sequence is not None:
            steps = iteration
            break
        if trainer.optimizer is not None:
            _, stats = trainer.train_step(records, rewards)
            logger.debug(
                "%s seed=%d it=%d best=%.6f mean=%.4f loss=%.5f",
                benchmark.name,
                seed,
                iteration,
                best_reward,
                stats["mean_reward"],
                stats["loss"],
            )

    final = solved_sequence if solved_sequence is not None else best_sequence
    record = RunRecord(
        config_hash=config.config_hash,
        experiment=config.name,
        method=config.method,
        benchmark=benchmark.name,
        seed=seed,
        solved=solved_sequence is not None,
        steps_to_solve=steps,
        max_iterations=trainer_config.max_iterations,
        best_reward=1.0 if solved_sequence is not None else best_reward,
        best_expression=library.decode(final),
        best_infix=to_infix(library, final),
        reward_trace=trace,
        wall_time=time.perf_counter() - started,
    )
    if not validate_sequence(final, setup.constraints):
        logger.error("%s seed=%d: best expression %s violates the constraints", benchmark.name, seed, final)
    logger.info(
        "run finish: %s %s seed=%d solved=%s steps=%d best=%s",
        config.name,
        benchmark.name,
        seed,
        record.solved,
        steps,
        record.best_infix,
    )
    return record


def append_record(path, record):
    """Append one record and flush it to disk before returning."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a") as handle:
        handle.write(record.to_json() + "\n")
        handle.flush()
        os.fsync(handle.fileno())


def read_records(path):
    with Path(path).open() as handle:
        return [RunRecord.from_json(line) for line in handle if line.strip()]


def _init_worker():
    torch.set_num_threads(1)
    django.setup()


def run_experiment(config, on_record=None, workers=None, dump_dir=None, out=None, registry=None):
    """Run every (benchmark, seed) pair, appending each record to the
    results file as soon as it finishes.

    With ``workers > 1`` the runs execute in a process pool; this process
    stays the only writer of the results file and of ``on_record``.
    """
    registry = registry if registry is not None else load_registry()
    out = Path(out) if out is not None else config.results_path
    workers = workers or search_setting("WORKERS")
    jobs = [(benchmark, seed) for benchmark in config.benchmarks for seed in config.seeds]
    finished = {}

    def collect(job, record):
        append_record(out, record)
        if on_record is not None:
            on_record(record)
        finished[job] = record

    if workers <= 1 or len(jobs) == 1:
        for job in jobs:
            collect(job, run_single(config, *job, dump_dir=dump_dir, registry=registry))
    else:
        failure = None
        context = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, mp_context=context) as pool:
            futures = {
                pool.submit(run_single, config, *job, dump_dir=dump_dir, registry=registry): job
                for job in jobs
            }
            for future in as_completed(futures):
                if future.cancelled():
                    continue
                try:
                    record = future.result()
                except SymbolicSearchError as exc:
                    # finished runs are still written; queued ones are dropped
                    logger.error("%s seed %s failed: %s", *futures[future], exc)
                    if failure is None:
                        failure = exc
                        for pending in futures:
                            pending.cancel()
                    continue
                collect(futures[future], record)
        if failure is not None:
            raise failure
    return [finished[job] for job in jobs]


@dataclass
class SummaryRow:
    label: str
    method: str
    runs: int
    solved: int
    recovery_rate: float
    mean_steps: float


def aggregate(records, by="experiment"):
    """Recovery rate and mean steps to solve per experiment (or benchmark).

    Unsolved runs count at their iteration cap.
    """
    if not records:
        raise ConfigError("no records to aggregate")
    if by not in ("experiment", "benchmark"):
        raise ConfigError(f"cannot group by {by!r}")
    groups = OrderedDict()
    for record in records:
        key = (getattr(record, by), record.method)
        groups.setdefault(key, []).append(record)
    rows = []
    for (label, method), members in groups.items():
        solved = sum(1 for r in members if r.solved)
        steps = [r.steps_to_solve if r.solved else r.max_iterations for r in members]
        rows.append(
            SummaryRow(
                label=label,
                method=method,
                runs=len(members),
                solved=solved,
                recovery_rate=solved / len(members),
                mean_steps=float(np.mean(steps)),
            )
        )
    return rows


SUMMARY_COLUMNS = ("label", "method", "runs", "solved", "recovery_rate", "mean_steps")


def format_table(rows):
    cells = [list(SUMMARY_COLUMNS)]
    for row in rows:
        cells.append(
            [
                row.label,
                row.method,
                str(row.runs),
                str(row.solved),
                f"{100 * row.recovery_rate:.1f}%",
                f"{row.mean_steps:.1f}",
            ]
        )
    widths = [max(len(line[i]) for line in cells) for i in range(len(SUMMARY_COLUMNS))]
    lines = []
    for number, line in enumerate(cells):
        # Text columns left-aligned, numbers right-aligned.
        padded = [
            cell.ljust(width) if i < 2 else cell.rjust(width)
            for i, (cell, width) in enumerate(zip(line, widths))
        ]
        lines.append("  ".join(padded).rstrip())
        if number == 0:
            lines.append("  ".join("-" * width for width in widths))
    return "\n".join(lines)


def write_summary_csv(rows, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=SUMMARY_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(asdict(row))
