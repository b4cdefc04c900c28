"""Symbolic-regression testbed: evaluation, reward, recovery and benchmarks."""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .conf import search_setting
from .exceptions import ConfigError, ContractViolation, LibraryError
from .library import SR_OPERATORS, build_library, default_sr_library
from .traversal import build_tree, is_complete

logger = logging.getLogger(__name__)

# Stream offset separating the recovery resample from the reward sample.
RECOVERY_STREAM = 1
RESAMPLE_ATTEMPTS = 100

OPERATIONS = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": np.divide,
    "pow": np.power,
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
}

INFIX = {"+", "-", "*", "/"}


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.X.ndim == 1:
            self.X = self.X.reshape(-1, 1)
        if self.X.shape[0] != self.y.shape[0]:
            raise ContractViolation(f"X has {self.X.shape[0]} rows but y has {self.y.shape[0]}")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise ContractViolation(f"dataset {self.name or '?'} contains non-finite values")

    @property
    def variable_count(self):
        return self.X.shape[1]

    def __len__(self):
        return self.X.shape[0]

    def to_csv(self, path):
        header = ",".join([f"x{i}" for i in range(1, self.variable_count + 1)] + ["y"])
        np.savetxt(
            Path(path),
            np.column_stack([self.X, self.y]),
            delimiter=",",
            header=header,
            comments="",
            fmt="%.17g",
        )

    @classmethod
    def from_csv(cls, path, name=None):
        path = Path(path)
        with path.open() as handle:
            header = handle.readline().strip().split(",")
        if not header or header[-1] != "y":
            raise ContractViolation(f"{path}: last CSV column must be 'y', got {header}")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, :-1], data[:, -1], name or path.stem)


@dataclass(frozen=True)
class VariableDomain:
    low: float
    high: float
    points: int
    sampling: str = "uniform"

    def sample(self, rng):
        if self.sampling == "grid":
            return np.linspace(self.low, self.high, self.points)
        return rng.uniform(self.low, self.high, self.points)


@dataclass
class Benchmark:
    name: str
    expression: str
    domains: list
    operators: list = field(default_factory=lambda: list(SR_OPERATORS))
    description: str = ""

    @property
    def variable_count(self):
        return len(self.domains)

    def library(self):
        if self.operators == SR_OPERATORS:
            return default_sr_library(self.variable_count)
        spec = [(symbol, 1 if OPERATIONS[symbol].nin == 1 else 2) for symbol in self.operators]
        spec += [(f"x{i}", 0) for i in range(1, self.variable_count + 1)]
        return build_library(spec)

    def ground_truth(self, library=None):
        library = library or self.library()
        return library.encode(self.expression)


def load_registry(path=None):
    """Benchmarks from the registry file, keyed by name in file order."""
    path = Path(path or search_setting("REGISTRY_PATH"))
    try:
        data = json.loads(path.read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read benchmark registry {path}: {exc}") from None
    registry = {}
    for name, entry in data["benchmarks"].items():
        domains = [VariableDomain(**domain) for domain in entry["domains"]]
        registry[name] = Benchmark(
            name=name,
            expression=entry["expression"],
            domains=domains,
            operators=entry.get("operators", list(SR_OPERATORS)),
            description=entry.get("description", ""),
        )
    return registry


def get_benchmark(name, registry=None):
    registry = registry if registry is not None else load_registry()
    try:
        return registry[name]
    except KeyError:
        raise ConfigError(f"unknown benchmark {name!r}; registered: {sorted(registry)}") from None


def _variable_column(symbol):
    if symbol.startswith("x") and symbol[1:].isdigit():
        return int(symbol[1:]) - 1
    return None


def evaluate_expression(library, sequence, X):
    """Vectorized evaluation of a complete pre-order traversal over rows of X.

    Invalid operations (log of a negative, division by zero) leave non-finite
    values in the affected rows.
    """
    if not is_complete(library, sequence):
        raise ContractViolation(f"{library.decode(sequence)} is not a complete traversal")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    stack = []
    with np.errstate(all="ignore"):
        for token in reversed(sequence):
            symbol = library[token].symbol
            arity = int(library.arities[token])
            if arity == 0:
                column = _variable_column(symbol)
                if column is None or column >= X.shape[1]:
                    raise ContractViolation(f"terminal {symbol!r} is not an input column of X")
                stack.append(X[:, column])
                continue
            operation = OPERATIONS.get(symbol)
            if operation is None:
                raise LibraryError(f"no numeric evaluation for token {symbol!r}")
            arguments = [stack.pop() for _ in range(arity)]
            stack.append(operation(*arguments))
    (result,) = stack
    return np.broadcast_to(result, (X.shape[0],)).astype(np.float64)


def nrmse(y_hat, y):
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    rmse = np.sqrt(np.mean((y_hat - y) ** 2))
    spread = np.std(y)
    if spread == 0:
        return 0.0 if rmse == 0 else np.inf
    return float(rmse / spread)


def reward(library, sequence, dataset):
    """1 / (1 + NRMSE), or 0 if any row evaluates to a non-finite value."""
    y_hat = evaluate_expression(library, sequence, dataset.X)
    if not np.all(np.isfinite(y_hat)):
        return 0.0
    return 1.0 / (1.0 + nrmse(y_hat, dataset.y))


def make_dataset(benchmark, seed, stream=0):
    """Sample X on the benchmark's domains and compute y from its ground truth.

    Draws again (and logs why) while the ground truth is non-finite on the
    sample.
    """
    library = benchmark.library()
    truth = benchmark.ground_truth(library)
    rng = np.random.default_rng([seed, stream])
    for attempt in range(RESAMPLE_ATTEMPTS):
        X = np.column_stack([domain.sample(rng) for domain in benchmark.domains])
        y = evaluate_expression(library, truth, X)
        bad = ~np.isfinite(y)
        if not bad.any():
            return Dataset(X, y, benchmark.name)
        logger.info(
            "%s: ground truth non-finite on %d of %d points (attempt %d), resampling",
            benchmark.name,
            int(bad.sum()),
            len(y),
            attempt + 1,
        )
    raise ContractViolation(f"{benchmark.name}: no finite sample after {RESAMPLE_ATTEMPTS} attempts")


def recovered(library, sequence, benchmark, seed=0, threshold=None):
    """Exact recovery: NRMSE below ``threshold`` on a fresh resample."""
    threshold = threshold if threshold is not None else search_setting("RECOVERY_THRESHOLD")
    dataset = make_dataset(benchmark, seed, stream=RECOVERY_STREAM)
    y_hat = evaluate_expression(library, sequence, dataset.X)
    if not np.all(np.isfinite(y_hat)):
        return False
    solved = nrmse(y_hat, dataset.y) < threshold
    if solved:
        found = canonical_form(library, sequence)
        truth = canonical_form(library, benchmark.ground_truth(library))
        if found != truth:
            logger.info("%s recovered numerically by %s, structurally %s", benchmark.name, found, truth)
    return solved


def to_infix(library, sequence):
    def render(node):
        symbol = library[node.token].symbol
        if not node.children:
            return symbol
        args = [render(child) for child in node.children]
        if symbol in INFIX and len(args) == 2:
            return f"({args[0]} {symbol} {args[1]})"
        return f"{symbol}({', '.join(args)})"

    return render(build_tree(library, list(sequence)))


def canonical_form(library, sequence):
    """Prefix string with commutative children recursively sorted."""

    def render(node):
        token = library[node.token]
        children = [render(child) for child in node.children]
        if "commutative" in token.tags:
            children.sort()
        if not children:
            return token.symbol
        return f"({token.symbol} {' '.join(children)})"

    return render(build_tree(library, list(sequence)))
