"""In-situ priors: finite logit adjustments that bias sampling.

A prior never removes support: every entry it returns is finite, so a
token with a finite policy logit keeps a non-zero probability.
"""

import logging
import math
from pathlib import Path

import numpy as np

from .conf import search_setting
from .exceptions import ConfigError, ContractViolation, PriorError
from .library import Library

logger = logging.getLogger(__name__)


class LogitAdjustment:
    __slots__ = ("values", "name")

    def __init__(self, values, name=""):
        values = np.asarray(values, dtype=np.float64)
        if not np.all(np.isfinite(values)):
            raise PriorError(f"prior {name or '?'} produced non-finite logits")
        self.values = values
        self.name = name

    @classmethod
    def zeros(cls, size, name=""):
        return cls(np.zeros(size), name)

    def __len__(self):
        return len(self.values)

    def __repr__(self):
        return f"LogitAdjustment({self.name or '?'}, {np.round(self.values, 4).tolist()})"


def token_specific_prior(weights):
    """Adjustment log(lambda): multiplies each token's probability by its
    weight and renormalizes, whatever the policy logits are."""
    weights = np.asarray(weights, dtype=np.float64)
    if np.any(~(weights > 0)):
        raise PriorError(
            "token-specific weights must be strictly positive; "
            "exclude tokens with a constraint instead"
        )
    return LogitAdjustment(np.log(weights), "token_specific")


def positional_prior(table, position, size):
    """Token-specific prior for ``position`` if the table has one, else zeros."""
    weights = table.get(position)
    if weights is None:
        return LogitAdjustment.zeros(size, "positional")
    adjustment = token_specific_prior(weights)
    adjustment.name = "positional"
    return adjustment


def positional_table_from_reference(library, reference, weight):
    """Bias every position toward the token a reference traversal has there."""
    table = {}
    for position, token in enumerate(reference):
        weights = np.ones(len(library))
        weights[token] = weight
        table[position] = weights
    return table


def soft_length_prior(position, loc, scale, library):
    """Quadratic penalty on arity >= 2 tokens before ``loc`` and on
    terminals after it; unary tokens are never adjusted.

    Positions count from 0 at the first token.
    """
    if scale <= 0:
        raise PriorError(f"soft length scale must be positive, got {scale}")
    values = np.zeros(len(library))
    penalty = -((position - loc) ** 2) / (2.0 * scale**2)
    if position < loc:
        values[library.arities >= 2] = penalty
    elif position > loc:
        values[library.arities == 0] = penalty
    return LogitAdjustment(values, "soft_length")


def uniform_arity_prior(library):
    """-log |A(arity(v))| per token: uniform over arities when the policy
    logits are uniform (zero-initialized output layer)."""
    sizes = {arity: len(members) for arity, members in library.arity_classes().items()}
    values = np.array([-math.log(sizes[int(a)]) for a in library.arities])
    return LogitAdjustment(values, "uniform_arity")


def language_model_prior(lm_logits, strength, size=None):
    """``strength`` times the language model's logits."""
    lm_logits = np.asarray(lm_logits, dtype=np.float64)
    if size is not None and len(lm_logits) != size:
        raise ContractViolation(f"language model returned {len(lm_logits)} logits for a library of {size}")
    return LogitAdjustment(strength * lm_logits, "language_model")


def compose_adjustments(adjustments, size=None):
    adjustments = list(adjustments)
    if not adjustments:
        if size is None:
            raise ContractViolation("composing no adjustments needs an explicit size")
        return LogitAdjustment.zeros(size, "composed")
    lengths = {len(a) for a in adjustments}
    if len(lengths) != 1 or (size is not None and lengths != {size}):
        raise ContractViolation(f"adjustments of different lengths {sorted(lengths)}")
    values = np.zeros(len(adjustments[0]))
    for adjustment in adjustments:
        values = values + adjustment.values
    return LogitAdjustment(values, "composed")


class BigramModel:
    """Add-one smoothed bigram model over traversals.

    Conditions on the previous token (or the start of the sequence) and
    returns log-probabilities as logits.
    """

    def __init__(self, library, log_probs):
        self.library = library
        self.log_probs = log_probs

    @classmethod
    def fit(cls, corpus, library):
        size = len(library)
        counts = np.ones((size + 1, size))
        for sequence in corpus:
            previous = size
            for token in sequence:
                counts[previous, token] += 1
                previous = token
        log_probs = np.log(counts / counts.sum(axis=1, keepdims=True))
        logger.debug("bigram model fit on %d traversals", len(corpus))
        return cls(library, log_probs)

    @classmethod
    def from_file(cls, path, library):
        corpus = []
        for line in Path(path).read_text().splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                corpus.append(library.encode(line))
        return cls.fit(corpus, library)

    def logits(self, sequence):
        previous = sequence[-1] if sequence else len(self.library)
        return self.log_probs[previous]


class Prior:
    kind = ""

    def __init__(self, library, name=None):
        self.library = library
        self.name = name or self.kind

    def adjustment(self, state):
        raise NotImplementedError

    def __repr__(self):
        return f"<{type(self).__name__} {self.name}>"


class TokenSpecificPrior(Prior):
    kind = "token_specific"

    def __init__(self, library, weights, name=None):
        super().__init__(library, name)
        self._adjustment = token_specific_prior(weights)

    def adjustment(self, state):
        return self._adjustment


class PositionalPrior(Prior):
    kind = "positional"

    def __init__(self, library, table, name=None):
        super().__init__(library, name)
        self.table = {int(i): np.asarray(w, dtype=np.float64) for i, w in table.items()}
        for weights in self.table.values():
            token_specific_prior(weights)

    def adjustment(self, state):
        return positional_prior(self.table, state.length, len(self.library))


class SoftLengthPrior(Prior):
    kind = "soft_length"

    def __init__(self, library, loc, scale, name=None):
        super().__init__(library, name)
        if scale <= 0:
            raise PriorError(f"soft length scale must be positive, got {scale}")
        if loc < 1:
            raise PriorError(f"soft length target must be at least 1, got {loc}")
        self.loc = loc
        self.scale = scale
        self._cache = {}

    def adjustment(self, state):
        position = state.length
        if position not in self._cache:
            self._cache[position] = soft_length_prior(position, self.loc, self.scale, self.library)
        return self._cache[position]


class UniformArityPrior(Prior):
    kind = "uniform_arity"

    def __init__(self, library, name=None):
        super().__init__(library, name)
        self._adjustment = uniform_arity_prior(library)

    def adjustment(self, state):
        return self._adjustment


class LanguageModelPrior(Prior):
    kind = "language_model"

    def __init__(self, library, model, strength=1.0, name=None):
        super().__init__(library, name)
        self.model = model
        self.strength = strength

    def adjustment(self, state):
        return language_model_prior(self.model.logits(state.sequence), self.strength, len(self.library))


class PriorSet:
    def __init__(self, library: Library, priors=()):
        self.library = library
        self.priors = list(priors)

    def __iter__(self):
        return iter(self.priors)

    def __len__(self):
        return len(self.priors)

    @property
    def names(self):
        return [p.name for p in self.priors]

    def adjustment(self, state):
        if not self.priors:
            return np.zeros(len(self.library))
        return compose_adjustments(
            [p.adjustment(state) for p in self.priors], size=len(self.library)
        ).values


def _weights_from(mapping, library):
    weights = np.ones(len(library))
    for symbol, value in mapping.items():
        for position in library.resolve([symbol]):
            weights[position] = value
    return weights


def prior_from_config(entry, library, base_dir=None):
    """Build one prior from its config entry, e.g.
    ``{"prior": "soft_length", "loc": 10, "scale": 5}``."""
    entry = dict(entry)
    kind = entry.pop("prior", None)
    name = entry.pop("name", None)
    if kind == "token_specific":
        return TokenSpecificPrior(library, _weights_from(entry.get("weights", {}), library), name=name)
    if kind == "positional":
        if "reference" in entry:
            table = positional_table_from_reference(
                library, library.encode(entry["reference"]), entry.get("weight", 10.0)
            )
        else:
            table = {int(i): _weights_from(w, library) for i, w in entry.get("table", {}).items()}
        return PositionalPrior(library, table, name=name)
    if kind == "soft_length":
        return SoftLengthPrior(
            library,
            entry.get("loc", search_setting("SOFT_LENGTH_LOC")),
            entry.get("scale", search_setting("SOFT_LENGTH_SCALE")),
            name=name,
        )
    if kind == "uniform_arity":
        return UniformArityPrior(library, name=name)
    if kind == "language_model":
        if "corpus" in entry:
            path = Path(entry["corpus"])
            if not path.is_absolute() and base_dir is not None:
                path = Path(base_dir) / path
            model = BigramModel.from_file(path, library)
        elif "sequences" in entry:
            model = BigramModel.fit([library.encode(s) for s in entry["sequences"]], library)
        else:
            raise ConfigError("language_model prior needs a corpus file or inline sequences")
        return LanguageModelPrior(library, model, entry.get("strength", 1.0), name=name)
    raise ConfigError(f"unknown prior kind {kind!r}")


def build_prior_set(entries, library, base_dir=None):
    return PriorSet(library, [prior_from_config(entry, library, base_dir) for entry in entries])
