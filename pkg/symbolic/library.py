"""Token vocabulary: symbols, arities, lexicographic ranks, units and tags.

Every logit, prior and mask vector in the engine is indexed by the
positions of a ``Library``; positions never change after construction.
"""

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

import numpy as np

from .exceptions import LibraryError


class UnitSignature:
    """Exponents over base dimensions, e.g. ``{"kg": 1, "m": -2}``.

    ``UnitSignature.UNKNOWN`` stands for a unit that cannot be determined
    yet; it compares equal only to itself.
    """

    __slots__ = ("_exponents", "_unknown")

    def __init__(self, exponents=None, *, unknown=False):
        cleaned = {}
        for name, power in (exponents or {}).items():
            power = Fraction(power)
            if power != 0:
                cleaned[str(name)] = power
        self._exponents = tuple(sorted(cleaned.items()))
        self._unknown = unknown

    @property
    def exponents(self):
        return dict(self._exponents)

    @property
    def is_unknown(self):
        return self._unknown

    @property
    def is_dimensionless(self):
        return not self._unknown and not self._exponents

    def _combine(self, other, sign):
        if self._unknown or other._unknown:
            return UnitSignature.UNKNOWN
        merged = dict(self._exponents)
        for name, power in other._exponents:
            merged[name] = merged.get(name, 0) + sign * power
        return UnitSignature(merged)

    def __mul__(self, other):
        return self._combine(other, 1)

    def __truediv__(self, other):
        return self._combine(other, -1)

    def __eq__(self, other):
        if not isinstance(other, UnitSignature):
            return NotImplemented
        return self._unknown == other._unknown and self._exponents == other._exponents

    def __hash__(self):
        return hash((self._unknown, self._exponents))

    def __repr__(self):
        if self._unknown:
            return "UnitSignature.UNKNOWN"
        if not self._exponents:
            return "UnitSignature.DIMENSIONLESS"
        body = ", ".join(f"{name!r}: {str(power)}" for name, power in self._exponents)
        return f"UnitSignature({{{body}}})"


UnitSignature.UNKNOWN = UnitSignature(unknown=True)
UnitSignature.DIMENSIONLESS = UnitSignature()


class UnitRule(str, Enum):
    FIXED = "fixed-output"
    DIMENSIONLESS = "dimensionless-in-out"
    PRESERVING = "unit-preserving"
    MULTIPLICATIVE = "multiplicative"
    DIVISIVE = "divisive"
    POWER = "power"


# Rules and tags the bundled operator symbols get when a descriptor omits them.
DEFAULT_UNIT_RULES = {
    "+": UnitRule.PRESERVING,
    "-": UnitRule.PRESERVING,
    "*": UnitRule.MULTIPLICATIVE,
    "/": UnitRule.DIVISIVE,
    "sin": UnitRule.DIMENSIONLESS,
    "cos": UnitRule.DIMENSIONLESS,
    "tan": UnitRule.DIMENSIONLESS,
    "exp": UnitRule.DIMENSIONLESS,
    "log": UnitRule.DIMENSIONLESS,
    "pow": UnitRule.POWER,
}

DEFAULT_TAGS = {
    "+": {"commutative"},
    "*": {"commutative"},
    "sin": {"trig"},
    "cos": {"trig"},
    "tan": {"trig"},
}


@dataclass(frozen=True)
class Token:
    symbol: str
    arity: int
    lex_rank: int
    unit_rule: UnitRule = UnitRule.FIXED
    unit: UnitSignature = UnitSignature.DIMENSIONLESS
    tags: frozenset = field(default_factory=frozenset)

    @property
    def is_terminal(self):
        return self.arity == 0


class Library:
    """Ordered, immutable token vocabulary."""

    def __init__(self, tokens):
        self.tokens = tuple(tokens)
        self.index = {token.symbol: position for position, token in enumerate(self.tokens)}
        self.arities = np.array([token.arity for token in self.tokens], dtype=np.int64)
        self.lex_ranks = np.array([token.lex_rank for token in self.tokens], dtype=np.int64)
        self._classes = {}
        for position, token in enumerate(self.tokens):
            self._classes.setdefault(token.arity, []).append(position)
        self._classes = {arity: tuple(members) for arity, members in self._classes.items()}
        self.terminals = self._classes.get(0, ())
        self.nonterminal_arities = tuple(sorted(a for a in self._classes if a > 0))

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, position):
        return self.tokens[position]

    def __contains__(self, symbol):
        return symbol in self.index

    def __repr__(self):
        return f"Library({[token.symbol for token in self.tokens]})"

    @property
    def symbols(self):
        return [token.symbol for token in self.tokens]

    def arity_class(self, arity):
        """Positions of the tokens with the given arity (possibly empty)."""
        return self._classes.get(arity, ())

    def arity_classes(self):
        return dict(self._classes)

    def position(self, symbol):
        try:
            return self.index[symbol]
        except KeyError:
            raise LibraryError(f"unknown token {symbol!r}; library has {self.symbols}") from None

    def positions(self, symbols):
        return [self.position(symbol) for symbol in symbols]

    def tagged(self, tag):
        return tuple(p for p, token in enumerate(self.tokens) if tag in token.tags)

    def resolve(self, names):
        """Positions named by symbols or ``@tag`` references."""
        positions = []
        for name in names:
            if isinstance(name, str) and name.startswith("@"):
                members = self.tagged(name[1:])
                if not members:
                    raise LibraryError(f"no token carries tag {name[1:]!r}")
                positions.extend(members)
            else:
                positions.append(self.position(name))
        return sorted(set(positions))

    def encode(self, symbols):
        if isinstance(symbols, str):
            symbols = symbols.split()
        return [self.position(symbol) for symbol in symbols]

    def decode(self, ids):
        return [self.tokens[i].symbol for i in ids]

    def describe(self):
        """Descriptor list accepted by ``build_library`` (round-trips)."""
        described = []
        for token in self.tokens:
            item = {
                "symbol": token.symbol,
                "arity": token.arity,
                "lex_rank": token.lex_rank,
                "unit_rule": token.unit_rule.value,
                "tags": sorted(token.tags - {"terminal"}),
            }
            if token.unit_rule is UnitRule.FIXED:
                item["unit"] = {k: str(v) for k, v in token.unit.exponents.items()}
            described.append(item)
        return described


def _normalize(descriptor):
    if isinstance(descriptor, (tuple, list)):
        if len(descriptor) != 2:
            raise LibraryError(f"token descriptor {descriptor!r} must be (symbol, arity)")
        return {"symbol": descriptor[0], "arity": descriptor[1]}
    if isinstance(descriptor, dict):
        return dict(descriptor)
    raise LibraryError(f"unsupported token descriptor {descriptor!r}")


def build_library(spec):
    """Build a Library from token descriptors.

    A descriptor is ``(symbol, arity)`` or a dict with ``symbol``, ``arity``
    and optionally ``lex_rank``, ``tags``, ``unit`` (fixed output unit as an
    exponent map) and ``unit_rule``. Lexicographic ranks default to
    declaration order.
    """
    if not spec:
        raise LibraryError("library specification is empty")

    descriptors = [_normalize(item) for item in spec]
    symbols = [d.get("symbol") for d in descriptors]
    seen = set()
    for symbol in symbols:
        if not isinstance(symbol, str) or not symbol:
            raise LibraryError(f"token symbol {symbol!r} must be a non-empty string")
        if symbol in seen:
            raise LibraryError(f"duplicate symbol {symbol!r}")
        seen.add(symbol)

    explicit = [d for d in descriptors if d.get("lex_rank") is not None]
    if explicit and len(explicit) != len(descriptors):
        raise LibraryError("lex_rank must be given for every token or for none")
    ranks = [int(d["lex_rank"]) for d in explicit] if explicit else list(range(len(descriptors)))
    if len(set(ranks)) != len(ranks):
        duplicated = sorted({r for r in ranks if ranks.count(r) > 1})
        raise LibraryError(f"duplicate lex rank(s) {duplicated}")

    tokens = []
    for descriptor, rank in zip(descriptors, ranks):
        symbol = descriptor["symbol"]
        arity = descriptor.get("arity")
        if not isinstance(arity, int) or isinstance(arity, bool) or arity < 0:
            raise LibraryError(f"token {symbol!r} has invalid arity {arity!r}")

        tags = set(descriptor.get("tags") or DEFAULT_TAGS.get(symbol, ()))
        if "terminal" in tags and arity > 0:
            raise LibraryError(f"token {symbol!r} is tagged terminal but has arity {arity}")
        if arity == 0:
            tags.add("terminal")

        unit = UnitSignature.DIMENSIONLESS
        if "unit" in descriptor:
            rule = UnitRule.FIXED
            unit = UnitSignature(descriptor["unit"])
        elif "unit_rule" in descriptor:
            try:
                rule = UnitRule(descriptor["unit_rule"])
            except ValueError:
                raise LibraryError(
                    f"token {symbol!r} has unknown unit rule {descriptor['unit_rule']!r}"
                ) from None
        else:
            rule = UnitRule.FIXED if arity == 0 else DEFAULT_UNIT_RULES.get(symbol, UnitRule.FIXED)
        if rule in (UnitRule.PRESERVING, UnitRule.MULTIPLICATIVE, UnitRule.DIVISIVE, UnitRule.POWER) and arity != 2:
            raise LibraryError(f"unit rule {rule.value!r} needs a binary token, {symbol!r} has arity {arity}")

        tokens.append(
            Token(
                symbol=symbol,
                arity=arity,
                lex_rank=rank,
                unit_rule=rule,
                unit=unit,
                tags=frozenset(tags),
            )
        )

    if not any(token.arity == 0 for token in tokens):
        raise LibraryError("library has no terminal token, so no traversal can ever complete")
    return Library(tokens)


SR_OPERATORS = ["+", "-", "*", "/", "sin", "cos", "exp", "log"]


def default_sr_library(n_variables=1):
    """Constant-free regression library; variables come last (highest ranks)."""
    spec = [(symbol, 1 if symbol in ("sin", "cos", "exp", "log") else 2) for symbol in SR_OPERATORS]
    spec += [(f"x{i}", 0) for i in range(1, n_variables + 1)]
    return build_library(spec)
