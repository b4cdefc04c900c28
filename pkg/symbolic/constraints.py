"""In-situ constraints: per-step {0, -inf} masks over the library.

Each constraint answers two questions about the same rule:

* ``mask(state)`` - which tokens may not be sampled next (step-wise), and
* ``validate(sequence)`` - whether a finished traversal obeys the rule
  (post hoc, on the rebuilt tree).

Masks only remove a token when no completion satisfying the rule is left,
so for every single constraint the sequences reachable under step-wise
masking are exactly the unconstrained sequences that pass ``validate``.
"""

import logging
import math
from functools import lru_cache

import numpy as np

from .exceptions import ConfigError, ContractViolation, InfeasibleStep
from .library import UnitRule, UnitSignature
from .traversal import TraversalState, build_tree, is_complete

logger = logging.getLogger(__name__)

NEG_INF = -np.inf

RELATIONSHIPS = ("descendant", "child", "sibling")


class Mask:
    """A length-|L| vector whose entries are 0 or NEG_INF."""

    __slots__ = ("values", "name")

    def __init__(self, values, name=""):
        self.values = values
        self.name = name

    @classmethod
    def empty(cls, size, name=""):
        return cls(np.zeros(size), name)

    @classmethod
    def of(cls, positions, size, name=""):
        values = np.zeros(size)
        values[list(positions)] = NEG_INF
        return cls(values, name)

    @property
    def constrained(self):
        return frozenset(np.flatnonzero(self.values == NEG_INF).tolist())

    @property
    def is_empty(self):
        return not np.any(self.values == NEG_INF)

    def __len__(self):
        return len(self.values)

    def __repr__(self):
        return f"Mask({self.name or '?'}, constrained={sorted(self.constrained)})"


def compose_masks(masks, size=None, step=None, prefix=None):
    """Sum masks (union of constrained sets); refuse to cover the library."""
    masks = list(masks)
    if not masks:
        if size is None:
            raise ContractViolation("composing no masks needs an explicit size")
        return Mask.empty(size, "composed")
    lengths = {len(mask) for mask in masks}
    if len(lengths) != 1 or (size is not None and lengths != {size}):
        raise ContractViolation(f"masks of different lengths {sorted(lengths)}")
    values = np.zeros(len(masks[0]))
    for mask in masks:
        values = values + mask.values
    if np.all(values == NEG_INF):
        raise InfeasibleStep(
            step=step,
            constraints=[mask.name for mask in masks if not mask.is_empty],
            prefix=prefix,
        )
    return Mask(values, "composed")


# -- completion feasibility ---------------------------------------------------


@lru_cache(maxsize=4096)
def _representable(arities, limit):
    """Which extra lengths 0..limit are sums of non-terminal arities."""
    reachable = [False] * (limit + 1)
    reachable[0] = True
    for total in range(1, limit + 1):
        reachable[total] = any(a <= total and reachable[total - a] for a in arities)
    return tuple(reachable)


def completion_feasible(length, dangling, min_length, max_length, arities):
    """Can a prefix of ``length`` tokens with ``dangling`` open slots be
    completed to a total length in [min_length, max_length]?

    Completing needs at least ``dangling`` more terminals; every further
    non-terminal of arity a adds exactly a tokens to the final length.
    ``max_length=None`` means unbounded.
    """
    if dangling == 0:
        return length >= min_length and (max_length is None or length <= max_length)
    shortest = length + dangling
    if max_length is not None and shortest > max_length:
        return False
    if shortest >= min_length:
        return True
    if not arities:
        return False
    if max_length is None:
        return True
    reachable = _representable(tuple(arities), max_length - shortest)
    return any(reachable[extra] for extra in range(min_length - shortest, max_length - shortest + 1))


def _length_mask_values(library, length, dangling, min_length, max_length):
    values = np.zeros(len(library))
    arities = library.nonterminal_arities
    for arity, members in library.arity_classes().items():
        if not completion_feasible(length + 1, dangling + arity - 1, min_length, max_length, arities):
            values[list(members)] = NEG_INF
    return values


# -- the eight constraint operations -----------------------------------------


def length_mask(state, min_length, max_length, library):
    """Mask tokens after which no completion has length in [min, max]."""
    return Mask(
        _length_mask_values(library, state.length, state.dangling, min_length, max_length),
        "length",
    )


def _repeat_feasible(library, counts, dangling, targets, min_count, max_count):
    """Can the open slots be closed with every target count in [min, max]?

    A completion of ``dangling`` slots is any multiset of tokens whose
    terminals outnumber the added growth sum(k * (arity - 1)) by exactly
    ``dangling``; the order of such a multiset is always arrangeable.
    """
    for v in targets:
        if max_count is not None and counts[v] > max_count:
            return False
    need = {v: max(0, min_count - counts[v]) for v in targets}
    if dangling == 0:
        return not any(need.values())

    target_set = set(targets)
    room = {v: math.inf if max_count is None else max_count - counts[v] for v in targets}
    arities = library.arities

    fewest_terminals = sum(need[v] for v in targets if arities[v] == 0)
    if any(t not in target_set for t in library.terminals):
        most_terminals = math.inf
    else:
        most_terminals = sum(room[v] for v in targets if arities[v] == 0)

    # growth forced by targets still short of min, plus optional extra copies
    base = sum(need[v] * (arities[v] - 1) for v in targets if arities[v] >= 2)
    growers = []
    for p in range(len(library)):
        if arities[p] < 2:
            continue
        copies = room[p] - need[p] if p in target_set else math.inf
        if copies > 0:
            growers.append((int(arities[p]) - 1, copies))

    low = fewest_terminals - dangling
    high = most_terminals - dangling
    if high == math.inf:
        if any(copies == math.inf for _, copies in growers):
            return True
        return base + sum(step * copies for step, copies in growers) >= low
    high = int(high)
    if base > high:
        return False
    reachable = np.zeros(high - base + 1, dtype=bool)
    reachable[0] = True
    for step, copies in growers:
        for _ in range(min(copies, (high - base) // step)):
            shifted = np.zeros_like(reachable)
            shifted[step:] = reachable[:-step]
            if not (shifted & ~reachable).any():
                break
            reachable |= shifted
    return bool(reachable[max(low, base) - base:].any())


def repeat_mask(state, targets, min_count, max_count, library):
    """Mask tokens that make the target counts impossible to bring into
    [min, max]: a target already at max, or a terminal that closes the
    traversal while some target is still short of min."""
    targets = list(targets)
    values = np.zeros(len(library))
    for token in range(len(library)):
        counts = list(state.counts)
        counts[token] += 1
        dangling = state.dangling + int(library.arities[token]) - 1
        if not _repeat_feasible(library, counts, dangling, targets, min_count, max_count):
            values[token] = NEG_INF
    return Mask(values, "repeat")


def relational_mask(state, targets, effectors, relationship):
    """Mask every target when the next position has ``relationship`` to an effector."""
    size = len(state.library)
    if state.length == 0:
        return Mask.empty(size, "relational")
    context = state.context()
    effectors = set(effectors)
    if relationship == "descendant":
        active = any(token in effectors for token in context.ancestors)
    elif relationship == "child":
        active = context.parent in effectors
    elif relationship == "sibling":
        active = context.left_sibling_root is not None and context.left_sibling_root in effectors
    else:
        raise ConfigError(f"unknown relationship {relationship!r}; expected one of {RELATIONSHIPS}")
    if active:
        return Mask.of(targets, size, "relational")
    return Mask.empty(size, "relational")


_END = None


class SequenceTrie:
    """Set of complete token sequences stored as nested dicts."""

    def __init__(self, sequences=()):
        self._root = {}
        self._size = 0
        for sequence in sequences:
            self.add(sequence)

    def add(self, sequence):
        node = self._root
        for token in sequence:
            node = node.setdefault(token, {})
        if _END not in node:
            node[_END] = {}
            self._size += 1
            return True
        return False

    def __contains__(self, sequence):
        node = self._node(sequence)
        return node is not None and _END in node

    def __len__(self):
        return self._size

    def __iter__(self):
        prefix = []

        def walk(node):
            if _END in node:
                yield tuple(prefix)
            for token in sorted(k for k in node if k is not _END):
                prefix.append(token)
                yield from walk(node[token])
                prefix.pop()

        yield from walk(self._root)

    def _node(self, prefix):
        node = self._root
        for token in prefix:
            node = node.get(token)
            if node is None:
                return None
        return node

    def completions(self, prefix):
        """Tokens v such that ``prefix + [v]`` is stored."""
        node = self._node(prefix)
        if node is None:
            return set()
        return {token for token, child in node.items() if token is not _END and _END in child}


def blacklist_mask(state, trie):
    """Mask v iff appending v yields a blacklisted complete sequence."""
    return Mask.of(trie.completions(state.sequence), len(state.library), "blacklist")


def valency_mask(state, valency, library):
    """Length constraint with min = d_i + n, as valency equals arity."""
    mask = length_mask(state, state.dangling + valency, None, library)
    mask.name = "valency"
    return mask


def lexicographical_mask(state, commutative_ops, library):
    """Below a commutative operator, children's lex ranks may not decrease."""
    size = len(library)
    if state.length == 0:
        return Mask.empty(size, "lexicographical")
    context = state.context()
    if context.parent not in commutative_ops or not context.child_index:
        return Mask.empty(size, "lexicographical")
    floor = library.lex_ranks[context.left_sibling_root]
    return Mask(np.where(library.lex_ranks < floor, NEG_INF, 0.0), "lexicographical")


def subtree_length_mask(state, commutative_ops, library):
    """Sibling subtrees of a commutative operator may not grow longer.

    Every open commutative ancestor building its k-th child (k >= 1) caps
    that child's final length at the length of child k-1; the cap is
    applied as a length constraint scoped to the child subtree.
    """
    values = np.zeros(len(library))
    arities = library.nonterminal_arities
    for frame in state.stack:
        if frame.token not in commutative_ops or not frame.children:
            continue
        budget = frame.children[-1][2]
        built = state.length - frame.child_start
        open_slots = state.subtree_dangling(frame)
        for arity, members in library.arity_classes().items():
            if not completion_feasible(built + 1, open_slots + arity - 1, 1, budget, arities):
                values[list(members)] = NEG_INF
    return Mask(values, "subtree_length")


# -- units --------------------------------------------------------------------


def tree_unit(library, node):
    """Unit of a (sub)tree: a UnitSignature, UNKNOWN, or None on contradiction."""
    token = library[node.token]
    rule = token.unit_rule
    if rule is UnitRule.FIXED:
        for child in node.children:
            if tree_unit(library, child) is None:
                return None
        return token.unit
    units = [tree_unit(library, child) for child in node.children]
    if any(unit is None for unit in units):
        return None
    if rule is UnitRule.DIMENSIONLESS:
        if any(not u.is_unknown and not u.is_dimensionless for u in units):
            return None
        return UnitSignature.DIMENSIONLESS
    left, right = units
    if rule is UnitRule.PRESERVING:
        if left.is_unknown:
            return right
        if right.is_unknown or left == right:
            return left
        return None
    if rule is UnitRule.MULTIPLICATIVE:
        return left * right
    if rule is UnitRule.DIVISIVE:
        return left / right
    # POWER: the exponent must be dimensionless; the result is only known
    # for a dimensionless base.
    if not right.is_unknown and not right.is_dimensionless:
        return None
    return UnitSignature.DIMENSIONLESS if left.is_dimensionless else UnitSignature.UNKNOWN


def _slice_unit(library, sequence, start, length):
    return tree_unit(library, build_tree(library, sequence[start:start + length]))


def required_unit(state, output_unit):
    """Unit the next position must produce, walking down from the root."""
    library = state.library
    required = output_unit
    for frame in state.stack:
        rule = library[frame.token].unit_rule
        k = frame.child_index
        first = None
        if frame.children:
            _, start, length = frame.children[0]
            first = _slice_unit(library, state.sequence, start, length)
            if first is None:
                first = UnitSignature.UNKNOWN
        if rule is UnitRule.DIMENSIONLESS:
            required = UnitSignature.DIMENSIONLESS
        elif rule is UnitRule.PRESERVING:
            if required.is_unknown and first is not None:
                required = first
        elif rule is UnitRule.MULTIPLICATIVE:
            required = UnitSignature.UNKNOWN if k == 0 else required / first
        elif rule is UnitRule.DIVISIVE:
            required = UnitSignature.UNKNOWN if k == 0 else first / required
        elif rule is UnitRule.POWER:
            required = UnitSignature.UNKNOWN if k == 0 else UnitSignature.DIMENSIONLESS
        else:
            required = UnitSignature.UNKNOWN
    return required


def type_unit_mask(state, required_output_unit, per_position_types, library):
    """Positional types (sequence objects) or units (tree objects).

    In unit mode only definite contradictions are masked: a fixed-unit
    token whose unit differs from a known requirement, or a dimensionless
    function under a known dimensional requirement.
    """
    size = len(library)
    if per_position_types is not None:
        allowed = per_position_types.get(state.length)
        if allowed is None:
            return Mask.empty(size, "type_unit")
        return Mask.of(set(range(size)) - set(allowed), size, "type_unit")

    required = required_unit(state, required_output_unit)
    if required.is_unknown:
        return Mask.empty(size, "type_unit")
    values = np.zeros(size)
    for position, token in enumerate(library):
        if token.unit_rule is UnitRule.FIXED and token.unit != required:
            values[position] = NEG_INF
        elif token.unit_rule is UnitRule.DIMENSIONLESS and not required.is_dimensionless:
            values[position] = NEG_INF
    return Mask(values, "type_unit")


# -- configured constraints ---------------------------------------------------


class Constraint:
    kind = ""

    def __init__(self, library, name=None):
        self.library = library
        self.name = name or self.kind

    def mask(self, state):
        raise NotImplementedError

    def validate(self, sequence, tree):
        raise NotImplementedError

    def after_batch(self, sequences):
        """Hook run once a batch has been rewarded."""

    def _named(self, mask):
        mask.name = self.name
        return mask

    def __repr__(self):
        return f"<{type(self).__name__} {self.name}>"


class LengthConstraint(Constraint):
    kind = "length"

    def __init__(self, library, min_length=1, max_length=None, name=None):
        super().__init__(library, name)
        if min_length < 1 or (max_length is not None and max_length < min_length):
            raise ConfigError(f"length bounds must satisfy 1 <= min <= max, got [{min_length}, {max_length}]")
        self.min_length = min_length
        self.max_length = max_length

    def mask(self, state):
        return self._named(length_mask(state, self.min_length, self.max_length, self.library))

    def validate(self, sequence, tree):
        upper_ok = self.max_length is None or len(sequence) <= self.max_length
        return self.min_length <= len(sequence) and upper_ok


class RepeatConstraint(Constraint):
    kind = "repeat"

    def __init__(self, library, targets, min_count=0, max_count=None, name=None):
        super().__init__(library, name)
        if not targets:
            raise ConfigError("repeat constraint needs at least one target")
        if min_count < 0 or (max_count is not None and max_count < min_count):
            raise ConfigError(f"repeat bounds must satisfy 0 <= min <= max, got [{min_count}, {max_count}]")
        self.targets = list(targets)
        self.min_count = min_count
        self.max_count = max_count

    def mask(self, state):
        return self._named(repeat_mask(state, self.targets, self.min_count, self.max_count, self.library))

    def validate(self, sequence, tree):
        for v in self.targets:
            count = sequence.count(v)
            if count < self.min_count or (self.max_count is not None and count > self.max_count):
                return False
        return True


class RelationalConstraint(Constraint):
    kind = "relational"

    def __init__(self, library, targets, effectors, relationship, name=None):
        if relationship not in RELATIONSHIPS:
            raise ConfigError(f"unknown relationship {relationship!r}; expected one of {RELATIONSHIPS}")
        super().__init__(library, name or f"relational:{relationship}")
        self.targets = frozenset(targets)
        self.effectors = frozenset(effectors)
        self.relationship = relationship

    def mask(self, state):
        return self._named(relational_mask(state, self.targets, self.effectors, self.relationship))

    def validate(self, sequence, tree):
        for node, ancestors, parent, left in tree.walk():
            if node.token not in self.targets:
                continue
            if self.relationship == "descendant":
                hit = any(a.token in self.effectors for a in ancestors)
            elif self.relationship == "child":
                hit = parent is not None and parent.token in self.effectors
            else:
                hit = left is not None and left.token in self.effectors
            if hit:
                return False
        return True


class BlacklistConstraint(Constraint):
    """Blacklisted complete sequences; ``systematic`` grows the list with
    every rewarded batch so no sequence is sampled twice across batches."""

    kind = "blacklist"

    def __init__(self, library, sequences=(), systematic=False, name=None):
        super().__init__(library, name)
        self.trie = SequenceTrie(tuple(s) for s in sequences)
        self.systematic = systematic

    def mask(self, state):
        return self._named(blacklist_mask(state, self.trie))

    def validate(self, sequence, tree):
        return tuple(sequence) not in self.trie

    def after_batch(self, sequences):
        if not self.systematic:
            return
        added = sum(self.trie.add(tuple(s)) for s in sequences)
        logger.debug("systematic exploration: %d new sequences, %d blacklisted", added, len(self.trie))


class ValencyConstraint(Constraint):
    """Valency of the most recent token n turns into min length d_i + n."""

    kind = "valency"

    def __init__(self, library, valency, name=None):
        super().__init__(library, name)
        self.valency = np.zeros(len(library), dtype=np.int64)
        for position, value in valency.items():
            if value < 0:
                raise ConfigError(f"valency must be non-negative, got {value} for {library[position].symbol!r}")
            self.valency[position] = value

    def current(self, state):
        return int(self.valency[state.sequence[-1]]) if state.sequence else 0

    def mask(self, state):
        return self._named(valency_mask(state, self.current(state), self.library))

    def validate(self, sequence, tree):
        # Only the closing terminal can be masked: it is allowed iff the
        # tokens before it number at least the valency of their last one.
        if len(sequence) < 2:
            return True
        return len(sequence) - 1 >= self.valency[sequence[-2]]


class LexicographicalConstraint(Constraint):
    kind = "lexicographical"

    def __init__(self, library, operators, name=None):
        super().__init__(library, name)
        self.operators = frozenset(operators)

    def mask(self, state):
        return self._named(lexicographical_mask(state, self.operators, self.library))

    def validate(self, sequence, tree):
        ranks = self.library.lex_ranks
        for node, _, _, _ in tree.walk():
            if node.token in self.operators:
                roots = [ranks[child.token] for child in node.children]
                if any(b < a for a, b in zip(roots, roots[1:])):
                    return False
        return True


class SubtreeLengthConstraint(Constraint):
    kind = "subtree_length"

    def __init__(self, library, operators, name=None):
        super().__init__(library, name)
        self.operators = frozenset(operators)

    def mask(self, state):
        return self._named(subtree_length_mask(state, self.operators, self.library))

    def validate(self, sequence, tree):
        for node, _, _, _ in tree.walk():
            if node.token in self.operators:
                lengths = [child.length for child in node.children]
                if any(b > a for a, b in zip(lengths, lengths[1:])):
                    return False
        return True


class TypeUnitConstraint(Constraint):
    kind = "type_unit"

    def __init__(self, library, output_unit=None, positions=None, name=None):
        super().__init__(library, name)
        if (output_unit is None) == (positions is None):
            raise ConfigError("type_unit needs exactly one of output_unit or positions")
        self.output_unit = output_unit
        self.positions = positions

    def mask(self, state):
        return self._named(type_unit_mask(state, self.output_unit, self.positions, self.library))

    def validate(self, sequence, tree):
        if self.positions is not None:
            return all(
                token in self.positions[i]
                for i, token in enumerate(sequence)
                if i in self.positions
            )
        unit = tree_unit(self.library, tree)
        return unit is not None and (unit.is_unknown or unit == self.output_unit)


class ConstraintSet:
    """The constraints active in one run, composed step by step."""

    def __init__(self, library, constraints=()):
        self.library = library
        self.constraints = list(constraints)
        kinds = {c.kind for c in self.constraints}
        if {"lexicographical", "subtree_length"} <= kinds:
            raise ConfigError("the lexicographical and subtree_length constraints are mutually incompatible")

    def __iter__(self):
        return iter(self.constraints)

    def __len__(self):
        return len(self.constraints)

    def __bool__(self):
        return True

    @property
    def names(self):
        return [c.name for c in self.constraints]

    @property
    def max_length(self):
        bounds = [c.max_length for c in self.constraints if c.kind == "length" and c.max_length is not None]
        return min(bounds) if bounds else None

    def has_length_bound(self):
        return self.max_length is not None

    def with_constraint(self, constraint):
        return ConstraintSet(self.library, self.constraints + [constraint])

    def mask(self, state):
        return compose_masks(
            [c.mask(state) for c in self.constraints],
            size=len(self.library),
            step=state.length,
            prefix=self.library.decode(state.sequence),
        )

    def validate(self, sequence):
        return validate_sequence(sequence, self)

    def after_batch(self, sequences):
        for constraint in self.constraints:
            constraint.after_batch(sequences)


def validate_sequence(sequence, constraint_set):
    """Post-hoc check of a complete traversal against every constraint."""
    library = constraint_set.library
    sequence = list(sequence)
    if not is_complete(library, sequence):
        raise ContractViolation(f"{library.decode(sequence)} is not a complete traversal")
    tree = build_tree(library, sequence)
    return all(c.validate(sequence, tree) for c in constraint_set)


def check_feasible_start(constraint_set):
    """Raise InfeasibleStep if the empty prefix is already over-constrained."""
    constraint_set.mask(TraversalState(constraint_set.library))


# -- configuration ------------------------------------------------------------


def _unit_from(value):
    if value is None:
        return None
    if isinstance(value, UnitSignature):
        return value
    if value in ("dimensionless", {}):
        return UnitSignature.DIMENSIONLESS
    return UnitSignature(value)


def constraint_from_config(entry, library):
    """Build one constraint from its config entry, e.g.
    ``{"constraint": "relational", "targets": ["sin", "cos"],
    "effectors": ["sin", "cos"], "relationship": "descendant"}``.
    Token lists accept symbols and ``@tag`` references."""
    entry = dict(entry)
    kind = entry.pop("constraint", None)
    name = entry.pop("name", None)
    try:
        if kind == "length":
            return LengthConstraint(library, entry.get("min", 1), entry.get("max"), name=name)
        if kind == "repeat":
            return RepeatConstraint(
                library, library.resolve(entry["targets"]), entry.get("min", 0), entry.get("max"), name=name
            )
        if kind == "relational":
            return RelationalConstraint(
                library,
                library.resolve(entry["targets"]),
                library.resolve(entry["effectors"]),
                entry["relationship"],
                name=name,
            )
        if kind == "blacklist":
            sequences = [library.encode(s) for s in entry.get("sequences", [])]
            return BlacklistConstraint(library, sequences, entry.get("systematic", False), name=name)
        if kind == "valency":
            valency = {library.position(symbol): n for symbol, n in entry["valency"].items()}
            return ValencyConstraint(library, valency, name=name)
        if kind in ("lexicographical", "subtree_length"):
            operators = library.resolve(entry.get("operators", ["@commutative"]))
            cls = LexicographicalConstraint if kind == "lexicographical" else SubtreeLengthConstraint
            return cls(library, operators, name=name)
        if kind == "type_unit":
            positions = entry.get("positions")
            if positions is not None:
                positions = {int(i): set(library.resolve(symbols)) for i, symbols in positions.items()}
            return TypeUnitConstraint(library, _unit_from(entry.get("output_unit")), positions, name=name)
    except KeyError as exc:
        raise ConfigError(f"{kind} constraint is missing {exc.args[0]!r}") from None
    raise ConfigError(f"unknown constraint kind {kind!r}")


def build_constraint_set(entries, library):
    return ConstraintSet(library, [constraint_from_config(entry, library) for entry in entries])
