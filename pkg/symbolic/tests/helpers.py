from symbolic.constraints import ConstraintSet, LengthConstraint, validate_sequence
from symbolic.library import build_library
from symbolic.policy import UniformPolicy
from symbolic.sampler import enumerate_distribution
from symbolic.traversal import TraversalState


def make_library(*tokens):
    """``make_library("+:2", "sin:1", "x:0")``"""
    spec = []
    for item in tokens:
        symbol, _, arity = item.rpartition(":")
        spec.append((symbol, int(arity)))
    return build_library(spec)


def all_sequences(library, max_len):
    """Every complete traversal of length <= max_len, by depth-first search."""
    found = []

    def walk(state):
        if state.is_complete:
            found.append(tuple(state.sequence))
            return
        if state.length >= max_len:
            return
        for token in range(len(library)):
            walk(state.append(token))

    walk(TraversalState(library))
    return found


def post_hoc_support(library, max_len, constraints):
    """Sequences up to max_len that pass the constraints checked after the fact."""
    constraint_set = ConstraintSet(library, [LengthConstraint(library, 1, max_len)] + list(constraints))
    return {s for s in all_sequences(library, max_len) if validate_sequence(s, constraint_set)}


def in_situ_support(library, max_len, constraints, priors=None):
    constraint_set = ConstraintSet(library, [LengthConstraint(library, 1, max_len)] + list(constraints))
    distribution = enumerate_distribution(
        UniformPolicy(len(library)), library, priors, constraint_set, max_len=max_len
    )
    return distribution.support


def symbols(library, positions):
    return {library[p].symbol for p in positions}
