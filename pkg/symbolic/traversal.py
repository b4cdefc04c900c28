"""Partial pre-order traversals of expression trees.

A ``TraversalState`` tracks the dangling-slot count, the chain of open
(ancestor) nodes of the next position and, per open node, the root and
length of every child subtree already completed. Constraints read the
state; they never modify it.
"""

from dataclasses import dataclass, field
from typing import List, Optional

from .exceptions import ContractViolation


@dataclass
class Frame:
    """An open node: a non-terminal whose children are not all placed yet."""

    token: int
    arity: int
    start: int
    # (root token, start position, length) of every completed child subtree.
    children: List[tuple] = field(default_factory=list)
    # Where the child currently being built began, and the global dangling
    # count at that moment.
    child_start: int = 0
    child_start_dangling: int = 0

    @property
    def child_index(self):
        return len(self.children)

    def copy(self):
        return Frame(
            self.token,
            self.arity,
            self.start,
            list(self.children),
            self.child_start,
            self.child_start_dangling,
        )


@dataclass(frozen=True)
class PositionContext:
    parent: Optional[int]
    child_index: Optional[int]
    left_sibling_root: Optional[int]
    left_sibling_subtree_length: Optional[int]
    ancestors: tuple
    depth: int


class TraversalState:
    """Prefix of a pre-order traversal over a ``Library``.

    ``append`` returns a new state; ``push`` mutates this one and is meant
    for states owned by a single sampler.
    """

    __slots__ = ("library", "sequence", "stack", "dangling", "counts")

    def __init__(self, library, sequence=()):
        self.library = library
        self.sequence = []
        self.stack = []
        self.dangling = 1
        self.counts = [0] * len(library)
        for token in sequence:
            self.push(token)

    @property
    def length(self):
        return len(self.sequence)

    @property
    def is_complete(self):
        return self.dangling == 0

    def copy(self):
        clone = TraversalState.__new__(TraversalState)
        clone.library = self.library
        clone.sequence = list(self.sequence)
        clone.stack = [frame.copy() for frame in self.stack]
        clone.dangling = self.dangling
        clone.counts = list(self.counts)
        return clone

    def append(self, token):
        clone = self.copy()
        clone.push(token)
        return clone

    def push(self, token):
        if self.dangling == 0:
            raise ContractViolation(
                f"cannot append {self.library[token].symbol!r}: traversal "
                f"{self.library.decode(self.sequence)} is already complete"
            )
        arity = int(self.library.arities[token])
        position = len(self.sequence)
        self.sequence.append(token)
        self.counts[token] += 1
        self.dangling += arity - 1

        if arity > 0:
            self.stack.append(
                Frame(
                    token=token,
                    arity=arity,
                    start=position,
                    child_start=position + 1,
                    child_start_dangling=self.dangling,
                )
            )
            return self

        # A terminal closes its own subtree and possibly a run of ancestors.
        root, start = token, position
        while self.stack:
            top = self.stack[-1]
            top.children.append((root, start, position + 1 - start))
            if len(top.children) < top.arity:
                top.child_start = position + 1
                top.child_start_dangling = self.dangling
                break
            self.stack.pop()
            root, start = top.token, top.start
        return self

    def context(self):
        """Relations of the next position to the nodes already placed."""
        if self.dangling == 0:
            raise ContractViolation("a complete traversal has no next position")
        if not self.stack:
            return PositionContext(None, None, None, None, (), 0)
        top = self.stack[-1]
        left_root = left_length = None
        if top.children:
            left_root, _, left_length = top.children[-1]
        return PositionContext(
            parent=top.token,
            child_index=top.child_index,
            left_sibling_root=left_root,
            left_sibling_subtree_length=left_length,
            ancestors=tuple(frame.token for frame in self.stack),
            depth=len(self.stack),
        )

    def subtree_dangling(self, frame):
        """Unfilled slots inside the child of ``frame`` being built now."""
        return self.dangling - frame.child_start_dangling + 1

    def __repr__(self):
        return f"TraversalState({self.library.decode(self.sequence)}, dangling={self.dangling})"


def dangling_after(library, sequence):
    """Closed form ``1 + sum(arity - 1)`` over ``sequence``."""
    return 1 + sum(int(library.arities[token]) - 1 for token in sequence)


def is_complete(library, sequence):
    """True iff ``sequence`` is exactly one complete traversal."""
    dangling = 1
    for token in sequence:
        if dangling == 0:
            return False
        dangling += int(library.arities[token]) - 1
    return dangling == 0


@dataclass
class Node:
    token: int
    start: int
    length: int
    children: list = field(default_factory=list)

    def walk(self, ancestors=()):
        """Yield ``(node, ancestors, parent, left_sibling)`` in pre-order."""
        yield from self._walk(ancestors, None, None)

    def _walk(self, ancestors, parent, left):
        yield self, ancestors, parent, left
        previous = None
        for child in self.children:
            yield from child._walk(ancestors + (self,), self, previous)
            previous = child


def build_tree(library, sequence):
    """Rebuild the tree of a complete traversal."""
    if not is_complete(library, sequence):
        raise ContractViolation(
            f"{library.decode(sequence)} is not a complete traversal"
        )
    position = 0

    def read():
        nonlocal position
        start = position
        token = sequence[position]
        position += 1
        node = Node(token=token, start=start, length=0)
        for _ in range(int(library.arities[token])):
            node.children.append(read())
        node.length = position - start
        return node

    return read()
