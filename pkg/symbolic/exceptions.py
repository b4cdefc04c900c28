"""Errors raised by the search engine.

Management commands map these onto exit codes: ``ConfigError``,
``LibraryError`` and ``PriorError`` exit with 2, ``InfeasibleStep`` with 3.
"""


class SymbolicSearchError(Exception):
    """Base class for every engine error."""


class LibraryError(SymbolicSearchError):
    """The token vocabulary is malformed (duplicates, no terminals, ...)."""


class ContractViolation(SymbolicSearchError):
    """An operation was called outside its precondition."""


class ConfigError(SymbolicSearchError):
    """An experiment, constraint or prior configuration is invalid."""


class PriorError(ConfigError):
    """Prior parameters are out of range (non-positive weights, sigma <= 0)."""


class InfeasibleStep(SymbolicSearchError):
    """The composed constraint mask covers the whole library.

    ``step`` is the index of the token that could not be sampled and
    ``constraints`` names every constraint that masked something there.
    """

    def __init__(self, step, constraints, prefix=None):
        self.step = step
        self.constraints = tuple(constraints)
        self.prefix = tuple(prefix) if prefix is not None else None
        names = ", ".join(self.constraints) or "<none>"
        message = f"every token is constrained at step {step} (constraints: {names})"
        if self.prefix is not None:
            message += f"; prefix {list(self.prefix)}"
        super().__init__(message)

    def __reduce__(self):
        return type(self), (self.step, self.constraints, self.prefix)


class SamplingOverrun(SymbolicSearchError):
    """A sequence did not complete within the sampler's safety cap."""

    def __init__(self, cap, prefix):
        self.cap = cap
        self.prefix = tuple(prefix)
        super().__init__(
            f"sequence still incomplete after {cap} steps; "
            f"prefix starts {list(self.prefix[:12])}"
        )

    def __reduce__(self):
        return type(self), (self.cap, self.prefix)


class EnumerationTooLarge(SymbolicSearchError):
    """The search space is too large to enumerate exactly."""

    def __init__(self, estimate, limit):
        self.estimate = estimate
        self.limit = limit
        super().__init__(
            f"search space holds at least {estimate} sequences, limit is {limit}"
        )

    def __reduce__(self):
        return type(self), (self.estimate, self.limit)
