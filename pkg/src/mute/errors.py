"""Exception types shared across the package.

All of them subclass ``ValueError`` (or ``RuntimeError`` for numeric failures)
so callers that only care about "bad input" can catch the builtin.
"""


class CodebookParseError(ValueError):
    """A serialized codebook, weight matrix or dataset is malformed."""


class InfeasibleConfigError(ValueError):
    """The requested code parameters admit no valid codebook."""


class InstanceTooLargeError(ValueError):
    """Exhaustive search refused because the search space exceeds the cap."""

    def __init__(self, size, cap):
        super().__init__(f"search space has {size} ordered selections, cap is {cap}")
        self.size = size
        self.cap = cap


class DegenerateWeightsError(ValueError):
    """Confusion evidence yields no positive off-diagonal weight."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or gradient."""
