"""Exceptions raised by halotrain.

Each error also derives from the builtin callers would otherwise catch, so
``except ValueError`` keeps working around input validation.
"""


class HalotrainError(Exception):
    """Base class for every error raised by this package."""


class GraphError(HalotrainError, ValueError):
    """Malformed graph input or an inconsistent subgraph request."""


class PartitionError(HalotrainError, ValueError):
    """Invalid partition count, capacity or assignment file."""


class DatasetError(HalotrainError, ValueError):
    """Malformed dataset directory."""


class ProtocolError(HalotrainError, RuntimeError):
    """A worker broke the exchange protocol (timeout, wrong tag, wrong row count)."""


class DivergenceError(HalotrainError, RuntimeError):
    """Training produced a non-finite loss."""


class VarianceBoundError(HalotrainError, AssertionError):
    """Empirical estimation variance exceeded its analytic upper bound."""


class UsageError(HalotrainError, ValueError):
    """Bad command-line arguments."""
