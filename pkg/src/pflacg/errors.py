"""Exception hierarchy shared by the toolkit."""

from __future__ import annotations


class PflacgError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(PflacgError, ValueError):
    """An input vector or matrix has the wrong shape."""


class DegenerateInputError(PflacgError, ValueError):
    """Inputs are valid in shape but describe a degenerate case."""


class ConfigurationError(PflacgError, ValueError):
    """A problem or run description is invalid."""


class ContractViolation(PflacgError, ValueError):
    """A caller broke a documented precondition."""


class InfeasibleError(PflacgError):
    """A polytope description admits no point."""


class InternalConsistencyError(PflacgError):
    """A state that correct code should never reach, e.g. an unbounded LMO."""


class DivergenceError(PflacgError):
    """A safeguard ceiling was crossed (e.g. the smoothness estimate exploded)."""


class AccuracyNotReached(PflacgError):
    """An iterative solver hit its iteration cap before certifying accuracy.

    Attributes
    ----------
    certificate:
        Best optimality certificate reached.
    target:
        Certificate value that was requested.
    lam:
        Barycentric iterate attaining ``certificate``.
    """

    def __init__(self, message: str, certificate: float, target: float, lam=None):
        super().__init__(message)
        self.certificate = certificate
        self.target = target
        self.lam = lam
