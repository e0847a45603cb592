"""Exception hierarchy for lipgraph.

Every error derives from :class:`LipgraphException` and from the builtin that
best describes it, so callers can catch either.
"""

from typing import Optional

import numpy as np


class LipgraphException(Exception):
    pass


class InstanceError(LipgraphException, ValueError):
    """An instance violates one of its invariants."""


class WeightFloorError(InstanceError):
    """A weight change would push an edge weight to or below the floor."""

    def __init__(self, message: str, edge: int, step: Optional[int] = None):
        super().__init__(message)
        self.edge = edge
        self.step = step


class InstanceFormatError(InstanceError):
    """An instance file could not be parsed."""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InstanceTypeError(LipgraphException, TypeError):
    """The instance has the wrong kind for the requested operation."""


class ParameterError(LipgraphException, ValueError):
    """An algorithm precondition failed. The message names the precondition."""


class SupportTooLargeError(ParameterError):
    pass


class SolverConvergenceError(LipgraphException, RuntimeError):
    """Iteration cap reached without meeting the stopping rule."""

    def __init__(self, message: str, last_iterate: Optional[np.ndarray] = None):
        super().__init__(message)
        self.last_iterate = last_iterate


class SpectralConvergenceError(SolverConvergenceError):
    pass


class NumericError(LipgraphException, ArithmeticError):
    pass


class TapeExhaustedError(LipgraphException, IndexError):
    pass


class ReportFormatError(LipgraphException, ValueError):
    """A report file does not match its schema."""
