"""
Exception hierarchy for birkhoff_ps

Subclasses that also derive from ValueError describe bad input. The others
report numerical failures on valid input.
"""
from typing import Optional


class BirkhoffPSError(Exception):
    """Base class for every error raised by this package"""


class GridError(BirkhoffPSError, ValueError):
    """Invalid grid kind, order or time domain"""


class InterpolationError(BirkhoffPSError, ValueError):
    """Bad nodes, samples or query points for interpolation"""


class BirkhoffError(BirkhoffPSError, ValueError):
    """Birkhoff operators cannot be built or compared"""


class ConditioningError(BirkhoffPSError, ValueError):
    """Unsupported test matrix or degenerate condition-number input"""


class ProblemDefinitionError(BirkhoffPSError, ValueError):
    """Optimal control problem is malformed"""


class TranscriptionError(BirkhoffPSError, ValueError):
    """Problem cannot be transcribed on the requested grid or layout"""


class PropagationError(BirkhoffPSError, ValueError):
    """Propagation inputs are inconsistent"""


class UsageError(BirkhoffPSError, ValueError):
    """Command-line arguments are invalid"""


class SingularSystemError(BirkhoffPSError):
    """A collocation linear system is numerically singular"""

    def __init__(self, message: str, condition_number: Optional[float] = None):
        super().__init__(message)
        self.condition_number = condition_number


class SolverError(BirkhoffPSError, ValueError):
    """Solver inputs have inconsistent dimensions or options"""


class InitialGuessError(BirkhoffPSError):
    """A cold-start guess could not be constructed"""
