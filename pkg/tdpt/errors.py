"""
TDPT Error Hierarchy

Every failure raised by the library derives from TdptError so that the CLI can map
it to an exit code:
- configuration and grid problems -> 2
- singular/resonant solves and domain violations -> 3
- estimation and optimizer failures -> 4
"""

from typing import Optional


class TdptError(Exception):
    """Base exception for the TDPT library."""
    exit_code: int = 1


class ConfigurationError(TdptError):
    """Invalid experiment configuration."""
    exit_code = 2


class GridMismatchError(TdptError, ValueError):
    """Frequency grids or tensor tables that do not line up."""
    exit_code = 2


class ShapeValidationError(TdptError, ValueError):
    """Invalid boundary curve (node count, self-intersection, area guard)."""
    exit_code = 2


class DomainError(TdptError, ValueError):
    """Argument outside the domain of an operation."""
    exit_code = 3


class SingularityError(DomainError):
    """Evaluation at the singularity of a kernel."""
    pass


class ResonanceError(TdptError):
    """Near-singular boundary system (Dirichlet resonance or degenerate discretization)."""
    exit_code = 3

    def __init__(self, message: str, condition_number: Optional[float] = None):
        super().__init__(message)
        self.condition_number = condition_number


class IllPosedError(TdptError):
    """Least-squares inversion with insufficient numerical rank."""
    exit_code = 3

    def __init__(self, message: str, rank: Optional[int] = None):
        super().__init__(message)
        self.rank = rank


class EstimationError(TdptError):
    """Size, contrast or equivalent-ellipse estimate could not be formed."""
    exit_code = 4


class StepFailureError(EstimationError):
    """Shape optimizer could not produce an admissible step."""
    pass
