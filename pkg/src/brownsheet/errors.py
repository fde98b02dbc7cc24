"""Exception hierarchy shared by all modules."""


class BrownSheetError(Exception):
    """Base class for library errors."""


class ConfigurationError(BrownSheetError, ValueError):
    """Invalid grid, shape or parameter combination."""


class ValidationError(BrownSheetError, ValueError):
    """Input data violates a documented precondition."""


class DegenerateSpectrumError(BrownSheetError, ArithmeticError):
    """Eigenvalue gap below the admissible threshold."""


class SingularDriftError(DegenerateSpectrumError):
    """A zero eigenvalue gap makes the drift undefined."""


class ConvergenceError(BrownSheetError, ArithmeticError):
    """Iterative solver or quadrature did not converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class RegimeError(BrownSheetError):
    """Requested computation is only defined for a point-mass initial law."""


class ConditioningError(BrownSheetError, ArithmeticError):
    """Evaluation point too close to a singular set for the chosen steps."""


class DiagnosticError(BrownSheetError):
    """A Monte Carlo study could not produce any usable replica."""

    def __init__(self, message, discards=0):
        super().__init__(message)
        self.discards = discards


class AlignmentError(ConfigurationError):
    """A region does not fall on grid lines; snapping is never silent."""
