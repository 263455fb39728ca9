"""Exception types shared across the package."""


class GridshedError(Exception):
    """Base class for all package errors."""


class ParseError(GridshedError):
    """Input file is malformed (bad JSON, missing keys, wrong types)."""


class ValidationError(GridshedError):
    """Input parsed but violates a model invariant."""


class DimensionError(ValidationError):
    """A series or matrix has the wrong shape for the declared horizon."""


class RangeError(ValidationError):
    """A scalar parameter is outside its allowed range."""


class ModelError(GridshedError):
    """The constraint builder hit a structurally impossible request."""


class NumericalError(GridshedError):
    """The solver could not produce a numerically trustworthy answer."""


class BudgetExceeded(GridshedError):
    """Too many free binaries for exhaustive enumeration."""


class InfeasibleError(GridshedError):
    """The scheduling problem has no feasible solution."""

    def __init__(self, message, diagnosis=None):
        super().__init__(message)
        self.diagnosis = diagnosis


class SolverLimitError(GridshedError):
    """Node or time limit hit before reaching the gap target."""


class DomainError(GridshedError):
    """Arguments outside the mathematical domain of an operation."""
