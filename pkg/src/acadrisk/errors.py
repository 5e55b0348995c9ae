"""Exception hierarchy shared by every stage of the pipeline."""


class AcadRiskError(Exception):
    """Base class for all package errors."""


class DomainError(AcadRiskError, ValueError):
    """A value lies outside the domain an operation accepts."""


class SchemaError(AcadRiskError):
    """Input columns or schema definitions do not line up."""


class IngestionError(AcadRiskError):
    """A CSV could not be turned into a cohort."""

    def __init__(self, message, row=None, column=None):
        self.reason = message
        if row is not None or column is not None:
            message = f"{message} (row={row}, column={column})"
        super().__init__(message)
        self.row = row
        self.column = column


class SingleClassError(AcadRiskError, ValueError):
    """Training or evaluation needs both classes but only one is present."""


class ConvergenceError(AcadRiskError):
    """An iterative routine did not converge; ``last`` holds the final iterate."""

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class MalformedTreeError(AcadRiskError, ValueError):
    """A tree violates structural invariants (e.g. zero cover)."""
