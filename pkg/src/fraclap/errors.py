"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class NumericalError(ArithmeticError):
    """A numerical procedure failed (breakdown, non-convergence, ...)."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class PoleError(ZeroDivisionError):
    """Evaluation requested exactly at a pole."""


class StepFailure(NumericalError):
    """A single implicit time step could not be completed."""
