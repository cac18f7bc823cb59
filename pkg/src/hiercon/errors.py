"""Exception types shared across the package."""


class HierconError(Exception):
    """Base class for all package errors."""


class StructuralError(HierconError, ValueError):
    """A graph or matrix does not have the shape the model requires."""


class DomainError(HierconError, ValueError):
    """An argument lies outside the domain of the operation."""


class NumericalError(HierconError, ArithmeticError):
    """An iterative method failed to converge."""


class InvalidSpecError(HierconError, ValueError):
    """Raised when a hierarchy spec fails validation.

    The full list of violations is kept on ``violations``.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations[:5])
        more = len(self.violations) - 5
        if more > 0:
            lines += f"; ... ({more} more)"
        super().__init__(f"invalid hierarchy spec: {lines}")
