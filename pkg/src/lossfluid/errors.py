"""Exception types shared across the package.

The CLI maps these onto process exit codes; library users can catch the
base class or the specific category they care about.
"""


class LossFluidError(Exception):
    """Base class for all package errors."""


class ConfigError(LossFluidError):
    """Invalid configuration: bad parameters, violated preconditions."""


class DomainError(LossFluidError):
    """An evaluation was requested outside a function's domain."""


class NumericalError(LossFluidError):
    """A nonfinite value appeared during a numerical computation.

    Carries the grid index at which the problem was first detected.
    """

    def __init__(self, message: str, index: int | None = None):
        if index is not None:
            message = f"{message} (grid index {index})"
        super().__init__(message)
        self.index = index


class BracketError(LossFluidError):
    """A root/search bracket does not contain a feasible point."""


class InfeasibleError(LossFluidError):
    """No candidate in the search set satisfies the constraint.

    ``max_achieved`` records the best constraint value seen, to help
    diagnose how far the instance is from feasibility.
    """

    def __init__(self, message: str, max_achieved: float | None = None):
        if max_achieved is not None:
            message = f"{message} (max achieved acceptance {max_achieved:.6g})"
        super().__init__(message)
        self.max_achieved = max_achieved
