class ScpError(Exception):
    """Base class for all scpkit errors."""


class UsageError(ScpError, ValueError):
    """Bad dimensions, arguments or configuration."""


class EvaluationError(ScpError, ArithmeticError):
    """A problem function produced non-finite output."""


class CapabilityError(ScpError):
    """Requested derivative information is not available."""


class SolverError(ScpError):
    """A convex solve failed; ``status`` carries the solver status string."""

    def __init__(self, message, status=None, solution=None):
        super().__init__(message)
        self.status = status
        self.solution = solution


class InitializationError(SolverError):
    pass


class StepError(SolverError):
    pass


class OracleError(ScpError):
    """Reference KKT computation did not converge."""
