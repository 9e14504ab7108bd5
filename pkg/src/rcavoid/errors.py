"""Exception types shared across the package."""


class ContractError(ValueError):
    """An operation was called with arguments that break its preconditions."""


class SingularChartError(ContractError):
    """A point lies inside the exclusion margin around a chart singularity."""


class InjectivityError(ContractError):
    """A tangent vector or point pair lies outside the injectivity guard."""


class CollisionGuardError(ContractError):
    """A squared inter-agent distance fell below the potential's guard.

    ``value`` is the offending squared distance; ``time`` and ``pair`` are
    filled in when the violation happened during integration.
    """

    def __init__(self, message, value=None, time=None, pair=None):
        super().__init__(message)
        self.value = value
        self.time = time
        self.pair = pair


class IllPosedError(ContractError):
    """Boundary conditions do not match the number of unknowns."""


class ScenarioError(ValueError):
    """A scenario file could not be parsed or failed validation."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SolverError(RuntimeError):
    """Base class for solver failures; carries the best iterate found."""

    def __init__(self, message, trajectory=None, report=None):
        super().__init__(message)
        self.trajectory = trajectory
        self.report = report


class NonConvergenceError(SolverError):
    pass


class ContinuationStallError(NonConvergenceError):
    pass
