"""Exception hierarchy shared by all solvers."""


class AnnbifError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(AnnbifError, ValueError):
    """A configuration violates a field invariant.

    ``field`` names the offending entry so front ends can report it.
    """

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class SolverError(AnnbifError):
    """Base for numerical failures.  ``p`` is filled in by scans."""

    p = None


class NoPositiveSolution(SolverError):
    pass


class NonConvergence(SolverError):
    pass


class EigenSolveFailure(SolverError):
    pass


class LinearSolveFailure(SolverError):
    pass


class CorrectorFailure(SolverError):
    pass


class PositivityLoss(SolverError):
    pass


class DomainError(AnnbifError, ValueError):
    pass


class GridMismatch(AnnbifError, ValueError):
    pass
