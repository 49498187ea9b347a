"""Exception hierarchy for the laboratory."""


class LabError(Exception):
    """Base class for every error raised by :mod:`dnlap`."""


class ConfigError(LabError, ValueError):
    pass


class RegimeError(LabError, ValueError):
    pass


class DegenerateError(LabError, ValueError):
    pass


class DomainError(LabError, ValueError):
    pass


class DomainMismatch(LabError, ValueError):
    pass


class GridMismatch(LabError, ValueError):
    pass


class SingularError(LabError, ValueError):
    pass


class ResolutionError(LabError, ValueError):
    pass


class MassError(LabError, ValueError):
    pass


class PreconditionError(LabError, ValueError):
    pass


class WindowError(LabError, ValueError):
    pass


class QualityError(LabError, RuntimeError):
    pass


class SearchFailure(LabError, RuntimeError):
    pass


class MissingArtifact(LabError, FileNotFoundError):
    pass


class NonConvergence(LabError, RuntimeError):
    """Inner solver failed. ``residual`` holds the last residual, ``step`` the
    failing time step when raised from a march."""

    def __init__(self, message, residual=float("nan"), step=None):
        super().__init__(message)
        self.residual = residual
        self.step = step
