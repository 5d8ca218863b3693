"""Exception hierarchy shared by all stages of the simulator."""


class ReorderDGError(Exception):
    """Base class for all package errors."""


class ConfigurationError(ReorderDGError, ValueError):
    """Invalid input: bad case file key, inconsistent schedule, unsupported option."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class MeshLoadError(ReorderDGError, ValueError):
    """Malformed or geometrically invalid mesh file."""

    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class DomainError(ReorderDGError, ValueError):
    """Argument outside the domain where a property function is defined."""


class SingularityError(ReorderDGError, ZeroDivisionError):
    """Both phases immobile, so fractional flow is undefined."""


class StepFailure(ReorderDGError, RuntimeError):
    """A nonlinear stage did not converge; the driver should cut the time step."""

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage


class RunAborted(ReorderDGError, RuntimeError):
    """Time step fell below the configured minimum."""
