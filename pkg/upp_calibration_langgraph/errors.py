"""Exception hierarchy shared by the library and the command-line front end.

Every error carries the exit code the CLI reports for it.
"""


class TwinError(Exception):
    exit_code = 1


class ValidationError(TwinError, ValueError):
    """A precondition, range or shape check failed."""
    exit_code = 2


class LayoutMismatchError(ValidationError):
    """A model, device or target file does not belong to the same mesh topology."""


class InsufficientDataError(ValidationError):
    pass


class NumericalError(TwinError):
    exit_code = 3


class DecompositionError(NumericalError):
    pass


class DegenerateScanError(NumericalError):
    """A fringe scan has no usable interference (flat signal or period not bracketed)."""

    def __init__(self, message: str, heater: int | None = None):
        super().__init__(message)
        self.heater = heater


class InfeasiblePowerError(NumericalError):
    def __init__(self, message: str, heaters):
        super().__init__(f"{message} (heaters: {list(heaters)})")
        self.heaters = [int(h) for h in heaters]


class FitDivergenceError(NumericalError):
    def __init__(self, message: str, trace):
        super().__init__(message)
        self.trace = list(trace)


class DeviceFileError(TwinError):
    exit_code = 4
