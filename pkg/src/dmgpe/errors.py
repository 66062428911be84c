"""Exception hierarchy shared by the simulation and the CLI."""


class DMGPEError(Exception):
    """Base class for all package errors."""


class ConfigurationError(DMGPEError, ValueError):
    """Invalid grid, parameter or config value."""

    def __init__(self, message, fields=()):
        super().__init__(message)
        self.fields = list(fields)


class ContractError(DMGPEError, ValueError):
    """Operands are incompatible (e.g. defined on different grids)."""


class DegenerateFieldError(DMGPEError, ValueError):
    """A field with zero norm was passed where a nonzero one is required."""


class PreconditionError(DMGPEError, ValueError):
    pass


class RangeError(DMGPEError, ValueError):
    pass


class NumericalBlowupError(DMGPEError, RuntimeError):
    """Non-finite values or norm drift during propagation."""

    def __init__(self, message, step=None, last_good=None):
        super().__init__(message)
        self.step = step
        self.last_good = last_good


class ConvergenceError(DMGPEError, RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DetectionError(DMGPEError, RuntimeError):
    """Revival or fringe extraction found nothing usable."""
