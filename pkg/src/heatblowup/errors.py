"""Exception hierarchy shared by all modules."""


class HeatBlowupError(Exception):
    """Base class for library errors."""


class DomainError(HeatBlowupError, ValueError):
    """A grid or function does not cover the requested interval."""


class ScaleError(HeatBlowupError, ValueError):
    """Non-positive scale parameter."""


class IntegrationError(HeatBlowupError, RuntimeError):
    """An ODE or PDE integrator failed (step rejected below minimum, ...)."""


class BracketError(HeatBlowupError, RuntimeError):
    """A root or eigenvalue search could not bracket its target."""


class TimeRangeError(HeatBlowupError, ValueError):
    """Evaluation time outside the admissible interval."""


class GrowthError(HeatBlowupError, ValueError):
    """Input exceeds the polynomial-growth envelope."""


class QuadratureError(HeatBlowupError, RuntimeError):
    """Quadrature failed to reach the requested tolerance."""


class BandError(HeatBlowupError, RuntimeError):
    """Solution left an admissible band (carries the offending time)."""

    def __init__(self, message: str, t: float | None = None):
        super().__init__(message)
        self.t = t


class EnvelopeError(HeatBlowupError, ValueError):
    """Input violates its own envelope bound."""


class ResolutionError(HeatBlowupError, ValueError):
    """Grid too coarse for the requested run."""


class WindowError(HeatBlowupError, ValueError):
    """Fit window holds too few samples."""
