"""Exception types shared across the package."""


class WasncalError(Exception):
    """Base class for all package errors."""


class ZeroTotalWeight(WasncalError):
    """Weighted average requested with all weights zero."""


class DegenerateConfiguration(WasncalError):
    """Point configuration does not determine a rigid transform."""


class InsufficientObservations(WasncalError):
    """Too few nodes/sources to run a calibration."""


class ZeroVector(WasncalError):
    """Cosine similarity requested for a zero-norm vector."""


class ImplausibleGain(WasncalError):
    """Received level exceeds the transmitted level beyond the guard band."""


class NoPeak(WasncalError):
    """No correlation lag cleared the peak threshold."""


class ZeroEnergy(WasncalError):
    """Delay estimation requested for a zero-energy signal."""


class CoincidentPositions(WasncalError):
    """Bearing between two nodes at the same position is undefined."""


class IdMismatch(WasncalError):
    """Estimated and reference snapshots carry different node ids."""


class SizeLimitExceeded(WasncalError):
    """Exhaustive matching requested beyond the supported size."""


class InvalidConfig(WasncalError):
    """Scenario or experiment configuration failed validation."""
