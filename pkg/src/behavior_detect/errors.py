"""Exception types raised by the estimators and validators."""


class BehaviorDetectError(Exception):
    """Base class for all package errors."""


class DegenerateSystemError(BehaviorDetectError):
    """The plant is unstable, uncontrollable or unobservable."""


class InvalidWindowError(BehaviorDetectError, ValueError):
    """Minor-behavior window length is incompatible with the horizon."""


class InsufficientDataError(BehaviorDetectError):
    """Too little (or degenerate) data to identify the minor-behavior model."""


class UnstableModelError(BehaviorDetectError):
    """The identified minor-behavior dynamics are not stable."""

    def __init__(self, message: str, spectral_radius: float):
        super().__init__(message)
        self.spectral_radius = spectral_radius


class DegenerateEstimateError(BehaviorDetectError):
    """A covariance estimate is identically zero and cannot be inverted."""
