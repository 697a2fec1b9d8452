"""Exception hierarchy shared across the package."""


class SurvgamError(Exception):
    """Base class for all package errors."""


class DataValidationError(SurvgamError):
    """Input data violates a structural requirement (bad times, bad event codes)."""


class FitError(SurvgamError):
    """A numerical fitting routine failed (divergence, rank deficiency, non-PD matrix)."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class CalibrationError(SurvgamError):
    """Simulator calibration could not match the requested survival targets."""
