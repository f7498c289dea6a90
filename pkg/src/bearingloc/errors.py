"""Exception hierarchy shared across the package."""


class BearingLocError(Exception):
    """Base class for all package errors."""


class ZeroVector(BearingLocError, ValueError):
    pass


class CoincidentPoints(BearingLocError, ValueError):
    """Two points that must be distinct (observer/target, seeker/estimate) coincide."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DegenerateGeometry(BearingLocError, ValueError):
    """The measurement geometry does not determine a unique position."""


class Singular(BearingLocError, ValueError):
    pass


class ConfigError(BearingLocError, ValueError):
    """Invalid scenario or measurement input."""
