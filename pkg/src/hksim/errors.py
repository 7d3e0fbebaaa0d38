"""Exception types shared across the package."""


class HksimError(Exception):
    """Base class for all package errors."""


class InvalidStateError(HksimError):
    """Opinion vector is empty or contains non-finite entries."""


class BetaMismatchError(HksimError):
    """Edge-weight assignment keyed on a pair that is not a border edge."""


class HullSizeError(HksimError):
    """Border set too large for exhaustive hull enumeration."""


class DegenerateSurfaceError(HksimError):
    """Stacked surface-normal system is singular with no usable classification."""


class NoEventError(HksimError):
    """Requested root of gap-1 does not exist on the segment."""


class EventCascadeError(HksimError):
    """Events accumulated faster than they could be localized.

    Carries the partial trajectory computed so far in ``trajectory``.
    """

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class ConfigError(HksimError):
    """Malformed run configuration; message contains the offending field path."""
