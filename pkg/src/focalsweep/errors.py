"""Exception hierarchy shared by all focalsweep modules.

Two broad families matter for the CLI exit codes: configuration/input
problems (exit 2) and model/domain failures (exit 3).
"""


class FocalSweepError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ValidationError(FocalSweepError):
    """Malformed input: bad config values, missing files, schema violations."""

    exit_code = 2


class DomainError(FocalSweepError):
    """Physically or mathematically invalid request for the current model."""

    exit_code = 3


class SingularConfigurationError(DomainError):
    """Optical geometry degenerates (the tunable lens images the pupil onto
    the object point, or an image recedes to infinity)."""


class RangeUnachievableError(DomainError):
    """No waveform in the database covers the requested power range."""


class WindowTooNarrowError(DomainError):
    """No whole projector frame fits inside a usable power window.

    Raising this rather than silently misplacing a frame lets the caller
    retry with a larger power tolerance (or a staircase drive, which this
    package does not model).
    """


class DetectionError(DomainError):
    """Dot-grid measurement could not identify the expected blur circles."""
