"""Exception types raised across the toolkit.

Every failure mode surfaces as one of these so callers can tell apart bad
arguments, missing entities, out-of-range requests, malformed files, and
geometry that cannot support a fit.
"""


class TremorError(Exception):
    """Base class for all toolkit errors."""


class InvalidArgumentError(TremorError, ValueError):
    """An argument violates a precondition (non-finite, negative, ragged...)."""


class NotFoundError(TremorError, KeyError):
    """A named entity (sensor, zone, channel) does not exist."""

    def __str__(self):  # KeyError quotes its message; keep it readable
        return self.args[0] if self.args else ""


class RangeError(TremorError, ValueError):
    """A time span, window length, or index lies outside the valid range."""


class ParseError(TremorError, ValueError):
    """A file could not be parsed; the message names the offending location."""


class ValidationError(TremorError, ValueError):
    """A loaded document (manifest, layout, config) violates its invariants."""


class InsufficientDataError(TremorError, ValueError):
    """Too few usable observations for the requested operation."""


class DegenerateGeometryError(TremorError, ValueError):
    """Sensor geometry cannot constrain the fit (collinear or coincident)."""
