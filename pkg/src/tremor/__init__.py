"""tremor: footstep localization from floor-vibration arrays, with
energy-window anonymization and its privacy/accuracy trade-off experiments."""

__version__ = "0.1.0"

from .core import (
    EnergySeries,
    FootstepEvent,
    LocationEstimate,
    Sensor,
    SensorArray,
    VibrationRecord,
    distance,
    samples_for,
    zone_sensors,
)
from .errors import (
    DegenerateGeometryError,
    InsufficientDataError,
    InvalidArgumentError,
    NotFoundError,
    ParseError,
    RangeError,
    TremorError,
    ValidationError,
)

__all__ = [
    "__version__",
    "DegenerateGeometryError",
    "EnergySeries",
    "FootstepEvent",
    "InsufficientDataError",
    "InvalidArgumentError",
    "LocationEstimate",
    "NotFoundError",
    "ParseError",
    "RangeError",
    "Sensor",
    "SensorArray",
    "TremorError",
    "ValidationError",
    "VibrationRecord",
    "distance",
    "samples_for",
    "zone_sensors",
]
