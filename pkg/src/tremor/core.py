"""Domain types shared across the toolkit.

Sensor geometry, multi-channel vibration records, windowed-energy series,
detected footstep events, and location fits. Every type validates its
invariants at construction and is immutable afterwards, so instances can be
shared freely between threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import (
    InsufficientDataError,
    InvalidArgumentError,
    NotFoundError,
)


def samples_for(seconds: float, sample_rate: float) -> int:
    """Convert a nonnegative duration to a sample count.

    Rounds half away from zero, e.g. 0.4 s at 4096 Hz -> 1638 samples.
    This is the single rounding rule used everywhere seconds meet samples.
    """
    x = seconds * sample_rate
    if not math.isfinite(x) or x < 0:
        raise InvalidArgumentError(f"cannot convert {seconds} s at {sample_rate} Hz to samples")
    return int(math.floor(x + 0.5))


def _frozen_array(values, dtype=float, ndim=None) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    if ndim is not None and arr.ndim != ndim:
        raise InvalidArgumentError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Sensor:
    """One accelerometer: identifier, planar position, zone, and noise flag."""

    id: str
    x: float
    y: float
    zone: str
    noisy: bool = False

    def __post_init__(self):
        if not self.id:
            raise InvalidArgumentError("sensor id must be non-empty")
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvalidArgumentError(f"sensor {self.id!r} has non-finite coordinates")
        if not self.zone:
            raise InvalidArgumentError(f"sensor {self.id!r} must belong to a zone")

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class SensorArray:
    """An ordered collection of sensors with unique ids."""

    sensors: tuple[Sensor, ...]

    def __post_init__(self):
        object.__setattr__(self, "sensors", tuple(self.sensors))
        if not self.sensors:
            raise InvalidArgumentError("sensor array must contain at least one sensor")
        ids = [s.id for s in self.sensors]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise InvalidArgumentError(f"duplicate sensor ids: {dupes}")

    def __len__(self) -> int:
        return len(self.sensors)

    def __iter__(self):
        return iter(self.sensors)

    @cached_property
    def ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.sensors)

    @cached_property
    def zones(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for s in self.sensors:
            seen.setdefault(s.zone, None)
        return tuple(seen)

    @cached_property
    def _by_id(self) -> dict[str, Sensor]:
        return {s.id: s for s in self.sensors}

    def sensor(self, sensor_id: str) -> Sensor:
        try:
            return self._by_id[sensor_id]
        except KeyError:
            raise NotFoundError(f"unknown sensor {sensor_id!r}") from None

    def positions(self) -> np.ndarray:
        """Sensor coordinates as an (n, 2) array in declaration order."""
        return np.array([[s.x, s.y] for s in self.sensors])

    def bounding_box(self, margin: float = 0.0) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the sensor positions, inflated by margin."""
        xs = [s.x for s in self.sensors]
        ys = [s.y for s in self.sensors]
        return (min(xs) - margin, min(ys) - margin, max(xs) + margin, max(ys) + margin)


def distance(source: tuple[float, float], sensor: tuple[float, float]) -> float:
    """Euclidean distance between two planar points."""
    sx, sy = float(source[0]), float(source[1])
    tx, ty = float(sensor[0]), float(sensor[1])
    for v in (sx, sy, tx, ty):
        if not math.isfinite(v):
            raise InvalidArgumentError(f"non-finite coordinate {v!r}")
    return math.hypot(sx - tx, sy - ty)


def zone_sensors(array: SensorArray, zone: str) -> SensorArray:
    """All non-noisy sensors of a zone, in declaration order."""
    if zone not in array.zones:
        raise NotFoundError(f"unknown zone {zone!r} (have {list(array.zones)})")
    kept = tuple(s for s in array.sensors if s.zone == zone and not s.noisy)
    if not kept:
        raise InsufficientDataError(f"zone {zone!r} has no usable (non-noisy) sensors")
    return SensorArray(kept)


@dataclass(frozen=True, eq=False)
class VibrationRecord:
    """Uniformly sampled multi-channel acceleration time series.

    ``samples`` is channel-major: row c holds the samples of ``channels[c]``
    in m/s^2. ``start_time`` is seconds since the epoch of the first sample.
    """

    channels: tuple[str, ...]
    samples: np.ndarray
    sample_rate: float
    start_time: float = 0.0

    def __eq__(self, other):
        if not isinstance(other, VibrationRecord):
            return NotImplemented
        return (
            self.channels == other.channels
            and self.sample_rate == other.sample_rate
            and self.start_time == other.start_time
            and np.array_equal(self.samples, other.samples)
        )

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "samples", _frozen_array(self.samples, ndim=2))
        if not self.channels:
            raise InvalidArgumentError("record must have at least one channel")
        if len(set(self.channels)) != len(self.channels):
            raise InvalidArgumentError("record channel ids must be unique")
        if self.samples.shape[0] != len(self.channels):
            raise InvalidArgumentError(
                f"{len(self.channels)} channels but {self.samples.shape[0]} sample rows"
            )
        if self.samples.shape[1] < 1:
            raise InvalidArgumentError("record must contain at least one sample")
        if not (math.isfinite(self.sample_rate) and self.sample_rate > 0):
            raise InvalidArgumentError(f"sample_rate must be positive, got {self.sample_rate}")
        if not math.isfinite(self.start_time):
            raise InvalidArgumentError("start_time must be finite")
        if not np.isfinite(self.samples).all():
            raise InvalidArgumentError("record contains non-finite samples")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    @property
    def end_time(self) -> float:
        """One sample period past the last sample."""
        return self.start_time + self.duration

    def times(self) -> np.ndarray:
        return self.start_time + np.arange(self.n_samples) / self.sample_rate

    def channel_index(self, channel_id: str) -> int:
        try:
            return self.channels.index(channel_id)
        except ValueError:
            raise NotFoundError(f"record has no channel {channel_id!r}") from None

    def channel(self, channel_id: str) -> np.ndarray:
        return self.samples[self.channel_index(channel_id)]

    def validate_against(self, array: SensorArray) -> None:
        """Check that every channel id resolves against a sensor array."""
        missing = [c for c in self.channels if c not in array._by_id]
        if missing:
            raise InvalidArgumentError(f"channels not present in sensor array: {missing}")


@dataclass(frozen=True, eq=False)
class EnergySeries:
    """Per-channel windowed RMS energy derived from a vibration record.

    Window k of channel c is the RMS of samples [k*window_len, (k+1)*window_len)
    of that channel; a trailing partial window is never included.
    """

    channels: tuple[str, ...]
    energies: np.ndarray
    window_len: int
    sample_rate: float
    start_time: float = 0.0

    def __eq__(self, other):
        if not isinstance(other, EnergySeries):
            return NotImplemented
        return (
            self.channels == other.channels
            and self.window_len == other.window_len
            and self.sample_rate == other.sample_rate
            and self.start_time == other.start_time
            and np.array_equal(self.energies, other.energies)
        )

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "energies", _frozen_array(self.energies, ndim=2))
        if self.energies.shape[0] != len(self.channels):
            raise InvalidArgumentError("channel count must equal energy row count")
        if self.window_len < 1:
            raise InvalidArgumentError("window_len must be at least one sample")
        if self.sample_rate <= 0:
            raise InvalidArgumentError("sample_rate must be positive")
        if not np.isfinite(self.energies).all() or (self.energies < 0).any():
            raise InvalidArgumentError("energies must be finite and nonnegative")

    @property
    def n_windows(self) -> int:
        return self.energies.shape[1]

    @property
    def window_seconds(self) -> float:
        return self.window_len / self.sample_rate

    def window_time(self, index: int) -> float:
        """Start time of window ``index``."""
        return self.start_time + index * self.window_seconds

    def channel_index(self, channel_id: str) -> int:
        try:
            return self.channels.index(channel_id)
        except ValueError:
            raise NotFoundError(f"series has no channel {channel_id!r}") from None


@dataclass(frozen=True)
class FootstepEvent:
    """A detected (or planted) footstep.

    ``window_index`` refers to the energy series the event was detected in;
    planted events from the simulator use window_len=1 semantics, i.e. the
    sample index. ``time`` is the absolute start time of that window.
    """

    window_index: int
    time: float
    per_sensor_energy: dict[str, float]
    truth_location: tuple[float, float] | None = None
    participant_id: str | None = None
    sex_label: str | None = None

    def __post_init__(self):
        if not self.per_sensor_energy:
            raise InvalidArgumentError("event must carry at least one sensor energy")
        for sid, e in self.per_sensor_energy.items():
            if not (math.isfinite(e) and e >= 0):
                raise InvalidArgumentError(f"energy for sensor {sid!r} must be >= 0, got {e}")
        if not math.isfinite(self.time):
            raise InvalidArgumentError("event time must be finite")
        if self.sex_label is not None and self.sex_label not in ("F", "M"):
            raise InvalidArgumentError(f"sex_label must be 'F' or 'M', got {self.sex_label!r}")

    def strongest_sensor(self) -> str:
        return max(self.per_sensor_energy, key=lambda sid: self.per_sensor_energy[sid])


@dataclass(frozen=True)
class LocationEstimate:
    """Result of fitting the exponential attenuation model to event energies."""

    x: float
    y: float
    source_energy: float
    attenuation: float
    residual_norm: float
    iterations: int
    converged: bool
    high_residual: bool = False

    def __post_init__(self):
        if self.source_energy < 0:
            raise InvalidArgumentError("source_energy must be nonnegative")
        if self.attenuation < 0:
            raise InvalidArgumentError("attenuation must be nonnegative")
        if self.converged and not math.isfinite(self.residual_norm):
            raise InvalidArgumentError("a converged fit must have a finite residual")

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)
