"""Windowed RMS energy - the anonymization transform - plus event detection,
per-event energy aggregation, and interval event counting.

The energy of a window of w samples is sqrt(mean(x^2)) over the window.
Storing only these values in place of the raw signal is what removes the
waveform detail that makes a walker identifiable, while keeping enough to
localize footsteps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import EnergySeries, FootstepEvent, SensorArray, VibrationRecord
from .errors import InvalidArgumentError, RangeError


def windowed_rms(rows: np.ndarray, window_len: int) -> np.ndarray:
    """RMS over consecutive windows of ``window_len`` samples, row by row.

    Trailing samples that do not fill a complete window are dropped; padding
    them would bias the last energy value downward.
    """
    rows = np.asarray(rows, dtype=float)
    if rows.ndim == 1:
        return windowed_rms(rows[None, :], window_len)[0]
    n = rows.shape[1]
    if window_len < 1 or window_len > n:
        raise RangeError(f"window_len must be in [1, {n}], got {window_len}")
    k = n // window_len
    trimmed = rows[:, : k * window_len].reshape(rows.shape[0], k, window_len)
    return np.sqrt(np.mean(trimmed**2, axis=2))


def windowed_energy(record: VibrationRecord, window_len: int) -> EnergySeries:
    """Reduce a record to per-channel windowed RMS energies."""
    energies = windowed_rms(record.samples, window_len)
    return EnergySeries(
        channels=record.channels,
        energies=energies,
        window_len=window_len,
        sample_rate=record.sample_rate,
        start_time=record.start_time,
    )


@dataclass(frozen=True)
class EventDetectorConfig:
    """Peak-detector knobs.

    A window is an event candidate when the energy summed over channels is a
    local maximum exceeding ``threshold_factor`` times the summed noise floor.
    The floor defaults to the per-channel median energy (robust against the
    footsteps themselves); pass ``noise_floor`` to pin it explicitly.
    Candidates closer than ``min_separation`` collapse onto the largest peak.
    """

    threshold_factor: float = 4.0
    min_separation: float = 0.25
    noise_floor: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.threshold_factor > 1:
            raise InvalidArgumentError(
                f"threshold_factor must exceed 1, got {self.threshold_factor}"
            )
        if self.min_separation < 0:
            raise InvalidArgumentError("min_separation must be nonnegative")
        if self.noise_floor is not None:
            floors = tuple(float(f) for f in self.noise_floor)
            if any(f < 0 or not math.isfinite(f) for f in floors):
                raise InvalidArgumentError("noise_floor entries must be finite and >= 0")
            object.__setattr__(self, "noise_floor", floors)


def channel_noise_floor(series: EnergySeries, config: EventDetectorConfig) -> np.ndarray:
    """Per-channel noise floor: the configured one, or the median energy."""
    if config.noise_floor is not None:
        if len(config.noise_floor) != len(series.channels):
            raise InvalidArgumentError(
                f"noise_floor has {len(config.noise_floor)} entries"
                f" for {len(series.channels)} channels"
            )
        return np.array(config.noise_floor)
    return np.median(series.energies, axis=1)


def detect_events(
    series: EnergySeries, config: EventDetectorConfig | None = None
) -> list[FootstepEvent]:
    """Find footstep events as peaks of the summed-over-channels energy.

    Returns events sorted by time, pairwise separated by at least
    ``min_separation`` seconds; an empty list is a valid result.
    """
    config = config or EventDetectorConfig()
    total = series.energies.sum(axis=0)
    k = len(total)
    threshold = config.threshold_factor * float(channel_noise_floor(series, config).sum())

    candidates = []
    for i in range(k):
        left_ok = i == 0 or total[i] > total[i - 1]
        right_ok = i == k - 1 or total[i] >= total[i + 1]
        if left_ok and right_ok and total[i] > threshold:
            candidates.append(i)

    # keep the largest peak among any group closer than min_separation
    kept: list[int] = []
    window_s = series.window_seconds
    for i in sorted(candidates, key=lambda i: (-total[i], i)):
        if all(abs(i - j) * window_s >= config.min_separation for j in kept):
            kept.append(i)
    kept.sort()

    return [
        FootstepEvent(
            window_index=i,
            time=series.window_time(i),
            per_sensor_energy={
                cid: float(series.energies[c, i]) for c, cid in enumerate(series.channels)
            },
        )
        for i in kept
    ]


class EventEnergy(NamedTuple):
    energies: dict[str, float]
    truncated: bool


def event_energy(series: EnergySeries, event_window: int, duration: float) -> EventEnergy:
    """Aggregate windowed energies over ``[event start, event start + duration)``.

    The per-sensor result is the RMS of the covered window energies, which
    equals the plain windowed RMS computed over the concatenated span when the
    windows tile it exactly. A span running past the end of the series is
    truncated and flagged.
    """
    if not 0 <= event_window < series.n_windows:
        raise RangeError(f"event_window {event_window} outside [0, {series.n_windows})")
    if not duration > 0:
        raise InvalidArgumentError(f"duration must be positive, got {duration}")
    n = max(1, int(math.ceil(duration / series.window_seconds - 1e-9)))
    end = event_window + n
    truncated = end > series.n_windows
    end = min(end, series.n_windows)
    block = series.energies[:, event_window:end]
    combined = np.sqrt(np.mean(block**2, axis=1))
    return EventEnergy(
        energies={cid: float(combined[c]) for c, cid in enumerate(series.channels)},
        truncated=truncated,
    )


@dataclass(frozen=True)
class IntervalCount:
    interval_start: float
    count: int


def count_events_per_interval(
    events: list[FootstepEvent],
    interval: float,
    t_start: float,
    t_end: float,
    sensors: SensorArray | None = None,
) -> dict[str, list[IntervalCount]]:
    """Histogram event counts over half-open intervals of ``interval`` seconds.

    With a sensor array the counts are grouped by the zone of each event's
    strongest sensor; otherwise everything lands in a single "all" group.
    Events outside [t_start, t_end) are ignored; an event exactly on a bin
    boundary belongs to the later bin.
    """
    if not t_start < t_end:
        raise InvalidArgumentError(f"need t_start < t_end, got [{t_start}, {t_end})")
    if not interval > 0:
        raise InvalidArgumentError(f"interval must be positive, got {interval}")
    n_bins = max(1, int(math.ceil((t_end - t_start) / interval - 1e-12)))
    starts = [t_start + b * interval for b in range(n_bins)]

    if sensors is None:
        groups = ["all"]
    else:
        groups = list(sensors.zones)
    counts = {g: [0] * n_bins for g in groups}

    for event in events:
        if not t_start <= event.time < t_end:
            continue
        if sensors is None:
            group = "all"
        else:
            group = sensors.sensor(event.strongest_sensor()).zone
        b = int((event.time - t_start) // interval)
        if b >= n_bins:  # float edge right at t_end
            continue
        counts[group][b] += 1

    return {
        g: [IntervalCount(starts[b], counts[g][b]) for b in range(n_bins)] for g in groups
    }


def write_energy_csv(series: EnergySeries, path) -> None:
    """Plot-ready export: ``window_index,t,<id1>,...`` one row per window."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(["window_index", "t", *series.channels]) + "\n")
        for k in range(series.n_windows):
            cells = [str(k), "%.10g" % series.window_time(k)]
            cells.extend("%.10g" % v for v in series.energies[:, k])
            fh.write(",".join(cells) + "\n")
