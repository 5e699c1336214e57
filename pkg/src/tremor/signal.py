"""Signal conditioning applied before any energy or classification step.

Two operations live here: moving-average detrending (removes sensor charge
drift and low-frequency building noise) and footstep alignment (cuts every
detected step into a fixed-length vector so steps are comparable).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import VibrationRecord, samples_for
from .errors import InvalidArgumentError, RangeError


def detrend(record: VibrationRecord, window: float) -> VibrationRecord:
    """Subtract a centered moving average from every channel.

    The averaging window is ``2*(round(window*sample_rate)//2) + 1`` samples,
    i.e. the requested length rounded to the nearest odd count so the window
    is symmetric around each sample; at the edges it shrinks symmetrically to
    whatever fits. An odd symmetric window reproduces straight-line trends
    exactly in the interior, so detrending a ramp leaves zero residual there.
    """
    if not window > 0:
        raise InvalidArgumentError(f"detrend window must be positive, got {window}")
    w = samples_for(window, record.sample_rate)
    if w < 1:
        raise InvalidArgumentError(
            f"window of {window} s spans no samples at {record.sample_rate} Hz"
        )
    n = record.n_samples
    if w > n:
        raise RangeError(f"detrend window ({w} samples) is longer than the record ({n})")

    half = w // 2
    idx = np.arange(n)
    h = np.minimum(half, np.minimum(idx, n - 1 - idx))
    lo = idx - h
    hi = idx + h
    csum = np.concatenate(
        [np.zeros((record.samples.shape[0], 1)), np.cumsum(record.samples, axis=1)], axis=1
    )
    moving_avg = (csum[:, hi + 1] - csum[:, lo]) / (2 * h + 1)
    return VibrationRecord(
        channels=record.channels,
        samples=record.samples - moving_avg,
        sample_rate=record.sample_rate,
        start_time=record.start_time,
    )


@dataclass(frozen=True, eq=False)
class AlignedFootstep:
    """A fixed-length cut of one channel around a detection instant.

    The detection instant sits at sample ``round(pre * sample_rate)``; every
    footstep cut with the same (pre, post, sample_rate) has the same length,
    which is what the classifiers downstream require.
    """

    sensor_id: str
    samples: np.ndarray
    pre: float
    post: float
    sample_rate: float

    def __post_init__(self):
        arr = np.array(self.samples, dtype=float)
        if arr.ndim != 1:
            raise InvalidArgumentError("aligned footstep samples must be 1-d")
        expected = samples_for(self.pre + self.post, self.sample_rate)
        if len(arr) != expected:
            raise InvalidArgumentError(
                f"expected {expected} samples for pre={self.pre}, post={self.post}"
                f" at {self.sample_rate} Hz, got {len(arr)}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return len(self.samples)

    def __eq__(self, other):
        if not isinstance(other, AlignedFootstep):
            return NotImplemented
        return (
            self.sensor_id == other.sensor_id
            and (self.pre, self.post, self.sample_rate)
            == (other.pre, other.post, other.sample_rate)
            and np.array_equal(self.samples, other.samples)
        )

    @property
    def detection_index(self) -> int:
        return samples_for(self.pre, self.sample_rate)


def align_footstep(
    record: VibrationRecord,
    sensor_id: str,
    detect_time: float,
    pre: float,
    post: float,
) -> AlignedFootstep:
    """Cut ``[detect_time - pre, detect_time + post)`` from one channel."""
    if pre < 0 or post < 0 or pre + post <= 0:
        raise InvalidArgumentError(f"pre={pre}, post={post} must be nonnegative and span > 0")
    channel = record.channel(sensor_id)  # raises NotFoundError for unknown sensors
    rate = record.sample_rate
    length = samples_for(pre + post, rate)
    detect_sample = int(round((detect_time - record.start_time) * rate))
    start = detect_sample - samples_for(pre, rate)
    if start < 0 or start + length > record.n_samples:
        raise RangeError(
            f"footstep span [{detect_time - pre}, {detect_time + post}) falls outside"
            f" record span [{record.start_time}, {record.end_time})"
        )
    return AlignedFootstep(
        sensor_id=sensor_id,
        samples=channel[start : start + length],
        pre=pre,
        post=post,
        sample_rate=rate,
    )
