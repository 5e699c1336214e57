"""Loading and persisting the toolkit's file formats.

Formats (all plain text, diff-friendly):

* sensor layout CSV   -- header ``id,x,y,zone,noisy`` with noisy in {0,1}
* record CSV          -- header ``t,<id1>,<id2>,...``; first column is time in
                         seconds, strictly increasing and uniform to 1 ppm
* ground-truth CSV    -- header ``t,x,y`` of timestamped waypoints
* trial manifest JSON -- ``{"trials": [{"trial_id", "participant_id",
                         "sex_label", "record_path", "truth_path"}]}``

Record and truth values are written with repr-level precision so that
``load(save(x)) == x`` holds exactly.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Sensor, SensorArray, VibrationRecord
from .errors import (
    InvalidArgumentError,
    ParseError,
    RangeError,
    ValidationError,
)

log = logging.getLogger(__name__)

_FLOAT_FMT = "%.17g"  # shortest exact round-trip for float64
_UNIFORMITY_PPM = 1e-6


def _parse_float(text: str, path, row: int, col: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"{path}: row {row}, column {col!r}: not a number: {text!r}") from None
    if not math.isfinite(value):
        raise ParseError(f"{path}: row {row}, column {col!r}: non-finite value {text!r}")
    return value


def load_layout(path) -> SensorArray:
    """Read a sensor layout CSV."""
    if not os.path.exists(path):
        raise ParseError(f"layout file not found: {path}")
    sensors = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["id", "x", "y", "zone", "noisy"]:
            raise ParseError(f"{path}: expected header id,x,y,zone,noisy, got {header}")
        for i, row in enumerate(reader, start=2):
            if len(row) != 5:
                raise ParseError(f"{path}: row {i}: expected 5 fields, got {len(row)}")
            sid, xs, ys, zone, noisy = row
            if noisy not in ("0", "1"):
                raise ParseError(f"{path}: row {i}: noisy must be 0 or 1, got {noisy!r}")
            sensors.append(
                Sensor(
                    id=sid,
                    x=_parse_float(xs, path, i, "x"),
                    y=_parse_float(ys, path, i, "y"),
                    zone=zone,
                    noisy=noisy == "1",
                )
            )
    if not sensors:
        raise ParseError(f"{path}: layout contains no sensors")
    return SensorArray(tuple(sensors))


def save_layout(array: SensorArray, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "x", "y", "zone", "noisy"])
        for s in array:
            writer.writerow([s.id, _FLOAT_FMT % s.x, _FLOAT_FMT % s.y, s.zone, int(s.noisy)])


def load_record(path, layout: SensorArray) -> VibrationRecord:
    """Read a record CSV and order its channels to match ``layout``."""
    if not os.path.exists(path):
        raise ParseError(f"record file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "t":
            raise ParseError(f"{path}: first header column must be 't', got {header}")
        channel_ids = header[1:]
        if len(set(channel_ids)) != len(channel_ids):
            raise ParseError(f"{path}: duplicate channel ids in header")
        if set(channel_ids) != set(layout.ids):
            extra = sorted(set(channel_ids) - set(layout.ids))
            missing = sorted(set(layout.ids) - set(channel_ids))
            raise ParseError(
                f"{path}: header does not match layout"
                f" (not in layout: {extra}; missing from file: {missing})"
            )
        times: list[float] = []
        columns: list[list[float]] = [[] for _ in channel_ids]
        for i, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError(f"{path}: row {i}: expected {len(header)} fields, got {len(row)}")
            times.append(_parse_float(row[0], path, i, "t"))
            for c, text in enumerate(row[1:]):
                columns[c].append(_parse_float(text, path, i, channel_ids[c]))
    if len(times) < 2:
        raise ParseError(f"{path}: record needs at least two samples to determine the rate")

    t = np.array(times)
    dt = np.diff(t)
    if (dt <= 0).any():
        bad = int(np.argmax(dt <= 0)) + 3  # +2 header/1-based, +1 second row of the pair
        raise ParseError(f"{path}: row {bad}: times must be strictly increasing")
    dt_med = float(np.median(dt))
    if np.abs(dt - dt_med).max() > _UNIFORMITY_PPM * dt_med:
        raise ParseError(f"{path}: sample times are not uniform to within 1 ppm")
    rate = 1.0 / dt_med
    if abs(rate - round(rate)) <= _UNIFORMITY_PPM * rate:
        rate = float(round(rate))  # snap integer rates blurred by decimal printing

    # reorder columns into layout order
    order = [channel_ids.index(cid) for cid in layout.ids]
    samples = np.array([columns[j] for j in order])
    return VibrationRecord(
        channels=layout.ids, samples=samples, sample_rate=rate, start_time=float(t[0])
    )


def save_record(record: VibrationRecord, path) -> None:
    times = record.times()
    with open(path, "w", newline="") as fh:
        fh.write(",".join(["t", *record.channels]) + "\n")
        for i in range(record.n_samples):
            cells = [_FLOAT_FMT % times[i]]
            cells.extend(_FLOAT_FMT % v for v in record.samples[:, i])
            fh.write(",".join(cells) + "\n")


def clip_record(record: VibrationRecord, t0: float, t1: float) -> VibrationRecord:
    """Keep samples with time in [t0, t1)."""
    if not (record.start_time <= t0 < t1 <= record.end_time + 1e-12):
        raise RangeError(
            f"clip [{t0}, {t1}) outside record span"
            f" [{record.start_time}, {record.end_time})"
        )
    rate = record.sample_rate
    i0 = int(math.ceil((t0 - record.start_time) * rate - 1e-9))
    i1 = int(math.ceil((t1 - record.start_time) * rate - 1e-9))
    i1 = min(i1, record.n_samples)
    if i1 <= i0:
        raise RangeError(f"clip [{t0}, {t1}) selects no samples")
    return VibrationRecord(
        channels=record.channels,
        samples=record.samples[:, i0:i1],
        sample_rate=rate,
        start_time=record.start_time + i0 / rate,
    )


@dataclass(frozen=True, eq=False)
class GroundTruthPath:
    """Timestamped waypoints of a walk; positions between waypoints are
    linearly interpolated, and queries outside the span clamp to the ends."""

    times: np.ndarray
    xs: np.ndarray
    ys: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, GroundTruthPath):
            return NotImplemented
        return (
            np.array_equal(self.times, other.times)
            and np.array_equal(self.xs, other.xs)
            and np.array_equal(self.ys, other.ys)
        )

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        x = np.array(self.xs, dtype=float)
        y = np.array(self.ys, dtype=float)
        if not (t.ndim == x.ndim == y.ndim == 1) or not (len(t) == len(x) == len(y)):
            raise InvalidArgumentError("times, xs, ys must be 1-d and the same length")
        if len(t) == 0:
            raise InvalidArgumentError("a ground-truth path needs at least one waypoint")
        if not (np.isfinite(t).all() and np.isfinite(x).all() and np.isfinite(y).all()):
            raise InvalidArgumentError("waypoints must be finite")
        if (np.diff(t) <= 0).any():
            raise InvalidArgumentError("waypoint times must be strictly increasing")
        for name, arr in (("times", t), ("xs", x), ("ys", y)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def start_time(self) -> float:
        return float(self.times[0])

    @property
    def end_time(self) -> float:
        return float(self.times[-1])

    def interpolate(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Position(s) at time(s) ``t``."""
        t = np.asarray(t, dtype=float)
        return np.interp(t, self.times, self.xs), np.interp(t, self.times, self.ys)


def load_truth(path) -> GroundTruthPath:
    if not os.path.exists(path):
        raise ParseError(f"truth file not found: {path}")
    times, xs, ys = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["t", "x", "y"]:
            raise ParseError(f"{path}: expected header t,x,y, got {header}")
        for i, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise ParseError(f"{path}: row {i}: expected 3 fields, got {len(row)}")
            times.append(_parse_float(row[0], path, i, "t"))
            xs.append(_parse_float(row[1], path, i, "x"))
            ys.append(_parse_float(row[2], path, i, "y"))
    try:
        return GroundTruthPath(np.array(times), np.array(xs), np.array(ys))
    except InvalidArgumentError as exc:
        raise ParseError(f"{path}: {exc}") from None


def save_truth(truth: GroundTruthPath, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("t,x,y\n")
        for t, x, y in zip(truth.times, truth.xs, truth.ys):
            fh.write(f"{_FLOAT_FMT % t},{_FLOAT_FMT % x},{_FLOAT_FMT % y}\n")


@dataclass(frozen=True)
class Trial:
    """One labelled walk: who walked, their sex label, and where the files live.

    Paths are stored as written in the manifest; resolve them against the
    manifest's directory (see ``TrialManifest.resolve``).
    """

    trial_id: str
    participant_id: str
    sex_label: str
    record_path: str
    truth_path: str | None = None

    def __post_init__(self):
        if not self.trial_id or not self.participant_id:
            raise ValidationError("trial_id and participant_id must be non-empty")
        if self.sex_label not in ("F", "M"):
            raise ValidationError(
                f"trial {self.trial_id!r}: sex_label must be 'F' or 'M', got {self.sex_label!r}"
            )
        if not self.record_path:
            raise ValidationError(f"trial {self.trial_id!r}: record_path must be non-empty")


@dataclass(frozen=True)
class TrialManifest:
    """The labelled dataset index: one entry per trial."""

    trials: tuple[Trial, ...]
    base_dir: str = field(default=".", compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "trials", tuple(self.trials))
        if not self.trials:
            raise ValidationError("manifest contains no trials")
        ids = [t.trial_id for t in self.trials]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValidationError(f"duplicate trial ids: {dupes}")

    def __len__(self) -> int:
        return len(self.trials)

    def participants(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for t in self.trials:
            seen.setdefault(t.participant_id, None)
        return tuple(seen)

    def sex_counts(self) -> dict[str, int]:
        """Participants per sex label."""
        by_participant = {t.participant_id: t.sex_label for t in self.trials}
        counts = {"F": 0, "M": 0}
        for label in by_participant.values():
            counts[label] += 1
        return counts

    def resolve(self, path: str) -> str:
        return os.path.normpath(os.path.join(self.base_dir, path))

    def record_file(self, trial: Trial) -> str:
        return self.resolve(trial.record_path)

    def truth_file(self, trial: Trial) -> str | None:
        return self.resolve(trial.truth_path) if trial.truth_path else None


def load_manifest(path) -> TrialManifest:
    """Read and validate a manifest JSON; referenced files must exist."""
    if not os.path.exists(path):
        raise ValidationError(f"manifest file not found: {path}")
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from None
    if not isinstance(doc, dict) or "trials" not in doc:
        raise ValidationError(f"{path}: expected an object with a 'trials' list")
    trials = []
    for i, entry in enumerate(doc["trials"]):
        try:
            trials.append(
                Trial(
                    trial_id=entry["trial_id"],
                    participant_id=entry["participant_id"],
                    sex_label=entry["sex_label"],
                    record_path=entry["record_path"],
                    truth_path=entry.get("truth_path"),
                )
            )
        except KeyError as exc:
            raise ValidationError(f"{path}: trial #{i}: missing field {exc}") from None
    manifest = TrialManifest(tuple(trials), base_dir=os.path.dirname(os.path.abspath(path)))
    for t in manifest.trials:
        rec = manifest.record_file(t)
        if not os.path.exists(rec):
            raise ValidationError(f"{path}: trial {t.trial_id!r}: record file missing: {rec}")
        truth = manifest.truth_file(t)
        if truth is not None and not os.path.exists(truth):
            raise ValidationError(f"{path}: trial {t.trial_id!r}: truth file missing: {truth}")
    counts = manifest.sex_counts()
    log.info(
        "loaded manifest %s: %d trials, %d participants (F=%d, M=%d)",
        path, len(manifest), len(manifest.participants()), counts["F"], counts["M"],
    )
    return manifest


def save_manifest(manifest: TrialManifest, path) -> None:
    doc = {
        "trials": [
            {
                "trial_id": t.trial_id,
                "participant_id": t.participant_id,
                "sex_label": t.sex_label,
                "record_path": t.record_path,
                "truth_path": t.truth_path,
            }
            for t in manifest.trials
        ]
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
