"""Command-line entry point.

Four subcommands cover the experiment workflow:

* ``tremor simulate`` -- generate a labelled synthetic walking dataset
* ``tremor localize`` -- localization sweep + per-trial path reconstruction
* ``tremor privacy``  -- anonymization sweep (accuracy vs window size) + PCA
* ``tremor report``   -- merge the sweep CSVs into one provenance JSON

Configuration comes from a JSON file (``--config``) with flag overrides;
flags win. Identical config + seed reproduce every output byte for byte.
Exit codes: 0 success, 1 runtime failure, 2 configuration/validation failure.
Set ``TREMOR_LOG`` to error/warn/info/debug to control logging.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import __version__
from .core import SensorArray, samples_for
from .energy import EventDetectorConfig, detect_events, event_energy, windowed_energy
from .errors import InvalidArgumentError, ParseError, TremorError, ValidationError
from .ingest import load_layout, load_manifest, load_record, load_truth
from .localize import (
    FitConfig,
    SweepRow,
    localize_event,
    reconstruct_path,
    rmse_vs_window_size,
    write_localization_sweep_csv,
    write_path_csv,
)
from .privacy import (
    ClassifierSpec,
    anonymization_sweep,
    collect_footsteps,
    default_classifiers,
    extract_features,
    svd_synthesize,
    sweep_features,
    write_pca_scatter_csv,
    write_privacy_sweep_csv,
)
from .signal import detrend
from .synth import load_presets, make_labeled_dataset
from .core import FootstepEvent

log = logging.getLogger(__name__)

DEFAULT_WINDOW_SIZES = (1 / 256, 1 / 128, 1 / 64, 1 / 32, 1 / 16, 0.125)


@dataclass
class ExperimentConfig:
    """Everything a command needs; loaded from JSON, overridden by flags."""

    layout_path: str | None = None
    manifest_path: str | None = None
    scenario_path: str | None = None
    output_dir: str = "tremor-out"
    window_sizes: tuple[float, ...] = DEFAULT_WINDOW_SIZES
    detector: EventDetectorConfig = field(default_factory=EventDetectorConfig)
    fit: FitConfig = field(default_factory=FitConfig)
    classifiers: tuple[ClassifierSpec, ...] = ()
    seed: int = 0
    zone: str | None = None
    loocv_unit: str = "participant"
    pre: float = 0.1
    post: float = 0.3
    detrend_window: float = 1.0
    event_duration: float = 0.5
    synthesize: int | None = None

    def __post_init__(self):
        if not self.classifiers:
            self.classifiers = tuple(default_classifiers())
        sizes = tuple(float(w) for w in self.window_sizes)
        if not sizes:
            raise ValidationError("window_sizes must be nonempty")
        if any(not w > 0 for w in sizes):
            raise ValidationError("window_sizes must be positive")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValidationError("window_sizes must be strictly ascending")
        self.window_sizes = sizes

    def to_dict(self) -> dict:
        return {
            "layout_path": self.layout_path,
            "manifest_path": self.manifest_path,
            "scenario_path": self.scenario_path,
            "output_dir": self.output_dir,
            "window_sizes": list(self.window_sizes),
            "detector": {
                "threshold_factor": self.detector.threshold_factor,
                "min_separation": self.detector.min_separation,
            },
            "fit": {
                "max_iterations": self.fit.max_iterations,
                "gradient_tol": self.fit.gradient_tol,
                "step_tol": self.fit.step_tol,
                "damping_init": self.fit.damping_init,
                "multistart_count": self.fit.multistart_count,
                "zone_margin": self.fit.zone_margin,
                "plausibility_bound": self.fit.plausibility_bound,
            },
            "classifiers": [
                {"kind": c.kind, "hyperparameters": c.hyperparameters}
                for c in self.classifiers
            ],
            "seed": self.seed,
            "zone": self.zone,
            "loocv_unit": self.loocv_unit,
            "pre": self.pre,
            "post": self.post,
            "detrend_window": self.detrend_window,
            "event_duration": self.event_duration,
            "synthesize": self.synthesize,
        }


def _classifier_from_entry(entry) -> ClassifierSpec:
    if isinstance(entry, str):
        return ClassifierSpec(entry)
    return ClassifierSpec(entry["kind"], dict(entry.get("hyperparameters", {})))


def config_from_dict(doc: dict) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    kwargs = dict(doc)
    if "detector" in kwargs:
        kwargs["detector"] = EventDetectorConfig(**kwargs["detector"])
    if "fit" in kwargs:
        kwargs["fit"] = FitConfig(**kwargs["fit"])
    if "classifiers" in kwargs:
        kwargs["classifiers"] = tuple(
            _classifier_from_entry(e) for e in kwargs["classifiers"]
        )
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ValidationError(f"bad config: {exc}") from None


def load_config(args) -> ExperimentConfig:
    if args.config:
        if not os.path.exists(args.config):
            raise ValidationError(f"config file not found: {args.config}")
        with open(args.config) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{args.config}: {exc}") from None
        cfg = config_from_dict(doc)
    else:
        cfg = ExperimentConfig()

    # flags win over the file
    if getattr(args, "output", None):
        cfg.output_dir = args.output
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "window_sizes", None):
        sizes = tuple(float(w) for w in args.window_sizes.split(","))
        cfg = config_from_dict({**cfg.to_dict(), "window_sizes": list(sizes)})
    if getattr(args, "classifiers", None):
        cfg.classifiers = tuple(
            ClassifierSpec(kind.strip()) for kind in args.classifiers.split(",")
        )
    if getattr(args, "zone", None):
        cfg.zone = args.zone
    if getattr(args, "layout", None):
        cfg.layout_path = args.layout
    if getattr(args, "manifest", None):
        cfg.manifest_path = args.manifest
    if getattr(args, "scenario", None):
        cfg.scenario_path = args.scenario
    if getattr(args, "synthesize", None):
        cfg.synthesize = args.synthesize
    return cfg


def _require(value, message: str):
    if not value:
        raise ValidationError(message)
    return value


def _load_dataset(cfg: ExperimentConfig):
    manifest_path = _require(cfg.manifest_path, "config needs manifest_path for this command")
    layout_path = cfg.layout_path
    if layout_path is None:
        candidate = os.path.join(os.path.dirname(os.path.abspath(manifest_path)), "layout.csv")
        if os.path.exists(candidate):
            layout_path = candidate
    layout = load_layout(_require(layout_path, "config needs layout_path"))
    manifest = load_manifest(manifest_path)
    return manifest, layout


def cmd_simulate(cfg: ExperimentConfig) -> int:
    scenario_path = _require(cfg.scenario_path, "config needs scenario_path for simulate")
    if not os.path.exists(scenario_path):
        raise ValidationError(f"scenario file not found: {scenario_path}")
    with open(scenario_path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{scenario_path}: {exc}") from None

    presets = None
    if "presets_path" in doc:
        presets = load_presets(doc.pop("presets_path"))
    known = {"participants", "trials_each", "sample_rate", "snr_db", "beta", "walk_speed"}
    unknown = set(doc) - known
    if unknown:
        raise ValidationError(f"{scenario_path}: unknown scenario keys: {sorted(unknown)}")

    out = os.path.join(cfg.output_dir, "dataset")
    manifest = make_labeled_dataset(
        out,
        participants=int(doc.get("participants", 16)),
        trials_each=int(doc.get("trials_each", 2)),
        presets=presets,
        seed=cfg.seed,
        sample_rate=float(doc.get("sample_rate", 1024.0)),
        snr_db=float(doc.get("snr_db", 20.0)),
        beta=float(doc.get("beta", 0.3)),
        walk_speed=float(doc.get("walk_speed", 1.2)),
    )
    print(f"participants={len(manifest.participants())} trials={len(manifest)} seed={cfg.seed}")
    return 0


def _trial_sweep(cfg, manifest, layout, trial, zone):
    record = load_record(manifest.record_file(trial), layout)
    if cfg.detrend_window:
        record = detrend(record, cfg.detrend_window)
    truth_file = manifest.truth_file(trial)
    truth = load_truth(truth_file) if truth_file else None
    rows = rmse_vs_window_size(
        record,
        truth,
        list(cfg.window_sizes),
        layout,
        zone,
        cfg.fit,
        detector=cfg.detector,
        event_duration=cfg.event_duration,
    )
    return record, truth, rows


def _trial_path(cfg, record, truth, layout, zone):
    """Reconstruct the walk at the smallest window size."""
    size = cfg.window_sizes[0]
    window_len = max(1, samples_for(size, record.sample_rate))
    series = windowed_energy(record, window_len)
    events = detect_events(series, cfg.detector)
    enriched = []
    for event in events:
        aggregated = event_energy(series, event.window_index, cfg.event_duration)
        truth_location = None
        if truth is not None:
            tx, ty = truth.interpolate(event.time)
            truth_location = (float(tx), float(ty))
        enriched.append(
            FootstepEvent(
                window_index=event.window_index,
                time=event.time,
                per_sensor_energy=aggregated.energies,
                truth_location=truth_location,
            )
        )
    return reconstruct_path(enriched, layout, zone, cfg.fit)


def cmd_localize(cfg: ExperimentConfig) -> int:
    manifest, layout = _load_dataset(cfg)
    zone = cfg.zone or layout.zones[0]
    os.makedirs(cfg.output_dir, exist_ok=True)

    per_size_sq = {w: 0.0 for w in cfg.window_sizes}
    per_size_scored = {w: 0 for w in cfg.window_sizes}
    per_size_events = {w: 0 for w in cfg.window_sizes}
    failures = []
    for trial in manifest.trials:
        try:
            record, truth, rows = _trial_sweep(cfg, manifest, layout, trial, zone)
            for row in rows:
                per_size_events[row.window_s] += row.n_events
                if row.rmse is not None:
                    per_size_sq[row.window_s] += row.rmse**2 * row.n_scored
                    per_size_scored[row.window_s] += row.n_scored
            path = _trial_path(cfg, record, truth, layout, zone)
            write_path_csv(path, os.path.join(cfg.output_dir, f"path_{trial.trial_id}.csv"))
        except TremorError as exc:
            log.warning("trial %s failed: %s", trial.trial_id, exc)
            failures.append((trial.trial_id, str(exc)))

    if len(failures) == len(manifest.trials):
        print("every trial failed; see log", file=sys.stderr)
        return 1

    aggregated = []
    for w in cfg.window_sizes:
        rmse = (
            math.sqrt(per_size_sq[w] / per_size_scored[w]) if per_size_scored[w] else None
        )
        aggregated.append(
            SweepRow(window_s=w, rmse=rmse, n_events=per_size_events[w], n_scored=per_size_scored[w])
        )
    write_localization_sweep_csv(aggregated, os.path.join(cfg.output_dir, "localization_sweep.csv"))

    print("window_s rmse_m n_events")
    for row in aggregated:
        rmse = "-" if row.rmse is None else "%.3f" % row.rmse
        print("%.6g %s %d" % (row.window_s, rmse, row.n_events))
    if failures:
        print(f"{len(failures)} trial(s) failed; recorded in log", file=sys.stderr)
    return 0


def cmd_privacy(cfg: ExperimentConfig) -> int:
    manifest, layout = _load_dataset(cfg)
    os.makedirs(cfg.output_dir, exist_ok=True)
    specs = list(cfg.classifiers)
    sizes = [None, *cfg.window_sizes]

    footsteps, labels, groups = collect_footsteps(
        manifest, layout, pre=cfg.pre, post=cfg.post, detector=cfg.detector
    )
    features = extract_features(footsteps, None, labels=labels, groups=groups)
    sample_rate = footsteps[0].sample_rate
    cells = sweep_features(
        features, specs, sizes, sample_rate, unit=cfg.loocv_unit, seed=cfg.seed
    )
    write_privacy_sweep_csv(cells, os.path.join(cfg.output_dir, "privacy_sweep.csv"))
    write_pca_scatter_csv(features, os.path.join(cfg.output_dir, "pca_scatter.csv"))

    if cfg.synthesize:
        synthetic = svd_synthesize(features, cfg.synthesize, cfg.seed)
        synth_cells = sweep_features(
            synthetic, specs, sizes, sample_rate, unit=cfg.loocv_unit, seed=cfg.seed
        )
        write_privacy_sweep_csv(
            synth_cells, os.path.join(cfg.output_dir, "privacy_sweep_synthetic.csv")
        )

    largest = cfg.window_sizes[-1]
    print("classifier raw_accuracy accuracy@%.6gs" % largest)
    for spec in specs:
        raw = next((c.accuracy for c in cells if c.window_s is None and c.classifier == spec.kind), None)
        big = next(
            (c.accuracy for c in cells if c.window_s == largest and c.classifier == spec.kind),
            None,
        )
        fmt = lambda v: "-" if v is None else "%.3f" % v
        print(f"{spec.kind} {fmt(raw)} {fmt(big)}")
    return 0


def _read_csv_rows(path) -> list[dict]:
    import csv

    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def cmd_report(cfg: ExperimentConfig) -> int:
    candidates = {
        "localization": os.path.join(cfg.output_dir, "localization_sweep.csv"),
        "privacy": os.path.join(cfg.output_dir, "privacy_sweep.csv"),
        "privacy_synthetic": os.path.join(cfg.output_dir, "privacy_sweep_synthetic.csv"),
    }
    present = {name: path for name, path in candidates.items() if os.path.exists(path)}
    if not present:
        missing = ", ".join(sorted(candidates.values()))
        raise ValidationError(f"no sweep outputs found in {cfg.output_dir}; expected any of: {missing}")

    report = {
        "version": __version__,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "sections": {name: _read_csv_rows(path) for name, path in sorted(present.items())},
    }
    out_path = os.path.join(cfg.output_dir, "report.json")
    with open(out_path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {out_path} with sections: {', '.join(sorted(present))}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tremor",
        description="Footstep localization and energy-window anonymization experiments",
    )
    parser.add_argument("--version", action="version", version=f"tremor {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--output", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="root random seed (overrides config)")
        p.add_argument("--window-sizes", help="comma-separated window sizes in seconds")
        p.add_argument("--classifiers", help="comma-separated classifier kinds")
        p.add_argument("--zone", help="zone name to localize in")
        p.add_argument("--layout", help="sensor layout CSV (overrides config)")
        p.add_argument("--manifest", help="trial manifest JSON (overrides config)")

    p = sub.add_parser("simulate", help="generate a synthetic labelled dataset")
    common(p)
    p.add_argument("--scenario", help="scenario JSON (overrides config scenario_path)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("localize", help="localization sweep and path reconstruction")
    common(p)
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("privacy", help="anonymization sweep and PCA scatter")
    common(p)
    p.add_argument(
        "--synthesize",
        type=int,
        metavar="N",
        help="also sweep an SVD-synthesized dataset with N rows per class",
    )
    p.set_defaults(func=cmd_privacy)

    p = sub.add_parser("report", help="merge sweep outputs into report.json")
    common(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("TREMOR_LOG", "warn").upper()
    level = {"WARN": "WARNING"}.get(level, level)
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))

    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
        return args.func(cfg)
    except (ValidationError, ParseError, InvalidArgumentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TremorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
