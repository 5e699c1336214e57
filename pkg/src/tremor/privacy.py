"""Quantifying how identifiable footstep signals are.

The pipeline: cut aligned footsteps out of labelled trial records, turn them
into feature rows (raw samples, or windowed RMS energies of increasing window
size), and measure sex-classification accuracy of a small classifier zoo
under leave-one-out cross-validation. Sweeping the energy window size shows
the anonymization trade-off: accuracy falls toward chance as the window
grows. SVD-based synthesis scales the dataset up to rule small-sample
variance out of that trend.

The classifiers themselves are scikit-learn estimators behind a declarative
spec; the harness (folds, units, seeding, sweeps) is what this module owns.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.linear_model import LogisticRegression
from sklearn.naive_bayes import GaussianNB
from sklearn.neighbors import KNeighborsClassifier
from sklearn.neural_network import MLPClassifier
from sklearn.tree import DecisionTreeClassifier

from .core import SensorArray, samples_for
from .energy import EventDetectorConfig, detect_events, windowed_energy, windowed_rms
from .errors import (
    InsufficientDataError,
    InvalidArgumentError,
    RangeError,
)
from .ingest import TrialManifest, load_record
from .signal import AlignedFootstep, align_footstep, detrend

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """One feature vector per footstep instance, with its labels.

    ``labels`` carries the binary sex label and ``groups`` the participant id
    of each row; participant-level cross-validation folds on the groups.
    """

    rows: np.ndarray
    labels: np.ndarray
    groups: np.ndarray

    def __post_init__(self):
        rows = np.array(self.rows, dtype=float)
        labels = np.array(self.labels, dtype=object)
        groups = np.array(self.groups, dtype=object)
        if rows.ndim != 2:
            raise InvalidArgumentError("feature rows must form a 2-d matrix")
        if not (len(rows) == len(labels) == len(groups)):
            raise InvalidArgumentError("rows, labels, and groups must have equal length")
        if len(rows) == 0:
            raise InvalidArgumentError("feature matrix must contain at least one row")
        if not np.isfinite(rows).all():
            raise InvalidArgumentError("feature rows must be finite")
        for arr, name in ((rows, "rows"), (labels, "labels"), (groups, "groups")):
            arr.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "groups", groups)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def class_balance(self) -> float:
        """Fraction of rows labelled 'F'."""
        return float(np.mean(self.labels == "F"))


CLASSIFIER_KINDS = (
    "nearest-neighbors",
    "gaussian-naive-bayes",
    "logistic-linear",
    "decision-tree",
    "single-hidden-layer-perceptron",
)

_HYPER_DEFAULTS: dict[str, dict] = {
    "nearest-neighbors": {"k": 5},
    "gaussian-naive-bayes": {"var_smoothing": 1e-9},
    "logistic-linear": {"c": 1.0, "max_iter": 500},
    "decision-tree": {"max_depth": 5},
    "single-hidden-layer-perceptron": {"hidden": 16, "epochs": 300, "l2": 1e-3},
}


@dataclass(frozen=True)
class ClassifierSpec:
    """A classifier kind plus kind-specific hyperparameters."""

    kind: str
    hyperparameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in CLASSIFIER_KINDS:
            raise InvalidArgumentError(
                f"unknown classifier kind {self.kind!r}; choose from {CLASSIFIER_KINDS}"
            )
        defaults = _HYPER_DEFAULTS[self.kind]
        unknown = set(self.hyperparameters) - set(defaults)
        if unknown:
            raise InvalidArgumentError(
                f"{self.kind}: unknown hyperparameters {sorted(unknown)}"
            )
        merged = {**defaults, **self.hyperparameters}
        if self.kind == "nearest-neighbors":
            k = merged["k"]
            if not (isinstance(k, int) and k >= 1 and k % 2 == 1):
                raise InvalidArgumentError(f"nearest-neighbors k must be an odd int >= 1, got {k}")
        if self.kind == "gaussian-naive-bayes" and not merged["var_smoothing"] > 0:
            raise InvalidArgumentError("var_smoothing must be positive")
        if self.kind == "logistic-linear" and not merged["c"] > 0:
            raise InvalidArgumentError("c must be positive")
        if self.kind == "decision-tree" and not merged["max_depth"] >= 1:
            raise InvalidArgumentError("max_depth must be >= 1")
        if self.kind == "single-hidden-layer-perceptron":
            if not merged["hidden"] >= 1:
                raise InvalidArgumentError("hidden width must be >= 1")
            if not merged["epochs"] >= 1:
                raise InvalidArgumentError("epochs must be >= 1")
        object.__setattr__(self, "hyperparameters", dict(merged))


def default_classifiers() -> list[ClassifierSpec]:
    """The five-classifier zoo with declared default hyperparameters."""
    return [ClassifierSpec(kind) for kind in CLASSIFIER_KINDS]


def build_classifier(spec: ClassifierSpec, seed: int = 0):
    hp = spec.hyperparameters
    if spec.kind == "nearest-neighbors":
        return KNeighborsClassifier(n_neighbors=hp["k"])
    if spec.kind == "gaussian-naive-bayes":
        return GaussianNB(var_smoothing=hp["var_smoothing"])
    if spec.kind == "logistic-linear":
        return LogisticRegression(C=hp["c"], max_iter=hp["max_iter"])
    if spec.kind == "decision-tree":
        return DecisionTreeClassifier(max_depth=hp["max_depth"], random_state=seed)
    if spec.kind == "single-hidden-layer-perceptron":
        return MLPClassifier(
            hidden_layer_sizes=(hp["hidden"],),
            solver="lbfgs",
            max_iter=hp["epochs"],
            alpha=hp["l2"],
            random_state=seed,
        )
    raise InvalidArgumentError(f"unknown classifier kind {spec.kind!r}")


def train(spec: ClassifierSpec, features: FeatureMatrix, seed: int = 0):
    """Fit a classifier; deterministic given spec, data, and seed."""
    labels = np.asarray(features.labels, dtype=object)
    if len(set(labels.tolist())) < 2:
        raise InvalidArgumentError("training data must contain at least two classes")
    model = build_classifier(spec, seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # fixed-epoch perceptron never "converges"
        model.fit(features.rows, labels.astype(str))
    return model


def extract_features(
    footsteps: list[AlignedFootstep],
    window_len: int | None = None,
    labels=None,
    groups=None,
) -> FeatureMatrix:
    """Turn aligned footsteps into feature rows.

    ``window_len=None`` keeps the raw sample vectors; otherwise each row is
    the footstep's windowed RMS energies (window_len=1 reduces to |samples|,
    the same transform the energy module applies to records).
    """
    if not footsteps:
        raise InvalidArgumentError("no footsteps to extract features from")
    lengths = {len(f) for f in footsteps}
    if len(lengths) != 1:
        raise InvalidArgumentError(f"footsteps have unequal lengths: {sorted(lengths)}")
    rows = np.stack([f.samples for f in footsteps])
    if window_len is not None:
        if window_len > rows.shape[1]:
            raise RangeError(
                f"window_len {window_len} exceeds footstep length {rows.shape[1]}"
            )
        rows = windowed_rms(rows, window_len)
    n = len(rows)
    if labels is None:
        labels = [""] * n
    if groups is None:
        groups = [str(i) for i in range(n)]
    return FeatureMatrix(rows=rows, labels=list(labels), groups=list(groups))


@dataclass(frozen=True, eq=False)
class PcaModel:
    """Centered PCA projection obtained from a singular value decomposition."""

    mean: np.ndarray
    components: np.ndarray  # (n_components, dim)
    explained_variance_ratio: np.ndarray

    def transform(self, rows: np.ndarray) -> np.ndarray:
        return (np.asarray(rows, dtype=float) - self.mean) @ self.components.T


def pca_fit(features: FeatureMatrix, n_components: int) -> PcaModel:
    """Fit PCA by SVD of the centered rows."""
    rows = features.rows
    limit = min(rows.shape)
    if not 1 <= n_components <= limit:
        raise RangeError(f"n_components must be in [1, {limit}], got {n_components}")
    mean = rows.mean(axis=0)
    centered = rows - mean
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    variances = svals**2
    total = float(variances.sum())
    ratios = variances[:n_components] / total if total > 0 else np.zeros(n_components)
    return PcaModel(
        mean=mean, components=vt[:n_components], explained_variance_ratio=ratios
    )


def loocv_accuracy(
    spec: ClassifierSpec,
    features: FeatureMatrix,
    unit: str = "participant",
    seed: int = 0,
) -> float:
    """Leave-one-out accuracy over instances or participants.

    Participant mode holds out all rows of one participant per fold, so a
    classifier cannot score by recognizing the held-out individual. Folds
    whose training residue collapses to a single class are skipped and
    logged. The result is invariant to row order: folds are enumerated over
    sorted unit keys.
    """
    if unit not in ("instance", "participant"):
        raise InvalidArgumentError(f"unit must be 'instance' or 'participant', got {unit!r}")
    n = len(features)
    if unit == "instance":
        keys = np.arange(n).astype(object)
    else:
        keys = features.groups
    unique = sorted(set(keys.tolist()))
    if len(unique) < 3:
        raise InvalidArgumentError(f"need at least 3 {unit} units, have {len(unique)}")

    labels = features.labels.astype(str)
    correct = 0
    total = 0
    skipped = 0
    for key in unique:
        test_mask = keys == key
        train_mask = ~test_mask
        train_labels = labels[train_mask]
        if len(set(train_labels.tolist())) < 2:
            skipped += 1
            continue
        model = build_classifier(spec, seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model.fit(features.rows[train_mask], train_labels)
        predictions = model.predict(features.rows[test_mask])
        correct += int(np.sum(predictions == labels[test_mask]))
        total += int(test_mask.sum())
    if skipped:
        log.warning("loocv: skipped %d single-class folds of %d", skipped, len(unique))
    if total == 0:
        raise InsufficientDataError("every fold had a single-class training set")
    return correct / total


def collect_footsteps(
    manifest: TrialManifest,
    layout: SensorArray,
    pre: float = 0.1,
    post: float = 0.3,
    detector: EventDetectorConfig | None = None,
    sensor_id: str | None = None,
    detect_window_s: float = 1.0 / 256.0,
    detrend_window: float | None = 1.0,
) -> tuple[list[AlignedFootstep], list[str], list[str]]:
    """Detect and align every footstep of every trial in a manifest.

    Each trial contributes the footsteps seen by one sensor: ``sensor_id`` if
    given, otherwise the trial's strongest channel. Detection happens at
    ``detect_window_s`` resolution; each event is then re-anchored on the
    signed peak sample of that channel so all cuts share the waveform phase.
    Events whose cut would leave the record are dropped.

    Returns (footsteps, sex labels, participant ids), one entry per footstep.
    """
    footsteps: list[AlignedFootstep] = []
    labels: list[str] = []
    groups: list[str] = []
    for trial in manifest.trials:
        record = load_record(manifest.record_file(trial), layout)
        if detrend_window:
            record = detrend(record, detrend_window)
        window_len = max(1, samples_for(detect_window_s, record.sample_rate))
        series = windowed_energy(record, window_len)
        events = detect_events(series, detector)
        if not events:
            log.warning("trial %s: no events detected", trial.trial_id)
            continue
        if sensor_id is not None:
            channel_id = sensor_id
        else:
            rms = np.sqrt(np.mean(record.samples**2, axis=1))
            channel_id = record.channels[int(np.argmax(rms))]
        channel = record.channel(channel_id)
        rate = record.sample_rate
        window_s = window_len / rate
        for event in events:
            lo = max(0, int(round((event.time - record.start_time - window_s) * rate)))
            hi = min(
                record.n_samples,
                int(round((event.time - record.start_time + 2 * window_s + 0.01) * rate)),
            )
            if hi <= lo:
                continue
            peak_index = lo + int(np.argmax(channel[lo:hi]))
            peak_time = record.start_time + peak_index / rate
            try:
                step = align_footstep(record, channel_id, peak_time, pre, post)
            except RangeError:
                continue
            footsteps.append(step)
            labels.append(trial.sex_label)
            groups.append(trial.participant_id)
    return footsteps, labels, groups


@dataclass(frozen=True)
class PrivacySweepCell:
    window_s: float | None  # None marks the raw-feature entry
    classifier: str
    accuracy: float | None
    n_instances: int
    class_balance: float
    error: str | None = None


def _validate_sweep_sizes(window_sizes) -> None:
    if not any(w is None for w in window_sizes):
        raise InvalidArgumentError("window_sizes must include a raw (None) entry")
    numeric = [w for w in window_sizes if w is not None]
    if any(not w > 0 for w in numeric):
        raise InvalidArgumentError("window sizes must be positive")
    if any(b <= a for a, b in zip(numeric, numeric[1:])):
        raise InvalidArgumentError("window sizes must be strictly ascending")


def sweep_features(
    features: FeatureMatrix,
    specs: list[ClassifierSpec],
    window_sizes,
    sample_rate: float,
    unit: str = "participant",
    seed: int = 0,
) -> list[PrivacySweepCell]:
    """Accuracy per (window size, classifier) over pre-built raw feature rows.

    The raw rows are re-windowed per size with the same RMS transform used on
    records, so this serves both measured footsteps and synthesized rows.
    Failures are recorded in the cell, never raised.
    """
    _validate_sweep_sizes(window_sizes)
    cells = []
    for size in window_sizes:
        try:
            if size is None:
                rows = features.rows
            else:
                window_len = max(1, samples_for(size, sample_rate))
                rows = windowed_rms(features.rows, window_len)
            sized = FeatureMatrix(rows=rows, labels=features.labels, groups=features.groups)
        except Exception as exc:
            for spec in specs:
                cells.append(
                    PrivacySweepCell(size, spec.kind, None, len(features), features.class_balance(), str(exc))
                )
            continue
        for spec in specs:
            try:
                accuracy = loocv_accuracy(spec, sized, unit=unit, seed=seed)
                cells.append(
                    PrivacySweepCell(
                        size, spec.kind, accuracy, len(sized), sized.class_balance()
                    )
                )
            except Exception as exc:
                log.warning("sweep cell (%s, %s) failed: %s", size, spec.kind, exc)
                cells.append(
                    PrivacySweepCell(
                        size, spec.kind, None, len(sized), sized.class_balance(), str(exc)
                    )
                )
    return cells


def anonymization_sweep(
    manifest: TrialManifest,
    layout: SensorArray,
    specs: list[ClassifierSpec],
    window_sizes,
    pre: float = 0.1,
    post: float = 0.3,
    unit: str = "participant",
    seed: int = 0,
    sensor_id: str | None = None,
    detector: EventDetectorConfig | None = None,
) -> list[PrivacySweepCell]:
    """Classification accuracy as a function of the energy window size.

    ``window_sizes`` is ascending and must include ``None`` for the raw
    (un-windowed) entry. One cell per (size, classifier spec).
    """
    _validate_sweep_sizes(window_sizes)
    footsteps, labels, groups = collect_footsteps(
        manifest, layout, pre=pre, post=post, detector=detector, sensor_id=sensor_id
    )
    if not footsteps:
        raise InsufficientDataError("no footsteps were detected in the dataset")
    features = extract_features(footsteps, None, labels=labels, groups=groups)
    return sweep_features(
        features, specs, window_sizes, footsteps[0].sample_rate, unit=unit, seed=seed
    )


def svd_synthesize(
    features: FeatureMatrix,
    n_per_class: int,
    seed: int,
    shrink_factor: float = 0.1,
    n_primary: int = 2,
    n_secondary: int = 23,
) -> FeatureMatrix:
    """Synthesize a larger, balanced dataset from per-class SVDs.

    Per class: rows are decomposed around their mean; new rows are the class
    mean plus Gaussian coefficients on the first ``n_primary`` singular
    directions (matching the empirical score variance) plus shrunken Gaussian
    coefficients on the next ``n_secondary``. Classes with fewer directions
    than requested use what they have (logged). Every synthetic row gets a
    fresh participant id, and the output is balanced: ``n_per_class`` rows
    per label, stacked in sorted label order.
    """
    if n_per_class < 1:
        raise InvalidArgumentError("n_per_class must be >= 1")
    if shrink_factor < 0:
        raise InvalidArgumentError("shrink_factor must be nonnegative")
    classes = sorted(set(features.labels.tolist()))
    if len(classes) < 2:
        raise InvalidArgumentError("synthesis needs both classes present")

    all_rows = []
    all_labels = []
    all_groups = []
    for ci, label in enumerate(classes):
        rows = features.rows[features.labels == label]
        if len(rows) < 2:
            raise InsufficientDataError(f"class {label!r} has fewer than 2 rows")
        mean = rows.mean(axis=0)
        _, svals, vt = np.linalg.svd(rows - mean, full_matrices=False)
        k1 = min(n_primary, len(svals))
        k2 = min(n_secondary, len(svals) - k1)
        if k1 + k2 < n_primary + n_secondary:
            log.warning(
                "class %s: only %d singular directions available (%d requested)",
                label, k1 + k2, n_primary + n_secondary,
            )
        sigma = svals / math.sqrt(len(rows) - 1)
        rng = np.random.default_rng(
            np.random.SeedSequence([int(seed), ci]).generate_state(1, np.uint64)[0]
        )
        coeffs = rng.standard_normal((n_per_class, k1)) * sigma[:k1]
        synthetic = mean + coeffs @ vt[:k1]
        if k2 > 0:
            coeffs2 = rng.standard_normal((n_per_class, k2)) * (
                shrink_factor * sigma[k1 : k1 + k2]
            )
            synthetic = synthetic + coeffs2 @ vt[k1 : k1 + k2]
        all_rows.append(synthetic)
        all_labels.extend([label] * n_per_class)
        all_groups.extend(f"syn-{label}-{i:05d}" for i in range(n_per_class))

    return FeatureMatrix(
        rows=np.concatenate(all_rows, axis=0), labels=all_labels, groups=all_groups
    )


def write_privacy_sweep_csv(cells: list[PrivacySweepCell], path) -> None:
    """Export ``window_s,classifier,accuracy,n_instances,class_balance``.

    The raw entry writes ``raw`` in the window column; failed cells leave the
    accuracy empty.
    """
    with open(path, "w", newline="") as fh:
        fh.write("window_s,classifier,accuracy,n_instances,class_balance\n")
        for c in cells:
            window = "raw" if c.window_s is None else "%.10g" % c.window_s
            accuracy = "" if c.accuracy is None else "%.10g" % c.accuracy
            fh.write(
                "%s,%s,%s,%d,%.10g\n"
                % (window, c.classifier, accuracy, c.n_instances, c.class_balance)
            )


def write_pca_scatter_csv(features: FeatureMatrix, path, seed: int = 0) -> None:
    """Project rows onto the first two principal components: ``pc1,pc2,label``."""
    model = pca_fit(features, 2)
    projected = model.transform(features.rows)
    with open(path, "w", newline="") as fh:
        fh.write("pc1,pc2,label\n")
        for (p1, p2), label in zip(projected, features.labels):
            fh.write("%.10g,%.10g,%s\n" % (p1, p2, label))
