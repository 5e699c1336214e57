import numpy as np
import pytest

from tremor.core import Sensor, SensorArray
from tremor.ingest import load_layout
from tremor.privacy import collect_footsteps, extract_features
from tremor.synth import hallway_layout, make_labeled_dataset


@pytest.fixture(scope="session")
def square_array():
    return SensorArray(
        (
            Sensor("a", 0.0, 0.0, "z"),
            Sensor("b", 10.0, 0.0, "z"),
            Sensor("c", 10.0, 10.0, "z"),
            Sensor("d", 0.0, 10.0, "z"),
            Sensor("e", 5.0, 2.0, "z"),
            Sensor("f", 3.0, 7.0, "z"),
        )
    )


@pytest.fixture(scope="session")
def dataset16(tmp_path_factory):
    """The default labelled dataset: 16 participants, 2 trials each, seed 0."""
    out = tmp_path_factory.mktemp("dataset16")
    manifest = make_labeled_dataset(out, participants=16, trials_each=2, seed=0)
    layout = load_layout(out / "layout.csv")
    return manifest, layout, out


@pytest.fixture(scope="session")
def dataset16_features(dataset16):
    """Raw footstep features of the default dataset."""
    manifest, layout, _ = dataset16
    footsteps, labels, groups = collect_footsteps(manifest, layout)
    features = extract_features(footsteps, None, labels=labels, groups=groups)
    return features, footsteps[0].sample_rate


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """A fast four-participant dataset for CLI and pipeline tests."""
    out = tmp_path_factory.mktemp("dataset4")
    layout = hallway_layout(n_per_row=3)
    manifest = make_labeled_dataset(
        out, participants=4, trials_each=1, seed=3, layout=layout
    )
    return manifest, load_layout(out / "layout.csv"), out
