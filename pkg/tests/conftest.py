import numpy as np
import pytest

from wingbeat_qc.audio_io import AudioClip, MonoClip


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tone(freq, seconds, rate, amp=0.5, phase=0.0):
    t = np.arange(int(round(seconds * rate))) / rate
    return amp * np.sin(2 * np.pi * freq * t + phase)


def mono_tone(freq, seconds, rate=4000, amp=0.5):
    return MonoClip(tone(freq, seconds, rate, amp), rate)


def stereo(left, right, rate):
    return AudioClip(np.vstack([left, right]), rate)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """One synthetic day on disk: 4 containers x 2 sessions x 2 clips of 30 s."""
    from wingbeat_qc.synth import DatasetLayout, generate_dataset

    out = tmp_path_factory.mktemp("data")
    return generate_dataset(DatasetLayout(days=(6,), clips_per_session=2), out, seed=11)


@pytest.fixture(scope="session")
def small_detectors(small_dataset):
    from wingbeat_qc.scoring import train_from_manifest

    return train_from_manifest(small_dataset)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
