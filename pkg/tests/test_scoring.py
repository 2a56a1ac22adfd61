import csv
import math
from dataclasses import replace

import numpy as np
import pytest

from wingbeat_qc.audio_io import MonoClip, load_mono, resample, to_mono
from wingbeat_qc.config import OcsvmParams, RunConfig
from wingbeat_qc.errors import ClipTooShortError, DataContractError, DimensionMismatchError
from wingbeat_qc.evaluation import DatasetManifest, ManifestEntry
from wingbeat_qc.features import SpectralEmbedConfig
from wingbeat_qc.scoring import (
    ClipDecision,
    TrainedDetectors,
    clip_features,
    decide,
    score_clip,
    score_clip_all,
    score_manifest,
    train_from_manifest,
    write_decisions_csv,
)
from wingbeat_qc.synth import WingbeatSpec, generate_clip


def _decision(scores, threshold=0.5):
    return ClipDecision("c", "iforest", tuple(scores), tuple(2.0 * k for k in range(len(scores))), threshold)


# ---- ClipDecision

def test_all_zero_scores_clean():
    d = _decision([0.0] * 14)
    assert d.mean_score == 0.0 and d.verdict == "clean"


def test_mean_exactly_at_threshold_is_clean():
    assert _decision([0.25, 0.75]).verdict == "clean"
    assert _decision([0.25, 0.75 + 1e-12]).verdict == "contaminated"


def test_mean_is_exact():
    scores = [0.1] * 10 + [1e-17] * 4
    assert _decision(scores).mean_score == math.fsum(scores) / 14


def test_custom_threshold():
    assert _decision([0.4] * 3, threshold=0.3).verdict == "contaminated"


def test_decision_needs_matching_starts():
    with pytest.raises(DataContractError):
        ClipDecision("c", "ocsvm", (0.1, 0.2), (0.0,))


# ---- pipeline

def test_thirty_second_clip_gives_fourteen_scores(small_dataset, small_detectors):
    entry = small_dataset.by_role("test")[0]
    clip = load_mono(small_dataset.resolve(entry))
    for which in ("iforest", "ocsvm"):
        d = score_clip(small_detectors, clip, which, entry.clip_id)
        assert len(d.chunk_scores) == 14
        assert d.chunk_starts_s == tuple(float(s) for s in range(0, 27, 2))
        assert all(0.0 <= s <= 1.0 for s in d.chunk_scores)


def test_short_clip_rejected(small_detectors):
    with pytest.raises(ClipTooShortError, match="clip too short"):
        score_clip(small_detectors, MonoClip(np.zeros(3 * 4000), 4000))


def test_input_rate_is_resampled(small_detectors):
    clip = to_mono(generate_clip(WingbeatSpec(n_insects=40, duration_s=8, seed=2)))
    a = score_clip(small_detectors, clip)
    b = score_clip(small_detectors, resample(clip, 4000))
    assert a.chunk_scores == b.chunk_scores


def test_chunks_scored_alone_match_whole_clip(small_dataset, small_detectors):
    entry = small_dataset.by_role("test")[3]
    feats = clip_features(load_mono(small_dataset.resolve(entry)), small_detectors.config)
    whole = small_detectors.chunk_scores(feats, "iforest")
    alone = [small_detectors.iforest.score(feats.values[k:k + 1])[0] for k in range(len(feats))]
    np.testing.assert_array_equal(whole, alone)


def test_female_burst_windows_stand_out(small_detectors):
    # female flight only during 10-16 s: windows starting at 8, 10, 12, 14 s contain it
    male = generate_clip(WingbeatSpec("male", seed=401)).channels
    female = generate_clip(WingbeatSpec("female", n_insects=62, seed=402)).channels
    t = np.arange(male.shape[1]) / 44100
    gate = ((t >= 10) & (t < 16)).astype(float)
    ramp = int(0.05 * 44100)
    gate = np.convolve(gate, np.ones(ramp) / ramp, mode="same")
    mix = MonoClip(np.clip(male + female * gate, -1, 1).mean(axis=0), 44100)
    d = score_clip(small_detectors, mix, "iforest")
    burst = [s for start, s in zip(d.chunk_starts_s, d.chunk_scores) if start in (8, 10, 12, 14)]
    rest = [s for start, s in zip(d.chunk_starts_s, d.chunk_scores) if start not in (8, 10, 12, 14)]
    assert min(burst) > np.median(rest)


def test_dimension_mismatch_with_model(small_dataset, small_detectors):
    cfg = replace(small_detectors.config, spectral=SpectralEmbedConfig(output_dim=256))
    feats = clip_features(load_mono(small_dataset.resolve(small_dataset.by_role("test")[0])), cfg)
    feats.metadata.pop("config_hash")
    with pytest.raises(DimensionMismatchError):
        decide(small_detectors, feats, "iforest")


def test_foreign_extractor_config_rejected(small_dataset, small_detectors):
    cfg = replace(small_detectors.config, spectral=SpectralEmbedConfig(n_mels=128))
    feats = clip_features(load_mono(small_dataset.resolve(small_dataset.by_role("test")[0])), cfg)
    with pytest.raises(DataContractError, match="config_hash"):
        decide(small_detectors, feats, "ocsvm")


# ---- training

def test_training_rows_six_per_clip(small_detectors):
    assert small_detectors.provenance["n_rows"] == 4 * 6
    assert len(small_detectors.provenance["training_clips"]) == 4
    assert small_detectors.iforest.psi == 24
    assert small_detectors.ocsvm.n_train == 24


def test_one_clip_with_tiny_nu_is_adjusted(small_dataset, caplog):
    one = DatasetManifest(small_dataset.by_role("train")[:1], small_dataset.base_dir)
    cfg = RunConfig(ocsvm=OcsvmParams(nu=0.01))
    det = train_from_manifest(one, cfg)
    assert det.provenance["n_rows"] == 6
    assert det.ocsvm.nu == pytest.approx(1 / 6)
    assert det.provenance["nu_adjusted_from"] == 0.01
    assert "infeasible" in caplog.text


def test_female_training_clip_is_an_error(small_dataset):
    e = small_dataset.by_role("test")[0]
    bad = [replace(small_dataset.by_role("train")[0])] + [
        ManifestEntry(e.path, "oops", "female", 6, 1, "train")
    ]
    with pytest.raises(DataContractError, match="male-only"):
        train_from_manifest(DatasetManifest(bad, small_dataset.base_dir))


def test_no_training_clips(small_dataset):
    with pytest.raises(DataContractError):
        train_from_manifest(DatasetManifest(small_dataset.by_role("test"), small_dataset.base_dir))


def test_training_is_deterministic(small_dataset, small_detectors):
    again = train_from_manifest(small_dataset)
    assert again.iforest.to_dict() == small_detectors.iforest.to_dict()
    assert again.ocsvm.to_dict() == small_detectors.ocsvm.to_dict()


# ---- batches

def test_empty_test_set(small_dataset, small_detectors):
    train_only = DatasetManifest(small_dataset.by_role("train"), small_dataset.base_dir)
    assert score_manifest(small_detectors, train_only) == []


def test_manifest_order_and_count(small_dataset, small_detectors):
    out = score_manifest(small_detectors, small_dataset, "iforest")
    assert [d.clip_id for d in out] == [e.clip_id for e in small_dataset.by_role("test")]
    assert len(out) == 12 and not out.failures


def test_batch_is_deterministic(small_dataset, small_detectors):
    a = score_manifest(small_detectors, small_dataset)
    b = score_manifest(small_detectors, small_dataset)
    assert a == b


def test_bad_file_does_not_abort_batch(tmp_path, small_dataset, small_detectors):
    bad = tmp_path / "bad.wav"
    bad.write_bytes(b"RIFF....WAVEjunk")
    entries = small_dataset.by_role("test")[:2] + [ManifestEntry(str(bad), "broken", "male", 6, 1, "test")]
    out = score_manifest(small_detectors, DatasetManifest(entries, small_dataset.base_dir), "ocsvm")
    assert len(out) == 2
    assert [f.clip_id for f in out.failures] == ["broken"]


def test_models_round_trip(tmp_path, small_dataset, small_detectors):
    small_detectors.save(tmp_path / "m")
    assert sorted(p.name for p in (tmp_path / "m").iterdir()) == ["detectors.json", "iforest.json", "ocsvm.json"]
    back = TrainedDetectors.load(tmp_path / "m")
    clip = load_mono(small_dataset.resolve(small_dataset.by_role("test")[5]))
    assert score_clip_all(back, clip) == score_clip_all(small_detectors, clip)


def test_csv_exports(tmp_path):
    ds = [_decision([0.2, 0.4]), replace(_decision([0.9, 0.8]), clip_id="d", detector="ocsvm")]
    write_decisions_csv(ds, tmp_path / "long.csv", "long")
    write_decisions_csv(ds, tmp_path / "sum.csv", "summary")
    rows = list(csv.DictReader(open(tmp_path / "long.csv")))
    assert list(rows[0]) == ["clip_id", "detector", "chunk_start_s", "chunk_score"]
    assert len(rows) == 4 and float(rows[1]["chunk_start_s"]) == 2.0
    summary = list(csv.DictReader(open(tmp_path / "sum.csv")))
    assert [(r["clip_id"], r["verdict"]) for r in summary] == [("c", "clean"), ("d", "contaminated")]
    assert float(summary[0]["mean"]) == pytest.approx(0.3)
