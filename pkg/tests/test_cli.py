import json

import numpy as np
import pytest

from wingbeat_qc.audio_io import AudioClip, write_wav
from wingbeat_qc.cli import main
from wingbeat_qc.evaluation import DatasetManifest


@pytest.fixture(scope="module")
def trained(small_dataset, tmp_path_factory):
    models = tmp_path_factory.mktemp("models")
    manifest = small_dataset.base_dir / "manifest.json"
    assert main(["train", "--manifest", str(manifest), "--models-dir", str(models)]) == 0
    return manifest, models


def _wav(small_dataset, clip_id):
    return str(small_dataset.resolve(small_dataset.lookup()[clip_id]))


def test_train_writes_models_and_report(trained, capsys):
    _, models = trained
    day = models / "day6"
    assert sorted(p.name for p in day.iterdir()) == ["detectors.json", "iforest.json", "ocsvm.json"]
    report = json.loads((models / "training_report.json").read_text())
    assert report["day6"]["n_rows"] == 24
    assert set(report["day6"]["ocsvm"]) >= {"outlier_fraction", "sv_fraction"}


def test_train_rerun_identical(trained, tmp_path):
    manifest, models = trained
    assert main(["train", "--manifest", str(manifest), "--models-dir", str(tmp_path)]) == 0
    for name in ("iforest.json", "ocsvm.json", "detectors.json"):
        assert (tmp_path / "day6" / name).read_bytes() == (models / "day6" / name).read_bytes()


def test_missing_manifest_is_io_error(tmp_path, capsys):
    assert main(["train", "--manifest", str(tmp_path / "none.json"), "--models-dir", str(tmp_path)]) == 3
    assert "error" in capsys.readouterr().err


def test_missing_flag_is_config_error(capsys):
    assert main(["train"]) == 2


def test_bad_config_is_config_error(tmp_path):
    (tmp_path / "c.json").write_text('{"nu": 0.1}')
    assert main(["train", "--config", str(tmp_path / "c.json"), "--manifest", "x", "--models-dir", "y"]) == 2


def test_female_training_clip_is_data_contract_error(small_dataset, tmp_path):
    doc = json.loads((small_dataset.base_dir / "manifest.json").read_text())
    for e in doc["entries"]:
        e["path"] = str(small_dataset.base_dir / e["path"])
        if e["container_class"] == "female":
            e["role"] = "train"
    (tmp_path / "m.json").write_text(json.dumps(doc))
    assert main(["train", "--manifest", str(tmp_path / "m.json"), "--models-dir", str(tmp_path / "o")]) == 4


def test_convergence_failure_exit_code(trained, tmp_path):
    manifest, _ = trained
    (tmp_path / "c.json").write_text('{"ocsvm": {"max_iter": 1}}')
    assert main(["train", "--config", str(tmp_path / "c.json"), "--manifest", str(manifest),
                 "--models-dir", str(tmp_path / "o")]) == 5


def test_score_male_clean_female_contaminated(small_dataset, trained, capsys):
    _, models = trained
    assert main(["score", _wav(small_dataset, "d6-test-male-s1-01"), "--models-dir", str(models)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("iforest: clean") and out[1].startswith("ocsvm: clean")
    assert main(["score", _wav(small_dataset, "d6-female-s2-02"), "--models-dir", str(models)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("iforest: contaminated") and out[1].startswith("ocsvm: contaminated")


def test_score_trace_and_plot(small_dataset, trained, tmp_path):
    _, models = trained
    rc = main(["score", _wav(small_dataset, "d6-mixed-s1-01"), "--models-dir", str(models / "day6"),
               "--detector", "iforest", "--trace-csv", str(tmp_path / "t.csv"), "--plot", str(tmp_path / "p.png")])
    assert rc == 0
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "clip_id,detector,chunk_start_s,chunk_score" and len(lines) == 15
    assert (tmp_path / "p.png").read_bytes()[:4] == b"\x89PNG"


def test_threshold_flag(small_dataset, trained, capsys):
    _, models = trained
    main(["score", _wav(small_dataset, "d6-test-male-s1-01"), "--models-dir", str(models), "--threshold", "0.0"])
    assert capsys.readouterr().out.count("contaminated") == 2


def test_short_clip(tmp_path, trained, capsys):
    _, models = trained
    write_wav(tmp_path / "s.wav", AudioClip(np.zeros((4, 3 * 44100)), 44100))
    assert main(["score", str(tmp_path / "s.wav"), "--models-dir", str(models)]) == 4
    assert "clip too short" in capsys.readouterr().err


def test_several_days_need_day_flag(trained, small_dataset, tmp_path, capsys):
    import shutil

    _, models = trained
    shutil.copytree(models / "day6", tmp_path / "day6")
    shutil.copytree(models / "day6", tmp_path / "day7")
    wav = _wav(small_dataset, "d6-female-s1-01")
    assert main(["score", wav, "--models-dir", str(tmp_path)]) == 2
    assert main(["score", wav, "--models-dir", str(tmp_path), "--day", "7"]) == 0


def test_evaluate_reports(trained, tmp_path, capsys):
    manifest, models = trained
    assert main(["evaluate", "--manifest", str(manifest), "--models-dir", str(models), "--out", str(tmp_path)]) == 0
    text = capsys.readouterr().out
    rows = text.strip().splitlines()
    assert rows[0].startswith("Day") and [r.split("|")[0].strip() for r in rows[1:]] == ["6th", "All"]
    assert len(rows[0].split("|")) == 7
    assert (tmp_path / "report.txt").read_text() == text
    summary = (tmp_path / "decisions_summary.csv").read_text().splitlines()
    assert len(summary) == 1 + 12 * 2


def test_evaluate_deterministic(trained, tmp_path):
    manifest, models = trained
    for run in ("a", "b"):
        main(["evaluate", "--manifest", str(manifest), "--models-dir", str(models), "--out", str(tmp_path / run)])
    for name in ("report.txt", "report.csv", "decisions_long.csv", "decisions_summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_evaluate_empty_test_set(trained, small_dataset, tmp_path, capsys):
    _, models = trained
    m = DatasetManifest(small_dataset.by_role("train"), small_dataset.base_dir)
    doc = m.to_dict()
    for e in doc["entries"]:
        e["path"] = str(small_dataset.base_dir / e["path"])
    (tmp_path / "m.json").write_text(json.dumps(doc))
    assert main(["evaluate", "--manifest", str(tmp_path / "m.json"), "--models-dir", str(models)]) == 0
    assert capsys.readouterr().out.strip().splitlines() == [capsys_header()]


def capsys_header():
    from wingbeat_qc.evaluation import AccuracyTable, render_report

    return render_report(AccuracyTable()).strip()


def test_synth_command(tmp_path, capsys):
    rc = main(["synth", "--out", str(tmp_path), "--days", "6", "--clips-per-session", "1", "--duration", "1", "--seed", "2"])
    assert rc == 0
    assert len(DatasetManifest.load(tmp_path / "manifest.json")) == 8
    assert "wrote 8 clips" in capsys.readouterr().out


def test_config_flag_supplies_paths(trained, tmp_path, capsys):
    manifest, models = trained
    (tmp_path / "c.json").write_text(json.dumps({"paths": {"manifest": str(manifest), "models_dir": str(models)}}))
    assert main(["evaluate", "--config", str(tmp_path / "c.json"), "--detector", "iforest"]) == 0
    assert "iForest" in capsys.readouterr().out
