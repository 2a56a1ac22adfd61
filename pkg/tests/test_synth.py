import hashlib

import numpy as np
import pytest
from scipy import special

from wingbeat_qc.audio_io import SegmentationConfig, resample, segment, to_mono
from wingbeat_qc.errors import ConfigError
from wingbeat_qc.features import extract_spectral_embedding
from wingbeat_qc.synth import (
    FULL_LAYOUT,
    DatasetLayout,
    WingbeatSpec,
    _fm_lines,
    dataset_specs,
    generate_clip,
    generate_dataset,
    tonal_components,
)


def spectrum(x, rate):
    return np.fft.rfftfreq(x.size, 1 / rate), np.abs(np.fft.rfft(x)) ** 2


def centroid(clip, lo=200.0, hi=2000.0):
    f, p = spectrum(clip.channels.mean(axis=0), clip.sample_rate)
    band = (f >= lo) & (f <= hi)
    return float((f[band] * p[band]).sum() / p[band].sum())


def test_no_insects_is_noise_floor():
    spec = WingbeatSpec(n_insects=0, duration_s=5, seed=1)
    clip = generate_clip(spec)
    sigma = spec.level_rms * 10 ** (spec.noise_floor_db / 20)
    assert clip.channels.std() == pytest.approx(sigma, rel=0.01)
    assert tonal_components(spec)[0].size == 0


def test_clip_format():
    clip = generate_clip(WingbeatSpec(n_insects=10, duration_s=2, seed=3))
    assert clip.n_channels == 4 and clip.sample_rate == 44100 and clip.n_samples == 88200
    assert np.abs(clip.channels).max() <= 1.0


def test_channels_are_distinct_mixtures():
    ch = generate_clip(WingbeatSpec(n_insects=30, duration_s=2, seed=4)).channels
    c = np.corrcoef(ch)
    assert np.all(c[np.triu_indices(4, 1)] < 0.999)


def test_male_centroid_above_female():
    kw = dict(n_insects=100, duration_s=4, seed=9)
    assert centroid(generate_clip(WingbeatSpec("male", **kw))) > centroid(generate_clip(WingbeatSpec("female", **kw)))


def test_female_counts():
    assert WingbeatSpec("mixed_25_75", n_insects=200).n_female == 50
    assert WingbeatSpec("mixed_25_75").n_female == 62  # 62.5 is not a whole insect
    assert WingbeatSpec("female").n_female == 250
    assert WingbeatSpec("male").n_female == 0


def test_fundamentals_come_from_class_bands():
    spec = WingbeatSpec("mixed_25_75", n_insects=40, fm_deviation_hz=(0, 0), am_depth=(0, 0), n_harmonics=1, seed=2)
    f, a, _, owner = tonal_components(spec)
    carriers = f[a > 0]
    assert np.all(((carriers >= 400) & (carriers <= 600)) == (owner[a > 0] < spec.n_female))
    assert np.all((carriers >= 400) & (carriers <= 850))


def test_bessel_weights_match_scipy():
    beta = np.array([0.0, 0.3, 2.5, 40.0, 375.0])
    owner, order, weight = _fm_lines(beta)
    np.testing.assert_allclose(weight, special.jv(order, beta[owner]), atol=1e-12)
    # the kept orders carry (almost) all of each carrier's power
    power = np.bincount(owner, weights=weight ** 2)
    assert np.all(power > 1 - 1e-9)


def test_all_energy_inside_analysis_band():
    spec = WingbeatSpec("mixed_25_75", duration_s=4, noise_floor_db=-300, seed=5)
    f, p = spectrum(generate_clip(spec).channels.mean(axis=0), spec.sample_rate)
    assert p[(f >= 200) & (f <= 2000)].sum() / p.sum() >= 0.99


def test_tonal_energy_within_harmonic_bands():
    spec = WingbeatSpec("mixed_25_75", seed=6)
    f, a, _, owner = tonal_components(spec)
    h_max = spec.n_harmonics
    slack = h_max * spec.fm_deviation_hz[1] + spec.am_rate[1]
    inside = np.zeros(f.size, bool)
    for h in range(1, h_max + 1):
        for lo, hi in (spec.male_band, spec.female_band):
            inside |= (f >= h * lo - slack) & (f <= h * hi + slack)
    assert (a[inside] ** 2).sum() / (a ** 2).sum() >= 0.99


def test_same_seed_same_clip_other_seed_differs():
    spec = WingbeatSpec(n_insects=20, duration_s=1, seed=8)
    a, b = generate_clip(spec), generate_clip(spec)
    assert a.channels.tobytes() == b.channels.tobytes()
    assert generate_clip(WingbeatSpec(n_insects=20, duration_s=1, seed=9)).channels.tobytes() != a.channels.tobytes()


def test_habituation_decay():
    spec = WingbeatSpec(n_insects=50, duration_s=6, activity_depth=0.0, habituation_s=2.0, seed=1)
    x = generate_clip(spec).channels.mean(axis=0)
    first, last = x[:44100].std(), x[-44100:].std()
    assert last < 0.2 * first


@pytest.mark.parametrize("kw", [dict(container_class="larva"), dict(n_insects=-1), dict(activity_depth=1.0),
                                dict(male_band=(900.0, 800.0)), dict(duration_s=0)])
def test_invalid_spec(kw):
    with pytest.raises(ConfigError):
        WingbeatSpec(**kw)


def test_embeddings_linearly_separable():
    # ridge classifier fitted on some clips, checked on held-out clips
    def chunks(cls, seed):
        mono = resample(to_mono(generate_clip(WingbeatSpec(cls, seed=seed, duration_s=12))), 4000)
        return [extract_spectral_embedding(c) for c in segment(mono, SegmentationConfig())]

    def data(seeds):
        X, y = [], []
        for s in seeds:
            for cls, label in (("male", 1.0), ("female", -1.0)):
                v = chunks(cls, s)
                X += v
                y += [label] * len(v)
        return np.array(X), np.array(y)

    Xtr, ytr = data([1, 2, 3])
    Xte, yte = data([4, 5])
    mu, sd = Xtr.mean(0), Xtr.std(0) + 1e-9
    A = np.c_[(Xtr - mu) / sd, np.ones(len(Xtr))]
    w = np.linalg.solve(A.T @ A + 1.0 * np.eye(A.shape[1]), A.T @ ytr)
    pred = np.sign(np.c_[(Xte - mu) / sd, np.ones(len(Xte))] @ w)
    assert np.mean(pred == yte) >= 0.95


# ---- datasets

def test_full_layout_arithmetic():
    specs = list(dataset_specs(FULL_LAYOUT, 0))
    assert len(specs) == FULL_LAYOUT.n_clips == 256
    assert sum(s[-1].duration_s for s in specs) == 128 * 60
    per = {}
    for _, _, cls, day, _, role, _ in specs:
        per[(day, cls, role)] = per.get((day, cls, role), 0) + 1
    assert set(per.values()) == {16}
    assert {(c, r) for _, c, r in per} == {("male", "train"), ("male", "test"), ("female", "test"), ("mixed_25_75", "test")}


def test_custom_layout_written(tmp_path):
    layout = DatasetLayout(days=(6,), sessions=1, clips_per_session=2, duration_s=2.0)
    m = generate_dataset(layout, tmp_path, seed=3)
    assert len(m) == 8 == layout.n_clips
    assert (tmp_path / "manifest.json").is_file()
    assert all(m.resolve(e).is_file() for e in m)


def test_regeneration_is_byte_identical(tmp_path):
    layout = DatasetLayout(days=(6,), sessions=1, clips_per_session=1, duration_s=1.0)
    digests = []
    for run in ("a", "b"):
        generate_dataset(layout, tmp_path / run, seed=5)
        files = sorted((tmp_path / run).rglob("*"))
        digests.append([(p.relative_to(tmp_path / run).as_posix(), hashlib.sha256(p.read_bytes()).hexdigest())
                        for p in files if p.is_file()])
    assert digests[0] == digests[1]


def test_unwritable_directory(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        generate_dataset(DatasetLayout(days=(6,), sessions=1, clips_per_session=1, duration_s=1.0), blocker / "sub")


def test_unknown_layout_name(tmp_path):
    with pytest.raises(ConfigError):
        generate_dataset("tiny", tmp_path)


def test_mixed_scores_above_male(small_detectors):
    from wingbeat_qc.scoring import score_clip_all

    def means(cls, seed):
        return {d.detector: d.mean_score for d in score_clip_all(small_detectors, to_mono(generate_clip(WingbeatSpec(cls, seed=seed))))}

    male, mixed = means("male", 71), means("mixed_25_75", 72)
    assert mixed["iforest"] > male["iforest"]
    assert mixed["ocsvm"] > male["ocsvm"]
