"""Synthetic wingbeat recordings standing in for real release containers.

Each insect is a harmonic stack at its own fundamental, amplitude-modulated by
a slow flight-bout envelope and with a slowly wandering wingbeat rate.  Both
modulations are sinusoidal, so every insect is an exact (Bessel-weighted) line
spectrum and a whole container is a sparse set of lines: they are placed on the
clip's own FFT grid (1/duration Hz resolution) and each channel is produced by
one inverse FFT.

Every clip is an independent draw: fundamentals, loudness and the per-channel
gains (insects move about the container) are all redrawn per recording, so a
"container" is only a class label and a size.

The default fundamental bands put females below males.  They are test
settings, not measured wingbeat frequencies.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .audio_io import AudioClip, write_wav
from .errors import ConfigError

CLASSES = ("male", "female", "mixed_25_75")
FEMALE_SHARE = {"male": 0.0, "female": 1.0, "mixed_25_75": 0.25}
REFERENCE_POPULATION = 250


@dataclass(frozen=True)
class WingbeatSpec:
    container_class: str = "male"
    n_insects: int = 250
    male_band: tuple[float, float] = (650.0, 850.0)
    female_band: tuple[float, float] = (400.0, 600.0)
    n_harmonics: int = 3
    harmonic_decay: float = 0.5
    am_rate: tuple[float, float] = (0.05, 0.5)
    am_depth: tuple[float, float] = (0.5, 1.0)
    fm_rate: tuple[float, float] = (0.1, 0.5)
    fm_deviation_hz: tuple[float, float] = (5.0, 25.0)
    # collective activity swing shared by all insects: peak relative depth and rate range
    activity_depth: float = 0.3
    activity_rate: tuple[float, float] = (0.03, 0.2)
    level_rms: float = 0.1
    noise_floor_db: float = -30.0
    band: tuple[float, float] = (200.0, 2000.0)
    duration_s: float = 30.0
    sample_rate: int = 44100
    n_channels: int = 4
    seed: int = 0
    # time constant of an optional global decay (flight activity fading)
    habituation_s: float | None = None

    def __post_init__(self):
        if self.container_class not in CLASSES:
            raise ConfigError(f"unknown container class {self.container_class!r}")
        if self.n_insects < 0 or self.n_harmonics < 1 or self.duration_s <= 0 or self.n_channels < 1:
            raise ConfigError("invalid wingbeat spec")
        if not 0 <= self.activity_depth < 1:
            raise ConfigError("activity_depth must lie in [0, 1)")
        for lo, hi in (self.male_band, self.female_band, self.am_rate, self.fm_rate, self.fm_deviation_hz,
                       self.activity_rate, self.band):
            if not 0 <= lo <= hi:
                raise ConfigError(f"bad range ({lo}, {hi})")

    @property
    def n_female(self) -> int:
        # nearest integer; 25 % of 250 is 62.5, which rounds (half to even) to 62
        return int(round(FEMALE_SHARE[self.container_class] * self.n_insects))


def _fm_lines(beta: np.ndarray):
    """Ragged Bessel expansion of ``cos(a + beta sin b) = sum_n J_n(beta) cos(a + n b)``.

    ``J_n(beta)`` are the Fourier coefficients of ``exp(i beta sin t)``, so a
    single batched FFT yields all of them.  Orders beyond
    ``beta + 4 beta^(1/3) + 4`` carry negligible power and are dropped.
    Returns ``(owner, order, weight)``.
    """
    half = np.ceil(beta + 4.0 * np.cbrt(beta) + 4.0).astype(np.int64)
    if beta.size == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros(0)
    size = 1 << int(np.ceil(np.log2(2 * half.max() + 2)))
    grid = 2 * np.pi * np.arange(size) / size
    coef = np.fft.fft(np.exp(1j * beta[:, None] * np.sin(grid)[None, :]), axis=1).real / size
    counts = 2 * half + 1
    owner = np.repeat(np.arange(beta.size), counts)
    starts = np.repeat(np.cumsum(counts) - counts, counts)
    order = np.arange(owner.size) - starts - half[owner]
    return owner, order, coef[owner, order % size]


def tonal_components(spec: WingbeatSpec):
    """Line list ``(freq_hz, amplitude, phase, insect)`` before channel mixing.

    Insect ``i`` contributes, for each harmonic ``h``,
    ``A_ih (1 + m_i cos(2 pi r_i t + theta_i)) cos(2 pi h f_i t + phi_ih + h (d_i / v_i) sin(2 pi v_i t + psi_i))``:
    a slow flight-bout envelope and a slow drift of +-d_i Hz in wingbeat rate.
    """
    rng = np.random.default_rng([spec.seed, 0])
    n = spec.n_insects
    is_female = np.arange(n) < spec.n_female
    f0 = np.where(
        is_female,
        rng.uniform(*spec.female_band, size=n),
        rng.uniform(*spec.male_band, size=n),
    )
    loudness = rng.uniform(0.5, 1.5, size=n)
    base = spec.level_rms * np.sqrt(2.0 / REFERENCE_POPULATION) * loudness

    am_rate = rng.uniform(*spec.am_rate, size=n)
    am_depth = rng.uniform(*spec.am_depth, size=n)
    am_phase = rng.uniform(0, 2 * np.pi, size=n)
    fm_rate = rng.uniform(*spec.fm_rate, size=n)
    fm_dev = rng.uniform(*spec.fm_deviation_hz, size=n)
    fm_phase = rng.uniform(0, 2 * np.pi, size=n)

    freqs, amps, phases, owners = [], [], [], []
    for h in range(1, spec.n_harmonics + 1):
        phi = rng.uniform(0, 2 * np.pi, size=n)
        owner, order, weight = _fm_lines(h * fm_dev / fm_rate)
        f = h * f0[owner] + order * fm_rate[owner]
        a = base[owner] * spec.harmonic_decay ** (h - 1) * weight
        ph = phi[owner] + order * fm_phase[owner]
        m, r, th = am_depth[owner], am_rate[owner], am_phase[owner]
        freqs += [f, f + r, f - r]
        amps += [a, a * m / 2, a * m / 2]
        phases += [ph, ph + th, ph - th]
        owners += [owner] * 3
    freqs, amps, phases, owner = (np.concatenate(v) for v in (freqs, amps, phases, owners))
    keep = (freqs >= spec.band[0]) & (freqs <= spec.band[1])
    return freqs[keep], amps[keep], phases[keep], owner[keep]


def generate_clip(spec: WingbeatSpec) -> AudioClip:
    """Render a multi-channel container recording (default 4 ch, 44.1 kHz)."""
    n_samples = int(round(spec.duration_s * spec.sample_rate))
    freqs, amps, phases, owner = tonal_components(spec)
    gains = np.random.default_rng([spec.seed, 1]).uniform(0.5, 1.0, size=(spec.n_channels, spec.n_insects))
    noise_rng = np.random.default_rng([spec.seed, 2])

    n_bins = n_samples // 2 + 1
    bins = np.rint(freqs * n_samples / spec.sample_rate).astype(np.int64)
    ok = (bins > 0) & (bins < n_bins - 1)
    bins, line = bins[ok], (n_samples / 2.0) * amps[ok] * np.exp(1j * phases[ok])
    owner = owner[ok]

    t = np.arange(n_samples) / spec.sample_rate
    env_rng = np.random.default_rng([spec.seed, 3])
    envelope = 1.0 + spec.activity_depth * np.cos(
        2 * np.pi * env_rng.uniform(*spec.activity_rate) * t + env_rng.uniform(0, 2 * np.pi)
    )
    if spec.habituation_s:
        envelope *= np.exp(-t / spec.habituation_s)
    noise_sigma = spec.level_rms * 10.0 ** (spec.noise_floor_db / 20.0)
    out = np.empty((spec.n_channels, n_samples))
    for c in range(spec.n_channels):
        w = line * gains[c, owner]
        spec_c = np.bincount(bins, weights=w.real, minlength=n_bins) + 1j * np.bincount(
            bins, weights=w.imag, minlength=n_bins
        )
        x = np.fft.irfft(spec_c, n=n_samples)
        x *= envelope
        x += noise_sigma * noise_rng.standard_normal(n_samples)
        out[c] = x
    np.clip(out, -1.0, 1.0, out=out)
    return AudioClip(out, spec.sample_rate)


# --------------------------------------------------------------------------
# datasets

# recording order within a session: training males, females, test males, mix
CONTAINERS = (
    ("train-male", "male", "train"),
    ("female", "female", "test"),
    ("test-male", "male", "test"),
    ("mixed", "mixed_25_75", "test"),
)


@dataclass(frozen=True)
class DatasetLayout:
    days: tuple[int, ...] = (6, 7, 8, 9)
    sessions: int = 2
    clips_per_session: int = 8
    duration_s: float = 30.0
    base_spec: WingbeatSpec = field(default_factory=WingbeatSpec)

    @property
    def n_clips(self) -> int:
        return len(self.days) * len(CONTAINERS) * self.sessions * self.clips_per_session


FULL_LAYOUT = DatasetLayout()


def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def dataset_specs(layout: DatasetLayout, seed: int):
    """Yield ``(clip_id, relative_path, container_class, day, session, role, spec)``."""
    for day in layout.days:
        for ci, (name, cls, role) in enumerate(CONTAINERS):
            for session in range(1, layout.sessions + 1):
                for k in range(1, layout.clips_per_session + 1):
                    clip_id = f"d{day}-{name}-s{session}-{k:02d}"
                    spec = replace(
                        layout.base_spec,
                        container_class=cls,
                        duration_s=layout.duration_s,
                        seed=_derived_seed(seed, day, ci, session, k),
                    )
                    yield clip_id, f"day{day}/{clip_id}.wav", cls, day, session, role, spec


def generate_dataset(layout: DatasetLayout | str, out_dir: str | Path, seed: int = 0):
    """Write every clip of ``layout`` as 16-bit WAV plus ``manifest.json``.

    The full layout is 4 days x 4 containers x 2 sessions x 8 clips of 30 s.
    """
    from .evaluation import DatasetManifest, ManifestEntry

    if isinstance(layout, str):
        if layout != "full":
            raise ConfigError(f"unknown layout {layout!r}")
        layout = FULL_LAYOUT
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for clip_id, rel, cls, day, session, role, spec in dataset_specs(layout, seed):
        path = out_dir / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        write_wav(path, generate_clip(spec), bits=16)
        entries.append(ManifestEntry(rel, clip_id, cls, day, session, role))
    manifest = DatasetManifest(entries, base_dir=out_dir)
    manifest.save(out_dir / "manifest.json")
    return manifest
