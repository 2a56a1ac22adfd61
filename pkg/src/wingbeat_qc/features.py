"""Chunk embeddings: a built-in band-limited log-mel summary, and CSV ingestion
of embeddings computed elsewhere (e.g. by a pretrained speech network).

The built-in extractor treats its input at the analysis rate (4 kHz).  Feeding
a 4 s / 4 kHz chunk to a network that expects 1 s / 16 kHz only relabels the
time axis, so nothing changes numerically here; the relabelling is recorded in
``FeatureMatrix.metadata`` for users of external embeddings.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np
from scipy.signal import get_window

from .audio_io import Chunk
from .errors import ConfigError, DataContractError, DimensionMismatchError

SPECTRAL_EXTRACTOR_ID = "spectral-logmel-v1"
FEATURE_FILE_VERSION = 1
RATE_REINTERPRETATION = "4s@4kHz treated as 1s@16kHz"


@dataclass(frozen=True)
class SpectralEmbedConfig:
    n_fft: int = 512
    hop: int = 160
    n_mels: int = 64
    fmin: float = 200.0
    fmax: float = 2000.0
    output_dim: int = 512
    sample_rate: int = 4000
    rate_reinterpretation: str = RATE_REINTERPRETATION

    def __post_init__(self):
        if not 0 <= self.fmin < self.fmax:
            raise ConfigError(f"bad band ({self.fmin}, {self.fmax})")
        if self.fmax > self.sample_rate / 2:
            raise ConfigError(f"band upper edge {self.fmax} Hz exceeds Nyquist {self.sample_rate / 2} Hz")
        if self.n_fft < 2 or self.hop < 1 or self.n_mels < 1 or self.output_dim < 1:
            raise ConfigError("n_fft, hop, n_mels and output_dim must be positive")

    def config_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    chunk_index: int
    clip_id: str = ""


@dataclass
class FeatureMatrix:
    """Stacked embeddings, one row per chunk, plus the extractor that made them."""

    values: np.ndarray
    clip_ids: list[str] = field(default_factory=list)
    chunk_indices: list[int] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DimensionMismatchError("feature matrix must be 2-D")
        n = self.values.shape[0]
        if not self.clip_ids:
            self.clip_ids = [""] * n
        if not self.chunk_indices:
            self.chunk_indices = list(range(n))
        if len(self.clip_ids) != n or len(self.chunk_indices) != n:
            raise DimensionMismatchError("row labels do not match the number of rows")
        if not np.all(np.isfinite(self.values)):
            raise DataContractError("feature matrix contains non-finite values")
        self.metadata.setdefault("dim", self.dim)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def extractor_id(self) -> str | None:
        return self.metadata.get("extractor_id")

    def __len__(self) -> int:
        return self.values.shape[0]

    def __iter__(self) -> Iterator[FeatureVector]:
        for row, cid, idx in zip(self.values, self.clip_ids, self.chunk_indices):
            yield FeatureVector(row, idx, cid)

    @classmethod
    def from_vectors(cls, vectors: Iterable[FeatureVector], metadata: dict | None = None, dim: int | None = None):
        vectors = list(vectors)
        if vectors:
            dims = {len(v.values) for v in vectors}
            if len(dims) != 1:
                raise DimensionMismatchError(f"vectors have mixed dimensions {sorted(dims)}")
            values = np.vstack([v.values for v in vectors])
        else:
            values = np.zeros((0, dim or 0))
        return cls(
            values,
            [v.clip_id for v in vectors],
            [v.chunk_index for v in vectors],
            dict(metadata or {}),
        )

    def rows_for(self, clip_id: str) -> "FeatureMatrix":
        keep = [i for i, c in enumerate(self.clip_ids) if c == clip_id]
        keep.sort(key=lambda i: self.chunk_indices[i])
        return FeatureMatrix(
            self.values[keep],
            [self.clip_ids[i] for i in keep],
            [self.chunk_indices[i] for i in keep],
            dict(self.metadata),
        )


# --------------------------------------------------------------------------
# log-mel front end

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_edges(cfg: SpectralEmbedConfig) -> np.ndarray:
    """``n_mels + 2`` frequencies: band k spans edges[k]..edges[k+2], peaks at edges[k+1]."""
    return mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2))


@lru_cache(maxsize=8)
def mel_filterbank(cfg: SpectralEmbedConfig) -> np.ndarray:
    """Triangular filters (peak 1) on the rfft grid, shape (n_mels, n_fft // 2 + 1)."""
    freqs = np.fft.rfftfreq(cfg.n_fft, 1.0 / cfg.sample_rate)
    edges = mel_band_edges(cfg)
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    fb.setflags(write=False)
    return fb


def band_limit(x: np.ndarray, sample_rate: int, fmin: float, fmax: float) -> np.ndarray:
    """Zero every rfft bin of the whole signal outside [fmin, fmax]."""
    spec = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(x.size, 1.0 / sample_rate)
    spec[(freqs < fmin) | (freqs > fmax)] = 0.0
    return np.fft.irfft(spec, n=x.size)


def _as_samples(chunk) -> np.ndarray:
    return np.asarray(chunk.samples if isinstance(chunk, Chunk) else chunk, dtype=np.float64)


def log_mel_spectrogram(chunk, cfg: SpectralEmbedConfig = SpectralEmbedConfig()) -> np.ndarray:
    """log(1 + mel power), shape (frames, n_mels), frames = (len - n_fft) // hop + 1."""
    x = _as_samples(chunk)
    if cfg.n_fft > x.size:
        raise DataContractError(f"n_fft={cfg.n_fft} exceeds chunk length {x.size}")
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.n_fft)[:: cfg.hop]
    window = get_window("hann", cfg.n_fft)
    power = np.abs(np.fft.rfft(frames * window, axis=1)) ** 2
    return np.log1p(power @ mel_filterbank(cfg).T)


def extract_spectral_embedding(chunk, cfg: SpectralEmbedConfig = SpectralEmbedConfig()) -> np.ndarray:
    """Per-band mean, std, max and positive flux of the band-limited log-mel image.

    The chunk is brick-wall filtered to [fmin, fmax] before analysis, so energy
    outside the band cannot reach the embedding.  The 4 * n_mels statistics are
    zero-padded or truncated to ``output_dim``.
    """
    x = band_limit(_as_samples(chunk), cfg.sample_rate, cfg.fmin, cfg.fmax)
    S = log_mel_spectrogram(x, cfg)
    if S.shape[0] > 1:
        flux = np.maximum(np.diff(S, axis=0), 0.0).mean(axis=0)
    else:
        flux = np.zeros(S.shape[1])
    stats = np.concatenate([S.mean(axis=0), S.std(axis=0), S.max(axis=0), flux])
    out = np.zeros(cfg.output_dim)
    n = min(cfg.output_dim, stats.size)
    out[:n] = stats[:n]
    return out


class SpectralEmbedding:
    """Built-in extractor: callable on a chunk, returns a length-D vector."""

    def __init__(self, cfg: SpectralEmbedConfig | None = None):
        self.cfg = cfg or SpectralEmbedConfig()

    extractor_id = SPECTRAL_EXTRACTOR_ID

    @property
    def dim(self) -> int:
        return self.cfg.output_dim

    @property
    def metadata(self) -> dict:
        return {
            "extractor_id": self.extractor_id,
            "config_hash": self.cfg.config_hash(),
            "dim": self.dim,
            "rate_reinterpretation": self.cfg.rate_reinterpretation,
        }

    def __call__(self, chunk) -> np.ndarray:
        return extract_spectral_embedding(chunk, self.cfg)

    def embed_chunks(self, chunks: list[Chunk], clip_id: str = "") -> FeatureMatrix:
        vectors = [FeatureVector(self(c), c.index, clip_id) for c in chunks]
        return FeatureMatrix.from_vectors(vectors, self.metadata, dim=self.dim)


# --------------------------------------------------------------------------
# feature files

def _meta_path(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


def save_embeddings(matrix: FeatureMatrix, path: str | Path) -> None:
    """Write ``matrix`` as CSV plus a ``<name>.meta.json`` sidecar.

    Rows are written sorted by (clip_id, chunk_index); floats use ``repr`` so
    loading them back is exact.
    """
    path = Path(path)
    order = sorted(range(len(matrix)), key=lambda i: (matrix.clip_ids[i], matrix.chunk_indices[i]))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["clip_id", "chunk_index"] + [f"d{k}" for k in range(matrix.dim)])
        for i in order:
            w.writerow([matrix.clip_ids[i], matrix.chunk_indices[i]] + [repr(float(v)) for v in matrix.values[i]])
    meta = {
        "format": "wingbeat_qc.features",
        "version": FEATURE_FILE_VERSION,
        "dim": matrix.dim,
        "extractor_id": matrix.metadata.get("extractor_id", "external"),
        "config_hash": matrix.metadata.get("config_hash"),
        "rate_reinterpretation": matrix.metadata.get("rate_reinterpretation", RATE_REINTERPRETATION),
    }
    _meta_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_embeddings(path: str | Path) -> FeatureMatrix:
    """Read a feature CSV (and its sidecar, if present). Row order is preserved."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataContractError(f"{path}: empty feature file, header missing") from None
        if header[:2] != ["clip_id", "chunk_index"] or header[2:] != [f"d{k}" for k in range(len(header) - 2)]:
            raise DataContractError(f"{path}: bad header, expected clip_id,chunk_index,d0,...")
        dim = len(header) - 2
        values, clip_ids, chunk_indices, seen = [], [], [], set()
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) - 2 != dim:
                raise DimensionMismatchError(f"{path}:{lineno}: {len(row) - 2} values, header declares D={dim}")
            try:
                idx = int(row[1])
                vals = [float(v) for v in row[2:]]
            except ValueError as exc:
                raise DataContractError(f"{path}:{lineno}: non-numeric cell ({exc})") from None
            key = (row[0], idx)
            if key in seen:
                raise DataContractError(f"{path}:{lineno}: duplicate (clip_id, chunk_index) {key}")
            seen.add(key)
            clip_ids.append(row[0])
            chunk_indices.append(idx)
            values.append(vals)

    meta = {"extractor_id": "external", "config_hash": None}
    mp = _meta_path(path)
    if mp.is_file():
        side = json.loads(mp.read_text(encoding="utf-8"))
        if side.get("dim") != dim:
            raise DimensionMismatchError(f"{mp}: sidecar says D={side.get('dim')}, file has D={dim}")
        meta.update({k: side[k] for k in ("extractor_id", "config_hash", "rate_reinterpretation") if k in side})
    arr = np.array(values, dtype=np.float64).reshape(len(values), dim)
    return FeatureMatrix(arr, clip_ids, chunk_indices, meta)
