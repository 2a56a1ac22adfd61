"""WAV ingestion, channel averaging, rational resampling and chunking."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import signal

from .errors import (
    ClipTooShortError,
    ConfigError,
    MalformedWavError,
    UnsupportedWavError,
)

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

# passband / stopband edges of the resampling filter, as fractions of the
# lower of the two sample rates
PASS_EDGE = 0.40
STOP_EDGE = 0.45
STOPBAND_DB = 70.0


@dataclass(frozen=True)
class AudioClip:
    """Multi-channel recording, samples in [-1, 1], shape (n_channels, n_samples)."""

    channels: np.ndarray
    sample_rate: int
    source_path: str | None = None

    def __post_init__(self):
        data = np.atleast_2d(np.asarray(self.channels, dtype=np.float64))
        if data.ndim != 2 or data.shape[0] < 1:
            raise ValueError("channels must be a 2-D array (n_channels, n_samples)")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(data)):
            raise ValueError("non-finite samples")
        if data.size and np.max(np.abs(data)) > 1.0:
            raise ValueError("samples must lie in [-1, 1]")
        data.setflags(write=False)
        object.__setattr__(self, "channels", data)

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate


@dataclass(frozen=True)
class MonoClip:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        data = np.asarray(self.samples, dtype=np.float64).ravel()
        if data.size == 0:
            raise ValueError("empty clip")
        if not np.all(np.isfinite(data)):
            raise ValueError("non-finite samples")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        data.setflags(write=False)
        object.__setattr__(self, "samples", data)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class SegmentationConfig:
    """Window length, hop and the rate chunks are cut at.

    The defaults are the scoring mode (4 s windows, 50 % overlap, 4 kHz).
    Training uses ``hop_s == window_s``.
    """

    window_s: float = 4.0
    hop_s: float = 2.0
    analysis_rate: int = 4000

    def __post_init__(self):
        if not 0 < self.hop_s <= self.window_s:
            raise ConfigError(f"need 0 < hop_s <= window_s, got hop_s={self.hop_s}, window_s={self.window_s}")
        if self.analysis_rate <= 0:
            raise ConfigError("analysis_rate must be positive")
        for name in ("window_s", "hop_s"):
            n = getattr(self, name) * self.analysis_rate
            if abs(n - round(n)) > 1e-9:
                raise ConfigError(f"{name} x analysis_rate must be a whole number of samples, got {n}")

    @property
    def window_samples(self) -> int:
        return int(round(self.window_s * self.analysis_rate))

    @property
    def hop_samples(self) -> int:
        return int(round(self.hop_s * self.analysis_rate))

    def n_chunks(self, n_samples: int) -> int:
        if n_samples < self.window_samples:
            return 0
        return (n_samples - self.window_samples) // self.hop_samples + 1


@dataclass(frozen=True)
class Chunk:
    samples: np.ndarray = field(repr=False)
    index: int
    start_sample: int
    sample_rate: int

    @property
    def start_s(self) -> float:
        return self.start_sample / self.sample_rate


# --------------------------------------------------------------------------
# WAV reading / writing

_INT_SCALE = {8: 128.0, 16: 32768.0, 24: 8388608.0, 32: 2147483648.0}


def _parse_fmt(body: bytes) -> tuple[int, int, int, int]:
    if len(body) < 16:
        raise MalformedWavError("fmt chunk shorter than 16 bytes")
    tag, n_channels, rate, _byte_rate, block_align, bits = struct.unpack("<HHIIHH", body[:16])
    if tag == WAVE_FORMAT_EXTENSIBLE:
        if len(body) < 26:
            raise MalformedWavError("extensible fmt chunk truncated")
        tag = struct.unpack("<H", body[24:26])[0]
    return tag, n_channels, rate, bits


def read_wav(path: str | Path) -> AudioClip:
    """Read a PCM (8/16/24/32-bit integer) or 32-bit float WAV file.

    Integer samples are divided by the magnitude of the type's most negative
    value (e.g. 32768 for 16-bit); 8-bit data is unsigned and re-centred first.

    Raises
    ------
    FileNotFoundError
        The file does not exist.
    MalformedWavError
        Broken RIFF structure, missing chunks or a truncated data chunk.
    UnsupportedWavError
        Well-formed file in a codec, bit depth or channel count not handled here.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such WAV file: {path}")
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise MalformedWavError(f"{path}: malformed RIFF header")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos:pos + 4]
        size = struct.unpack("<I", raw[pos + 4:pos + 8])[0]
        body_start = pos + 8
        if cid == b"data":
            if body_start + size > len(raw):
                raise MalformedWavError(
                    f"{path}: malformed data chunk (declares {size} bytes, {len(raw) - body_start} present)"
                )
            data = raw[body_start:body_start + size]
        elif cid == b"fmt ":
            if body_start + size > len(raw):
                raise MalformedWavError(f"{path}: malformed fmt chunk")
            fmt = _parse_fmt(raw[body_start:body_start + size])
        pos = body_start + size + (size & 1)
    if fmt is None:
        raise MalformedWavError(f"{path}: malformed file, no fmt chunk")
    if data is None:
        raise MalformedWavError(f"{path}: malformed file, no data chunk")

    tag, n_channels, rate, bits = fmt
    if not 1 <= n_channels <= 8:
        raise UnsupportedWavError(f"{path}: unsupported channel count {n_channels}")
    if rate <= 0:
        raise MalformedWavError(f"{path}: malformed sample rate {rate}")
    supported = (tag == WAVE_FORMAT_PCM and bits in _INT_SCALE) or (tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32)
    if not supported:
        raise UnsupportedWavError(f"{path}: unsupported codec (format tag {tag:#06x}, {bits} bits)")

    width = bits // 8
    frame = width * n_channels
    if len(data) % frame:
        raise MalformedWavError(f"{path}: malformed data chunk, {len(data)} bytes is not a whole number of frames")

    if tag == WAVE_FORMAT_IEEE_FLOAT:
        samples = np.frombuffer(data, dtype="<f4").astype(np.float64)
        if not np.all(np.isfinite(samples)):
            raise MalformedWavError(f"{path}: malformed float data (non-finite samples)")
        samples = np.clip(samples, -1.0, 1.0)
    elif bits == 8:
        samples = (np.frombuffer(data, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    elif bits == 24:
        b = np.frombuffer(data, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        ints = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        ints = np.where(ints >= 1 << 23, ints - (1 << 24), ints)
        samples = ints / _INT_SCALE[24]
    else:
        samples = np.frombuffer(data, dtype=f"<i{width}").astype(np.float64) / _INT_SCALE[bits]

    channels = samples.reshape(-1, n_channels).T
    return AudioClip(channels, int(rate), str(path))


def write_wav(path: str | Path, clip: AudioClip, bits: int = 16, float_format: bool = False) -> None:
    """Write ``clip`` as a canonical 44-byte-header WAV file."""
    data = np.asarray(clip.channels, dtype=np.float64).T  # (frames, channels)
    n_channels = data.shape[1]
    if float_format:
        tag, bits = WAVE_FORMAT_IEEE_FLOAT, 32
        payload = data.astype("<f4").tobytes()
    else:
        if bits not in _INT_SCALE:
            raise UnsupportedWavError(f"cannot write {bits}-bit PCM")
        tag = WAVE_FORMAT_PCM
        scale = _INT_SCALE[bits]
        ints = np.clip(np.round(data * scale), -scale, scale - 1).astype(np.int64)
        if bits == 8:
            payload = (ints + 128).astype(np.uint8).tobytes()
        elif bits == 24:
            u = (ints & 0xFFFFFF).astype(np.uint32)
            b = np.stack([u & 0xFF, (u >> 8) & 0xFF, (u >> 16) & 0xFF], axis=-1).astype(np.uint8)
            payload = b.tobytes()
        else:
            payload = ints.astype(f"<i{bits // 8}").tobytes()
    block_align = n_channels * bits // 8
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    header += b"fmt " + struct.pack(
        "<IHHIIHH", 16, tag, n_channels, clip.sample_rate, clip.sample_rate * block_align, block_align, bits
    )
    header += b"data" + struct.pack("<I", len(payload))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)
        if len(payload) & 1:
            fh.write(b"\x00")


# --------------------------------------------------------------------------
# signal path

def to_mono(clip: AudioClip) -> MonoClip:
    """Average the channels sample by sample."""
    return MonoClip(clip.channels.mean(axis=0), clip.sample_rate)


def resample_ratio(source_rate: int, target_rate: int) -> tuple[int, int]:
    """Reduced (up, down) factors, e.g. 44100 -> 4000 gives (40, 441)."""
    g = math.gcd(int(source_rate), int(target_rate))
    return int(target_rate) // g, int(source_rate) // g


@lru_cache(maxsize=16)
def resampling_filter(source_rate: int, target_rate: int) -> np.ndarray:
    """Kaiser-window low-pass FIR designed at the upsampled rate.

    Passband ends at 0.40 and stopband starts at 0.45 of the lower rate;
    the Kaiser beta is sized for 70 dB stopband attenuation.
    """
    up, _ = resample_ratio(source_rate, target_rate)
    low = min(source_rate, target_rate)
    fs_up = float(source_rate) * up
    f_pass, f_stop = PASS_EDGE * low, STOP_EDGE * low
    numtaps, beta = signal.kaiserord(STOPBAND_DB, (f_stop - f_pass) / (fs_up / 2))
    numtaps |= 1  # odd length keeps the group delay on a sample
    taps = signal.firwin(numtaps, (f_pass + f_stop) / 2, window=("kaiser", beta), fs=fs_up)
    taps.setflags(write=False)
    return taps


def resample(clip: MonoClip, target_rate: int) -> MonoClip:
    """Polyphase rational resampling to ``target_rate``."""
    if target_rate <= 0:
        raise ConfigError(f"target_rate must be positive, got {target_rate}")
    target_rate = int(target_rate)
    if target_rate == clip.sample_rate:
        return clip
    up, down = resample_ratio(clip.sample_rate, target_rate)
    taps = resampling_filter(clip.sample_rate, target_rate)
    out = signal.resample_poly(clip.samples, up, down, window=taps)
    return MonoClip(out, target_rate)


def segment(clip: MonoClip, cfg: SegmentationConfig) -> list[Chunk]:
    """Cut ``clip`` into full windows; a trailing partial window is dropped."""
    if clip.sample_rate != cfg.analysis_rate:
        raise ConfigError(f"clip is at {clip.sample_rate} Hz, segmentation expects {cfg.analysis_rate} Hz")
    win, hop = cfg.window_samples, cfg.hop_samples
    n = cfg.n_chunks(clip.samples.size)
    if n == 0:
        raise ClipTooShortError(
            f"clip too short: {clip.duration_s:.3f} s is less than one {cfg.window_s:g} s window"
        )
    chunks = []
    for k in range(n):
        start = k * hop
        data = clip.samples[start:start + win].copy()
        data.setflags(write=False)
        chunks.append(Chunk(data, k, start, clip.sample_rate))
    return chunks


def load_mono(path: str | Path, analysis_rate: int = 4000) -> MonoClip:
    """read_wav -> to_mono -> resample in one call."""
    return resample(to_mono(read_wav(path)), analysis_rate)
