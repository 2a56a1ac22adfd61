"""Static figures: a clip's spectrogram above its per-chunk score traces."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy import signal

from .audio_io import MonoClip
from .errors import ConfigError


def plot_score_trace(clip: MonoClip, decisions, path: str | Path, fmax: float = 2000.0) -> None:
    """Write a PNG/PDF/SVG (by suffix) with the spectrogram and one trace per detector.

    The point at ``t`` is the score of the window ``[t, t + window)``.
    """
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        raise ConfigError("plotting needs matplotlib (pip install 'artifact[plot]')") from None

    f, t, sxx = signal.spectrogram(clip.samples, fs=clip.sample_rate, nperseg=512, noverlap=384)
    keep = f <= fmax
    fig, axes = plt.subplots(1 + len(decisions), 1, sharex=True, figsize=(8, 2.2 * (1 + len(decisions))))
    axes = np.atleast_1d(axes)
    axes[0].pcolormesh(t, f[keep], 10 * np.log10(sxx[keep] + 1e-12), shading="auto")
    axes[0].set_ylabel("Hz")
    for ax, dec in zip(axes[1:], decisions):
        ax.plot(dec.chunk_starts_s, dec.chunk_scores, marker="o")
        ax.axhline(dec.threshold, color="k", linestyle="--", linewidth=0.8)
        ax.set_ylim(0, 1)
        ax.set_ylabel(dec.detector)
        ax.set_title(f"{dec.detector}: mean {dec.mean_score:.3f}, {dec.verdict}", fontsize=9)
    axes[-1].set_xlabel("time (s)")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
