"""
Per-chunk score traces
======================

Train on a handful of male recordings, then score one mixed container and
plot its spectrogram above both detectors' chunk scores.

    python demos/score_trace.py --out trace.png
"""

import argparse
from dataclasses import replace

from wingbeat_qc.audio_io import resample, to_mono
from wingbeat_qc.config import RunConfig
from wingbeat_qc.features import SpectralEmbedding
from wingbeat_qc.plots import plot_score_trace
from wingbeat_qc.scoring import _stack, clip_features, fit_detectors, score_clip_all
from wingbeat_qc.synth import WingbeatSpec, generate_clip

ap = argparse.ArgumentParser()
ap.add_argument("--out", default="trace.png")
ap.add_argument("--train-clips", type=int, default=8)
args = ap.parse_args()

cfg = RunConfig()
base = WingbeatSpec()


def mono(spec):
    return resample(to_mono(generate_clip(spec)), cfg.analysis_rate)


train = [clip_features(mono(replace(base, seed=100 + k)), cfg, training=True, clip_id=f"male-{k}")
         for k in range(args.train_clips)]
detectors = fit_detectors(_stack(train, SpectralEmbedding(cfg.spectral).metadata), cfg)
print("trained on", detectors.provenance["n_rows"], "rows")

clip = mono(replace(base, container_class="mixed_25_75", seed=7))
decisions = score_clip_all(detectors, clip, clip_id="mixed-7")
for d in decisions:
    print(f"{d.detector:8s} mean {d.mean_score:.3f} -> {d.verdict}")

plot_score_trace(clip, decisions, args.out)
print("wrote", args.out)
