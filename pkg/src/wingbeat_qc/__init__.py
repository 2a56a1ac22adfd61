"""Acoustic detection of female contamination in male-only insect release containers."""

from .audio_io import AudioClip, MonoClip, SegmentationConfig, load_mono, read_wav, resample, segment, write_wav
from .config import RunConfig
from .evaluation import AccuracyTable, DatasetManifest, ManifestEntry, evaluate, expected_verdict, render_report
from .features import FeatureMatrix, SpectralEmbedConfig, SpectralEmbedding
from .iforest import IsolationForest
from .ocsvm import OneClassSVM
from .scoring import ClipDecision, TrainedDetectors, score_clip, score_manifest, train_from_manifest
from .synth import WingbeatSpec, generate_clip, generate_dataset

__version__ = "0.1.0"

__all__ = [
    "AccuracyTable", "AudioClip", "ClipDecision", "DatasetManifest", "FeatureMatrix", "IsolationForest",
    "ManifestEntry", "MonoClip", "OneClassSVM", "RunConfig", "SegmentationConfig", "SpectralEmbedConfig",
    "SpectralEmbedding", "TrainedDetectors", "WingbeatSpec", "evaluate", "expected_verdict", "generate_clip",
    "generate_dataset", "load_mono", "read_wav", "render_report", "resample", "score_clip", "score_manifest",
    "segment", "train_from_manifest", "write_wav",
]
