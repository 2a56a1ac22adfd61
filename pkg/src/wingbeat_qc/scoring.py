"""Clip pipeline: audio -> chunks -> embeddings -> per-chunk scores -> verdict.

Per-chunk scores are continuous anomaly values in [0, 1], averaged over the
clip; a clip is contaminated when that mean is strictly above the threshold.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .audio_io import MonoClip, load_mono, resample, segment
from .config import Paths, RunConfig
from .errors import ConfigError, DataContractError, WingbeatError
from .evaluation import DatasetManifest
from .features import FeatureMatrix, SpectralEmbedding
from .iforest import IsolationForest
from .ocsvm import OneClassSVM

log = logging.getLogger(__name__)

DETECTOR_NAMES = ("iforest", "ocsvm")
BUNDLE_FORMAT = "wingbeat_qc.detectors"
BUNDLE_VERSION = 1


@dataclass(frozen=True)
class ClipDecision:
    clip_id: str
    detector: str
    chunk_scores: tuple[float, ...]
    chunk_starts_s: tuple[float, ...]
    threshold: float = 0.5

    def __post_init__(self):
        if self.detector not in DETECTOR_NAMES:
            raise ConfigError(f"unknown detector {self.detector!r}")
        if len(self.chunk_scores) != len(self.chunk_starts_s):
            raise DataContractError("need one start time per chunk score")
        if not self.chunk_scores:
            raise DataContractError(f"{self.clip_id}: a decision needs at least one chunk score")

    @property
    def mean_score(self) -> float:
        return math.fsum(self.chunk_scores) / len(self.chunk_scores)

    @property
    def verdict(self) -> str:
        return "contaminated" if self.mean_score > self.threshold else "clean"

    def to_dict(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "detector": self.detector,
            "chunk_scores": list(self.chunk_scores),
            "chunk_starts_s": list(self.chunk_starts_s),
            "threshold": self.threshold,
            "mean_score": self.mean_score,
            "verdict": self.verdict,
        }


@dataclass
class TrainedDetectors:
    """Both detectors, fitted on one feature matrix, plus how they were made."""

    iforest: IsolationForest
    ocsvm: OneClassSVM
    config: RunConfig
    provenance: dict = field(default_factory=dict)

    def detector(self, name: str):
        if name not in DETECTOR_NAMES:
            raise ConfigError(f"unknown detector {name!r}")
        return getattr(self, name)

    def check_features(self, features: FeatureMatrix) -> None:
        """Refuse rows made by a different extractor or extractor config."""
        trained = self.provenance.get("feature_metadata", {})
        for key in ("extractor_id", "config_hash"):
            want, got = trained.get(key), features.metadata.get(key)
            if want is not None and got is not None and want != got:
                raise DataContractError(f"features have {key}={got!r}, models were trained on {want!r}")

    def chunk_scores(self, features: FeatureMatrix, name: str) -> np.ndarray:
        self.check_features(features)
        model = self.detector(name)
        return model.score(features) if name == "iforest" else model.anomaly_score(features)

    def save(self, models_dir: str | Path) -> None:
        models_dir = Path(models_dir)
        models_dir.mkdir(parents=True, exist_ok=True)
        self.iforest.save(models_dir / "iforest.json")
        self.ocsvm.save(models_dir / "ocsvm.json")
        bundle = {
            "format": BUNDLE_FORMAT,
            "version": BUNDLE_VERSION,
            # paths describe one run, not the model
            "config": replace(self.config, paths=Paths()).to_dict(),
            "provenance": self.provenance,
        }
        (models_dir / "detectors.json").write_text(json.dumps(bundle, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, models_dir: str | Path) -> "TrainedDetectors":
        models_dir = Path(models_dir)
        bundle = json.loads((models_dir / "detectors.json").read_text(encoding="utf-8"))
        if bundle.get("format") != BUNDLE_FORMAT or bundle.get("version") != BUNDLE_VERSION:
            raise DataContractError(f"{models_dir}: not a version-{BUNDLE_VERSION} detector bundle")
        return cls(
            IsolationForest.load(models_dir / "iforest.json"),
            OneClassSVM.load(models_dir / "ocsvm.json"),
            RunConfig.from_dict(bundle["config"]),
            bundle["provenance"],
        )


# --------------------------------------------------------------------------
# features

def clip_features(clip: MonoClip, cfg: RunConfig, *, training: bool = False, clip_id: str = "") -> FeatureMatrix:
    """Embed a clip: overlapping windows for scoring, or the first few
    non-overlapping windows for training."""
    clip = resample(clip, cfg.analysis_rate)
    if training:
        chunks = segment(clip, cfg.training_segmentation)[: cfg.train_chunks_per_clip]
    else:
        chunks = segment(clip, cfg.scoring_segmentation)
    return SpectralEmbedding(cfg.spectral).embed_chunks(chunks, clip_id)


def _stack(matrices: list[FeatureMatrix], metadata: dict) -> FeatureMatrix:
    return FeatureMatrix(
        np.vstack([m.values for m in matrices]),
        [c for m in matrices for c in m.clip_ids],
        [i for m in matrices for i in m.chunk_indices],
        dict(metadata),
    )


def manifest_hash(manifest: DatasetManifest) -> str:
    blob = json.dumps(manifest.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# --------------------------------------------------------------------------
# training

def fit_detectors(features: FeatureMatrix, cfg: RunConfig, provenance: dict | None = None) -> TrainedDetectors:
    """Fit both detectors on the same matrix.

    If ``nu * l < 1`` the dual is infeasible; nu is raised to ``1 / l`` with a
    warning and the adjustment is recorded in the provenance.
    """
    provenance = dict(provenance or {})
    n = len(features)
    if n == 0:
        raise DataContractError("no training rows")
    nu = cfg.ocsvm.nu
    if nu * n < 1:
        log.warning("ocsvm nu=%g is infeasible for %d rows; using nu=1/%d", nu, n, n)
        provenance["nu_adjusted_from"] = nu
        nu = 1.0 / n
    p = cfg.iforest
    forest = IsolationForest(p.n_trees, p.subsample_size, p.seed, p.contamination).fit(features)
    o = cfg.ocsvm
    svm = OneClassSVM(nu, o.gamma, o.tolerance, o.max_iter).fit(features)
    provenance.update(n_rows=n, feature_metadata=features.metadata, ocsvm=svm.nu_property())
    return TrainedDetectors(forest, svm, cfg, provenance)


def training_matrix(manifest: DatasetManifest, cfg: RunConfig) -> FeatureMatrix:
    train = manifest.by_role("train")
    if not train:
        raise DataContractError("manifest has no training clips")
    bad = [e.clip_id for e in train if e.container_class != "male"]
    if bad:
        raise DataContractError(f"training clips must be male-only; found {bad}")
    parts = [
        clip_features(load_mono(manifest.resolve(e), cfg.analysis_rate), cfg, training=True, clip_id=e.clip_id)
        for e in train
    ]
    return _stack(parts, SpectralEmbedding(cfg.spectral).metadata)


def train_from_manifest(manifest: DatasetManifest, cfg: RunConfig | None = None) -> TrainedDetectors:
    cfg = cfg or RunConfig()
    features = training_matrix(manifest, cfg)
    provenance = {
        "manifest_hash": manifest_hash(manifest),
        "training_clips": [e.clip_id for e in manifest.by_role("train")],
    }
    return fit_detectors(features, cfg, provenance)


# --------------------------------------------------------------------------
# scoring

def _which(which: str) -> tuple[str, ...]:
    if which == "both":
        return DETECTOR_NAMES
    if which not in DETECTOR_NAMES:
        raise ConfigError(f"detector must be iforest, ocsvm or both, got {which!r}")
    return (which,)


def decide(detectors: TrainedDetectors, features: FeatureMatrix, which: str = "both",
           clip_id: str = "", threshold: float | None = None) -> list[ClipDecision]:
    """Decisions for one clip's feature rows, one per requested detector."""
    threshold = detectors.config.threshold if threshold is None else threshold
    hop = detectors.config.hop_s
    starts = tuple(i * hop for i in features.chunk_indices)
    return [
        ClipDecision(clip_id, name, tuple(float(s) for s in detectors.chunk_scores(features, name)), starts, threshold)
        for name in _which(which)
    ]


def score_clip(detectors: TrainedDetectors, clip: MonoClip, which: str = "iforest",
               clip_id: str = "", threshold: float | None = None) -> ClipDecision:
    if which == "both":
        raise ConfigError("score_clip scores with one detector; use score_clip_all for both")
    return score_clip_all(detectors, clip, which, clip_id, threshold)[0]


def score_clip_all(detectors: TrainedDetectors, clip: MonoClip, which: str = "both",
                   clip_id: str = "", threshold: float | None = None) -> list[ClipDecision]:
    features = clip_features(clip, detectors.config, clip_id=clip_id)
    return decide(detectors, features, which, clip_id, threshold)


@dataclass(frozen=True)
class ScoreFailure:
    clip_id: str
    error: str


class BatchDecisions(list):
    """A list of ClipDecision plus the clips that could not be scored."""

    def __init__(self, decisions=(), failures=()):
        super().__init__(decisions)
        self.failures: list[ScoreFailure] = list(failures)


def score_manifest(detectors: TrainedDetectors, manifest: DatasetManifest, which: str = "both",
                   threshold: float | None = None) -> BatchDecisions:
    """Score every test clip in manifest order; unreadable clips are collected, not raised."""
    out = BatchDecisions()
    for entry in manifest.by_role("test"):
        try:
            clip = load_mono(manifest.resolve(entry), detectors.config.analysis_rate)
            out.extend(score_clip_all(detectors, clip, which, entry.clip_id, threshold))
        except (WingbeatError, OSError) as exc:
            log.error("%s: %s", entry.clip_id, exc)
            out.failures.append(ScoreFailure(entry.clip_id, f"{type(exc).__name__}: {exc}"))
    return out


# --------------------------------------------------------------------------
# one model per recording day

def train_per_day(manifest: DatasetManifest, cfg: RunConfig | None = None) -> dict[int, TrainedDetectors]:
    """Each day gets detectors trained on that day's male training clips only."""
    return {day: train_from_manifest(manifest.for_day(day), cfg) for day in manifest.days}


def save_models(models: dict[int, TrainedDetectors], models_dir: str | Path) -> None:
    for day, det in models.items():
        det.save(Path(models_dir) / f"day{day}")


def load_models(models_dir: str | Path) -> dict[int | None, TrainedDetectors]:
    """Per-day bundles from ``day*/`` subdirectories, or a single bundle keyed ``None``."""
    models_dir = Path(models_dir)
    if (models_dir / "detectors.json").is_file():
        return {None: TrainedDetectors.load(models_dir)}
    found = {}
    for sub in sorted(models_dir.glob("day*")):
        if (sub / "detectors.json").is_file() and sub.name[3:].isdigit():
            found[int(sub.name[3:])] = TrainedDetectors.load(sub)
    if not found:
        raise FileNotFoundError(f"no detector bundles under {models_dir}")
    return found


def score_dataset(models: dict[int | None, TrainedDetectors], manifest: DatasetManifest, which: str = "both",
                  threshold: float | None = None) -> BatchDecisions:
    """Score each day's test clips with that day's models (or the single shared bundle)."""
    out = BatchDecisions()
    for day in manifest.days:
        det = models.get(day, models.get(None))
        if det is None:
            raise DataContractError(f"no models for day {day}")
        batch = score_manifest(det, manifest.for_day(day), which, threshold)
        out.extend(batch)
        out.failures.extend(batch.failures)
    return out


# --------------------------------------------------------------------------
# export

def write_decisions_csv(decisions, path: str | Path, form: str = "long") -> None:
    """``long``: one row per chunk; ``summary``: one row per clip and detector."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if form == "long":
            w.writerow(["clip_id", "detector", "chunk_start_s", "chunk_score"])
            for d in decisions:
                for start, score in zip(d.chunk_starts_s, d.chunk_scores):
                    w.writerow([d.clip_id, d.detector, repr(start), repr(score)])
        elif form == "summary":
            w.writerow(["clip_id", "detector", "mean", "verdict"])
            for d in decisions:
                w.writerow([d.clip_id, d.detector, repr(d.mean_score), d.verdict])
        else:
            raise ValueError(f"unknown form {form!r}")


def decisions_to_json(decisions) -> str:
    return json.dumps([d.to_dict() for d in decisions], indent=1) + "\n"
