"""``wingbeat-qc`` command line: synth, train, score, evaluate.

Exit codes: 0 ok, 2 configuration, 3 I/O, 4 data contract, 5 convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .audio_io import load_mono
from .config import RunConfig
from .errors import ConfigError, WavError, WingbeatError
from .evaluation import DatasetManifest, evaluate, render_report
from .scoring import (
    load_models,
    score_clip_all,
    score_dataset,
    train_per_day,
    save_models,
    write_decisions_csv,
)
from .synth import DatasetLayout, generate_dataset

log = logging.getLogger("wingbeat_qc")

EXIT_OK = 0
EXIT_IO = WavError.exit_code


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON run configuration (flags override it)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wingbeat-qc", description="Audio QC for male-only insect release containers.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic dataset and its manifest")
    _common(p)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--days", type=int, nargs="+", help="days since sexing (default 6 7 8 9)")
    p.add_argument("--clips-per-session", type=int, help="clips per container per session (default 8)")
    p.add_argument("--duration", type=float, help="clip length in seconds (default 30)")

    p = sub.add_parser("train", help="fit both detectors on each day's male training clips")
    _common(p)
    p.add_argument("--manifest", type=Path)
    p.add_argument("--models-dir", type=Path)
    p.add_argument("--seed", type=int, help="isolation forest seed")

    p = sub.add_parser("score", help="score one WAV file")
    _common(p)
    p.add_argument("wav", type=Path)
    p.add_argument("--models-dir", type=Path)
    p.add_argument("--day", type=int, help="which day's models, when the models directory holds several")
    p.add_argument("--detector", choices=["iforest", "ocsvm", "both"], default="both")
    p.add_argument("--threshold", type=float)
    p.add_argument("--trace-csv", type=Path, help="write per-chunk scores here")
    p.add_argument("--plot", type=Path, help="write spectrogram and score traces here (png, pdf, svg)")

    p = sub.add_parser("evaluate", help="score every test clip and write accuracy tables")
    _common(p)
    p.add_argument("--manifest", type=Path)
    p.add_argument("--models-dir", type=Path)
    p.add_argument("--detector", choices=["iforest", "ocsvm", "both"], default="both")
    p.add_argument("--threshold", type=float)
    p.add_argument("--out", type=Path, help="report directory")
    return parser


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    return cfg.with_overrides(**{
        "threshold": getattr(args, "threshold", None),
        "iforest.seed": getattr(args, "seed", None) if args.command == "train" else None,
        "paths.manifest": _str(getattr(args, "manifest", None)),
        "paths.models_dir": _str(getattr(args, "models_dir", None)),
        "paths.out": _str(getattr(args, "out", None)),
    })


def _str(p):
    return None if p is None else str(p)


def _need(value, flag):
    if value is None:
        raise ConfigError(f"{flag} is required (on the command line or in the config paths)")
    return Path(value)


def cmd_synth(args, cfg: RunConfig) -> int:
    layout = DatasetLayout()
    overrides = {k: v for k, v in (
        ("days", tuple(args.days) if args.days else None),
        ("clips_per_session", args.clips_per_session),
        ("duration_s", args.duration),
    ) if v is not None}
    layout = DatasetLayout(**{**layout.__dict__, **overrides})
    manifest = generate_dataset(layout, args.out, seed=args.seed)
    print(f"wrote {len(manifest)} clips to {args.out}")
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    manifest = DatasetManifest.load(_need(cfg.paths.manifest, "--manifest"))
    models_dir = _need(cfg.paths.models_dir, "--models-dir")
    models = train_per_day(manifest, cfg)
    save_models(models, models_dir)
    report = {f"day{day}": det.provenance for day, det in models.items()}
    (models_dir / "training_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    for day, det in models.items():
        p = det.provenance["ocsvm"]
        print(f"day {day}: {det.provenance['n_rows']} rows; ocsvm outliers {p['outlier_fraction']:.3f}, "
              f"support vectors {p['sv_fraction']:.3f} (nu={p['nu']:.4g})")
    return EXIT_OK


def cmd_score(args, cfg: RunConfig) -> int:
    models = load_models(_need(cfg.paths.models_dir, "--models-dir"))
    if args.day is not None:
        if args.day not in models:
            raise ConfigError(f"no models for day {args.day}; have {sorted(k for k in models if k is not None)}")
        det = models[args.day]
    elif len(models) == 1:
        det = next(iter(models.values()))
    else:
        raise ConfigError(f"models directory holds days {sorted(models)}; pick one with --day")
    clip = load_mono(args.wav, det.config.analysis_rate)
    threshold = args.threshold if args.threshold is not None else cfg.threshold
    decisions = score_clip_all(det, clip, args.detector, args.wav.stem, threshold)
    for d in decisions:
        print(f"{d.detector}: {d.verdict} (mean {d.mean_score:.4f}, threshold {d.threshold:g}, {len(d.chunk_scores)} chunks)")
    if args.trace_csv:
        write_decisions_csv(decisions, args.trace_csv, "long")
    if args.plot:
        from .plots import plot_score_trace

        plot_score_trace(clip, decisions, args.plot)
    return EXIT_OK


def cmd_evaluate(args, cfg: RunConfig) -> int:
    manifest = DatasetManifest.load(_need(cfg.paths.manifest, "--manifest"))
    models = load_models(_need(cfg.paths.models_dir, "--models-dir"))
    decisions = score_dataset(models, manifest, args.detector, cfg.threshold)
    table = evaluate(decisions, manifest)
    text = render_report(table, "text")
    print(text, end="")
    for f in decisions.failures:
        print(f"failed: {f.clip_id}: {f.error}", file=sys.stderr)
    if cfg.paths.out:
        out = Path(cfg.paths.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(text, encoding="utf-8")
        (out / "report.csv").write_text(render_report(table, "csv"), encoding="utf-8")
        write_decisions_csv(decisions, out / "decisions_long.csv", "long")
        write_decisions_csv(decisions, out / "decisions_summary.csv", "summary")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "score": cmd_score, "evaluate": cmd_evaluate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except WingbeatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
