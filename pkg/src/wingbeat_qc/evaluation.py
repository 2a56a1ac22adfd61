"""Dataset manifests, ground truth, and per-day accuracy tables.

Accuracies are kept as integer (correct, total) pairs and only turned into
percentages when rendered, so tables are identical on every platform.
Rendered percentages are truncated (not rounded) to two decimals, which is
how 47/64 = 73.4375 % appears as 73.43.
"""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import DataContractError

CLASSES = ("male", "mixed_25_75", "female")
CLASS_HEADERS = {"male": "100% male", "mixed_25_75": "25% female 75% male", "female": "100% female"}
DETECTORS = ("ocsvm", "iforest")
DETECTOR_HEADERS = {"ocsvm": "OCSVM", "iforest": "iForest"}
ROLES = ("train", "test")
MANIFEST_FORMAT = "wingbeat_qc.manifest"
MANIFEST_VERSION = 1
REPORT_COLUMNS = ["day", "container_class", "detector", "correct", "total", "accuracy"]


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    clip_id: str
    container_class: str
    day_since_sexing: int
    session: int
    role: str

    def __post_init__(self):
        if self.container_class not in CLASSES:
            raise DataContractError(f"{self.clip_id}: unknown container class {self.container_class!r}")
        if self.role not in ROLES:
            raise DataContractError(f"{self.clip_id}: role must be train or test, got {self.role!r}")
        if self.session not in (1, 2):
            raise DataContractError(f"{self.clip_id}: session must be 1 or 2, got {self.session!r}")


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    base_dir: Path = field(default_factory=Path)

    def __post_init__(self):
        self.base_dir = Path(self.base_dir)
        dup = [k for k, n in Counter(e.clip_id for e in self.entries).items() if n > 1]
        if dup:
            raise DataContractError(f"duplicate clip ids in manifest: {sorted(dup)}")
        days = sorted({e.day_since_sexing for e in self.entries})
        if days and days != list(range(days[0], days[-1] + 1)):
            raise DataContractError(f"manifest days are not a contiguous range: {days}")

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def days(self) -> list[int]:
        return sorted({e.day_since_sexing for e in self.entries})

    def by_role(self, role: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.role == role]

    def for_day(self, day: int) -> "DatasetManifest":
        return DatasetManifest([e for e in self.entries if e.day_since_sexing == day], self.base_dir)

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        return p if p.is_absolute() else self.base_dir / p

    def lookup(self) -> dict[str, ManifestEntry]:
        return {e.clip_id: e for e in self.entries}

    def to_dict(self) -> dict:
        return {
            "format": MANIFEST_FORMAT,
            "version": MANIFEST_VERSION,
            "entries": [asdict(e) for e in self.entries],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataContractError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(doc, dict) or doc.get("format") != MANIFEST_FORMAT or doc.get("version") != MANIFEST_VERSION:
            raise DataContractError(f"{path}: not a version-{MANIFEST_VERSION} manifest")
        try:
            entries = [ManifestEntry(**e) for e in doc["entries"]]
        except TypeError as exc:
            raise DataContractError(f"{path}: bad manifest entry ({exc})") from None
        return cls(entries, base_dir=path.parent)


def expected_verdict(container_class: str) -> str:
    """Ground truth: any container holding females should be flagged."""
    if container_class not in CLASSES:
        raise DataContractError(f"unknown container class {container_class!r}")
    return "clean" if container_class == "male" else "contaminated"


# --------------------------------------------------------------------------
# accuracy

@dataclass
class AccuracyTable:
    """``counts[(day, container_class, detector)] = (correct, total)``."""

    counts: dict[tuple[int, str, str], tuple[int, int]] = field(default_factory=dict)
    excluded: list[str] = field(default_factory=list)

    @property
    def days(self) -> list[int]:
        return sorted({k[0] for k in self.counts})

    @property
    def detectors(self) -> list[str]:
        present = {k[2] for k in self.counts}
        return [d for d in DETECTORS if d in present]

    def cell(self, day: int, cls: str, detector: str) -> tuple[int, int] | None:
        return self.counts.get((day, cls, detector))

    def pooled(self, cls: str, detector: str) -> tuple[int, int] | None:
        """All-day accuracy pooled over clips (not the mean of daily percentages)."""
        cells = [v for (d, c, det), v in self.counts.items() if c == cls and det == detector]
        if not cells:
            return None
        return sum(c for c, _ in cells), sum(t for _, t in cells)

    def accuracy(self, day: int | None, cls: str, detector: str) -> float | None:
        ct = self.pooled(cls, detector) if day is None else self.cell(day, cls, detector)
        return None if ct is None else 100.0 * ct[0] / ct[1]

    def __eq__(self, other):
        return isinstance(other, AccuracyTable) and self.counts == other.counts


def evaluate(decisions, manifest: DatasetManifest) -> AccuracyTable:
    """Score each clip-level verdict against its container's ground truth.

    Test clips with no decision (e.g. unreadable files) are listed in
    ``excluded`` and left out of the denominators.
    """
    lookup = manifest.lookup()
    counts: dict[tuple[int, str, str], list[int]] = {}
    scored = set()
    for dec in decisions:
        entry = lookup.get(dec.clip_id)
        if entry is None:
            raise DataContractError(f"decision for {dec.clip_id!r} has no manifest entry")
        key = (entry.day_since_sexing, entry.container_class, dec.detector)
        cell = counts.setdefault(key, [0, 0])
        cell[0] += int(dec.verdict == expected_verdict(entry.container_class))
        cell[1] += 1
        scored.add(dec.clip_id)
    excluded = sorted(e.clip_id for e in manifest.by_role("test") if e.clip_id not in scored)
    return AccuracyTable({k: (v[0], v[1]) for k, v in counts.items()}, excluded)


# --------------------------------------------------------------------------
# rendering

def format_percent(correct: int, total: int) -> str:
    """Two-decimal percentage, truncated, computed in integers."""
    hundredths = (10000 * correct) // total
    whole, frac = divmod(hundredths, 100)
    if frac == 0:
        return str(whole)
    return f"{whole}.{frac:02d}".rstrip("0")


def ordinal(n: int) -> str:
    if 10 <= n % 100 <= 20:
        suffix = "th"
    else:
        suffix = {1: "st", 2: "nd", 3: "rd"}.get(n % 10, "th")
    return f"{n}{suffix}"


def _text_grid(table: AccuracyTable) -> str:
    detectors = table.detectors or list(DETECTORS)
    columns = [(c, d) for c in CLASSES for d in detectors]
    header = ["Day"] + [f"{CLASS_HEADERS[c]} {DETECTOR_HEADERS[d]}" for c, d in columns]
    rows = []
    for day in table.days:
        row = [ordinal(day)]
        for c, d in columns:
            ct = table.cell(day, c, d)
            row.append("-" if ct is None else format_percent(*ct))
        rows.append(row)
    if table.days:
        row = ["All"]
        for c, d in columns:
            ct = table.pooled(c, d)
            row.append("-" if ct is None else format_percent(*ct))
        rows.append(row)
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = [" | ".join(v.rjust(w) for v, w in zip(r, widths)) for r in [header] + rows]
    if table.excluded:
        lines.append("")
        lines.append("excluded (no decision): " + ", ".join(table.excluded))
    return "\n".join(lines) + "\n"


def _csv(table: AccuracyTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for day in table.days:
        for c in CLASSES:
            for d in DETECTORS:
                ct = table.cell(day, c, d)
                if ct is not None:
                    w.writerow([day, c, d, ct[0], ct[1], format_percent(*ct)])
    for c in CLASSES:
        for d in DETECTORS:
            ct = table.pooled(c, d)
            if ct is not None:
                w.writerow(["All", c, d, ct[0], ct[1], format_percent(*ct)])
    return buf.getvalue()


def render_report(table: AccuracyTable, fmt: str = "text") -> str:
    """Render as an aligned text grid (``"text"``) or long-form CSV (``"csv"``)."""
    if fmt == "text":
        return _text_grid(table)
    if fmt == "csv":
        return _csv(table)
    raise ValueError(f"unknown report format {fmt!r}")


def read_report_csv(text: str) -> AccuracyTable:
    """Inverse of ``render_report(table, "csv")``; the pooled rows are recomputed, not read."""
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != REPORT_COLUMNS:
        raise DataContractError(f"bad report header {reader.fieldnames}")
    counts = {}
    for row in reader:
        if row["day"] == "All":
            continue
        counts[(int(row["day"]), row["container_class"], row["detector"])] = (int(row["correct"]), int(row["total"]))
    return AccuracyTable(counts)
