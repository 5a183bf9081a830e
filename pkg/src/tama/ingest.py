"""Dataset loading: text series files, channel splitting, and labels.

Files are UTF-8 text with one row per line; comma or whitespace delimiters
are auto-detected per file. No dataset-specific loaders: a manifest adapts
any on-disk layout.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import AnomalyType, LabelSeries, TimeSeries


class IngestError(Exception):
    """Raised for unreadable, malformed, or inconsistent dataset files."""


def _read_rows(path: Path) -> list[list[str]]:
    if not path.exists():
        raise IngestError(f"no such file: {path}")
    text = path.read_text(encoding="utf-8")
    rows: list[list[str]] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "," in line:
            rows.append([c.strip() for c in line.split(",")])
        else:
            rows.append(line.split())
    if not rows:
        raise IngestError(f"empty file: {path}")
    return rows


def _parse_cell(token: str, path: Path, lineno: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise IngestError(
            f"{path}: non-numeric value {token!r} at line {lineno}"
        ) from None
    if not np.isfinite(value):
        raise IngestError(f"{path}: non-finite value at line {lineno}")
    return value


def load_series(path: str | Path, column: int | None = None) -> TimeSeries:
    """Load one univariate series, optionally selecting a column."""
    path = Path(path)
    rows = _read_rows(path)
    col = 0 if column is None else column
    values = []
    for lineno, row in enumerate(rows, start=1):
        if col >= len(row):
            raise IngestError(
                f"{path}: line {lineno} has {len(row)} column(s), need column {col}"
            )
        values.append(_parse_cell(row[col], path, lineno))
    return TimeSeries(np.array(values), name=path.stem)


def split_channels(path: str | Path) -> list[TimeSeries]:
    """Split a multivariate file into per-column univariate series."""
    path = Path(path)
    rows = _read_rows(path)
    width = len(rows[0])
    matrix = np.empty((len(rows), width), dtype=np.float64)
    for lineno, row in enumerate(rows, start=1):
        if len(row) != width:
            raise IngestError(
                f"{path}: ragged row at line {lineno} "
                f"({len(row)} columns, expected {width})"
            )
        for c, token in enumerate(row):
            matrix[lineno - 1, c] = _parse_cell(token, path, lineno)
    return [
        TimeSeries(matrix[:, c], name=f"{path.name}:{c}") for c in range(width)
    ]


def load_labels(path: str | Path, length: int) -> LabelSeries:
    """Load labels as per-point 0/1 flags or inclusive "start end" intervals."""
    path = Path(path)
    rows = _read_rows(path)
    widths = {len(r) for r in rows}
    if widths == {1}:
        if len(rows) != length:
            raise IngestError(
                f"{path}: {len(rows)} flags but series has {length} points"
            )
        flags = np.zeros(length, dtype=bool)
        for lineno, row in enumerate(rows, start=1):
            token = row[0]
            if token not in ("0", "1"):
                raise IngestError(f"{path}: flag must be 0 or 1 at line {lineno}")
            flags[lineno - 1] = token == "1"
        return LabelSeries(flags)
    if widths == {2}:
        flags = np.zeros(length, dtype=bool)
        for lineno, row in enumerate(rows, start=1):
            try:
                start, end = int(row[0]), int(row[1])
            except ValueError:
                raise IngestError(
                    f"{path}: malformed interval at line {lineno}"
                ) from None
            if start < 0 or end >= length or start > end:
                raise IngestError(
                    f"{path}: interval ({start}, {end}) out of [0, {length - 1}] "
                    f"at line {lineno}"
                )
            flags[start : end + 1] = True
        return LabelSeries(flags)
    raise IngestError(f"{path}: mixed or unsupported label row widths {sorted(widths)}")


def load_type_map(path: str | Path, length: int) -> dict[int, AnomalyType]:
    """Load a per-point anomaly type map written as "index type" lines."""
    path = Path(path)
    rows = _read_rows(path)
    out: dict[int, AnomalyType] = {}
    for lineno, row in enumerate(rows, start=1):
        if len(row) != 2:
            raise IngestError(f"{path}: expected 'index type' at line {lineno}")
        try:
            idx = int(row[0])
            kind = AnomalyType(row[1].lower())
        except ValueError:
            raise IngestError(f"{path}: malformed type entry at line {lineno}") from None
        if idx < 0 or idx >= length:
            raise IngestError(f"{path}: index {idx} out of range at line {lineno}")
        out[idx] = kind
    return out


@dataclass(frozen=True)
class ManifestEntry:
    name: str
    series_path: Path
    label_path: Path | None = None
    type_path: Path | None = None
    column: int | None = None
    train_split: int | None = None
    period_hint: int | None = None


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]

    def __post_init__(self) -> None:
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise IngestError("manifest entry names must be unique")
        for entry in self.entries:
            if not entry.series_path.exists():
                raise IngestError(f"manifest series path missing: {entry.series_path}")
            for p in (entry.label_path, entry.type_path):
                if p is not None and not p.exists():
                    raise IngestError(f"manifest path missing: {p}")

    @classmethod
    def from_dict(cls, doc: dict, base_dir: Path) -> "DatasetManifest":
        entries = []
        for item in doc.get("entries", []):
            entries.append(
                ManifestEntry(
                    name=item["name"],
                    series_path=base_dir / item["series"],
                    label_path=base_dir / item["labels"] if "labels" in item else None,
                    type_path=base_dir / item["types"] if "types" in item else None,
                    column=item.get("column"),
                    train_split=item.get("train_split"),
                    period_hint=item.get("period_hint"),
                )
            )
        return cls(entries=tuple(entries))


def load_entry(entry: ManifestEntry) -> tuple[TimeSeries, LabelSeries | None]:
    """Load one manifest entry's series (and labels when present)."""
    series = load_series(entry.series_path, column=entry.column)
    series = TimeSeries(series.values, name=entry.name, period_hint=entry.period_hint)
    labels = None
    if entry.label_path is not None:
        labels = load_labels(entry.label_path, len(series))
    return series, labels
