"""Shared domain types and interval algebra.

Everything downstream (ingestion, windowing, parsing, aggregation, metrics)
works in terms of these value objects. All indices are 0-based and intervals
are inclusive on both ends.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class AnomalyType(enum.Enum):
    """Canonical four-type anomaly taxonomy.

    The declaration order doubles as the deterministic tie-break order used
    by the aggregation vote.
    """

    POINT = "point"
    SHAPELET = "shapelet"
    SEASONAL = "seasonal"
    TREND = "trend"

    def __lt__(self, other: "AnomalyType") -> bool:
        order = list(AnomalyType)
        return order.index(self) < order.index(other)


@dataclass(frozen=True)
class AnomalyInterval:
    """Inclusive index interval; start == end marks a point anomaly."""

    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start < 0:
            raise ValueError(f"interval start must be >= 0, got {self.start}")
        if self.end < self.start:
            raise ValueError(
                f"interval end must be >= start, got ({self.start}, {self.end})"
            )


@dataclass(frozen=True)
class TimeSeries:
    """Univariate series of finite values plus an optional period hint."""

    values: np.ndarray
    name: str = "series"
    period_hint: int | None = None

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("a time series needs a 1-d array of length >= 1")
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise ValueError(f"non-finite value at index {bad}")
        if self.period_hint is not None and self.period_hint <= 0:
            raise ValueError("period_hint must be positive")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class LabelSeries:
    """Per-point ground-truth anomaly flags paired with a TimeSeries."""

    flags: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.flags, dtype=bool)
        if arr.ndim != 1:
            raise ValueError("labels must be a 1-d boolean array")
        arr.setflags(write=False)
        object.__setattr__(self, "flags", arr)

    def __len__(self) -> int:
        return int(self.flags.size)


@dataclass(frozen=True)
class Detection:
    """One detected interval with its confidence, class, and free-text note."""

    interval: AnomalyInterval
    confidence: int
    kind: AnomalyType
    explanation: str | None = None

    def __post_init__(self) -> None:
        if self.confidence not in (1, 2, 3, 4):
            raise ValueError(f"confidence must be in 1..4, got {self.confidence}")


def interval_length(iv: AnomalyInterval) -> int:
    """Number of indices covered by the interval (>= 1)."""
    return iv.end - iv.start + 1


def interval_overlap(a: AnomalyInterval, b: AnomalyInterval) -> int:
    """Number of integer indices contained in both intervals."""
    lo = max(a.start, b.start)
    hi = min(a.end, b.end)
    return max(0, hi - lo + 1)


def labels_to_intervals(labels: LabelSeries) -> list[AnomalyInterval]:
    """Maximal runs of true flags as sorted, pairwise disjoint intervals."""
    flags = labels.flags
    if flags.size == 0:
        return []
    padded = np.concatenate(([False], flags, [False]))
    diff = np.diff(padded.astype(np.int8))
    starts = np.flatnonzero(diff == 1)
    ends = np.flatnonzero(diff == -1) - 1
    return [AnomalyInterval(int(s), int(e)) for s, e in zip(starts, ends)]


def intervals_to_labels(intervals: list[AnomalyInterval], length: int) -> LabelSeries:
    """Rasterize intervals back into per-point flags of the given length."""
    flags = np.zeros(length, dtype=bool)
    for iv in intervals:
        if iv.end >= length:
            raise ValueError(f"interval ({iv.start}, {iv.end}) exceeds length {length}")
        flags[iv.start : iv.end + 1] = True
    return LabelSeries(flags)
