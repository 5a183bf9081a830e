"""Aggregation of window-local detections into pointwise sequences.

Detections are shifted to global indices, their confidences summed per
point, classes decided by a confidence-weighted vote, and the final anomaly
set obtained by thresholding the confidence sequence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import AnomalyType, Detection
from .pipeline import WindowAnalysis
from .preprocess import WindowPlan

_TYPE_ORDER = tuple(AnomalyType)  # vote tie-break order


def to_global(d: Detection, window_start: int, series_length: int) -> Detection:
    """Shift a window-local detection to global indices, clamped to the series."""
    start = min(max(d.interval.start + window_start, 0), series_length - 1)
    end = min(max(d.interval.end + window_start, 0), series_length - 1)
    return Detection(
        interval=type(d.interval)(start, end),
        confidence=d.confidence,
        kind=d.kind,
        explanation=d.explanation,
    )


def accumulate(
    analyses: list[WindowAnalysis],
    plan: WindowPlan,
    series_length: int,
    weight_by_confidence: bool = True,
) -> tuple[np.ndarray, list[AnomalyType | None]]:
    """Build the pointwise confidence and class sequences.

    Confidence at t is the sum of confidences of every globalized detection
    interval containing t. The class at t is the type with the greatest
    summed weight among covering detections (weights are confidences, or 1
    each when weight_by_confidence is false); ties break in the fixed order
    point < shapelet < seasonal < trend. Points with zero confidence have no
    class.
    """
    confidence = np.zeros(series_length, dtype=np.int64)
    votes = np.zeros((len(_TYPE_ORDER), series_length), dtype=np.int64)

    for analysis in analyses:
        window_start = plan.starts[analysis.window_index]
        for d in analysis.detections:
            g = to_global(d, window_start, series_length)
            s, e = g.interval.start, g.interval.end
            confidence[s : e + 1] += g.confidence
            weight = g.confidence if weight_by_confidence else 1
            votes[_TYPE_ORDER.index(g.kind), s : e + 1] += weight

    winner = np.argmax(votes, axis=0)  # argmax takes the first max: tie-break order
    classes: list[AnomalyType | None] = [
        _TYPE_ORDER[winner[t]] if confidence[t] > 0 else None
        for t in range(series_length)
    ]
    return confidence, classes


def threshold(confidence: np.ndarray, c0: float) -> set[int]:
    """Indices whose accumulated confidence reaches the threshold."""
    return {int(i) for i in np.flatnonzero(confidence >= c0)}


@dataclass(frozen=True)
class FinalResult:
    """Aggregated outcome for one series, with per-detection provenance."""

    series_name: str
    series_length: int
    threshold: float
    anomaly_points: frozenset[int]
    confidence: np.ndarray
    classes: tuple[AnomalyType | None, ...]
    provenance: tuple[dict, ...]


def build_final_result(
    analyses: list[WindowAnalysis],
    plan: WindowPlan,
    series_name: str,
    series_length: int,
    c0: float = 1.0,
    weight_by_confidence: bool = True,
) -> FinalResult:
    confidence, classes = accumulate(
        analyses, plan, series_length, weight_by_confidence=weight_by_confidence
    )
    provenance = []
    for analysis in analyses:
        window_start = plan.starts[analysis.window_index]
        for d in analysis.detections:
            g = to_global(d, window_start, series_length)
            provenance.append(
                {
                    "window": analysis.window_index,
                    "local_interval": [d.interval.start, d.interval.end],
                    "global_interval": [g.interval.start, g.interval.end],
                    "confidence": d.confidence,
                    "type": d.kind.value,
                    "explanation": d.explanation or "",
                }
            )
    return FinalResult(
        series_name=series_name,
        series_length=series_length,
        threshold=c0,
        anomaly_points=frozenset(threshold(confidence, c0)),
        confidence=confidence,
        classes=tuple(classes),
        provenance=tuple(provenance),
    )


def _run_length_encode(values: list) -> list[list]:
    runs: list[list] = []
    for v in values:
        if runs and runs[-1][0] == v:
            runs[-1][1] += 1
        else:
            runs.append([v, 1])
    return runs


def result_to_json(result: FinalResult) -> str:
    """Serialize a FinalResult deterministically (sequences run-length encoded)."""
    doc = {
        "schema_version": 1,
        "series": result.series_name,
        "length": result.series_length,
        "threshold": result.threshold,
        "anomaly_points": sorted(result.anomaly_points),
        "confidence_rle": _run_length_encode([int(v) for v in result.confidence]),
        "class_rle": _run_length_encode(
            [c.value if c is not None else None for c in result.classes]
        ),
        "detections": list(result.provenance),
    }
    return json.dumps(doc, sort_keys=True, indent=2)


def result_from_json(text: str) -> FinalResult:
    doc = json.loads(text)
    confidence = np.array(
        [v for value, count in doc["confidence_rle"] for v in [value] * count],
        dtype=np.int64,
    )
    classes = tuple(
        AnomalyType(value) if value is not None else None
        for value, count in doc["class_rle"]
        for _ in range(count)
    )
    return FinalResult(
        series_name=doc["series"],
        series_length=doc["length"],
        threshold=doc["threshold"],
        anomaly_points=frozenset(doc["anomaly_points"]),
        confidence=confidence,
        classes=classes,
        provenance=tuple(doc["detections"]),
    )
