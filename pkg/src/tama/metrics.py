"""Point-adjusted and threshold-agnostic evaluation.

Implements point adjustment with a relaxation threshold alpha (alpha = 0 is
full adjustment, alpha = 1 leaves predictions untouched), per-point
precision/recall/F1, trapezoidal AUC-PR and AUC-ROC over an exhaustive
threshold sweep, per-type F1, and the alpha sweep used for PAT curves.

F1 is the standard harmonic mean 2PR/(P+R).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import AnomalyInterval, AnomalyType, interval_length


def point_adjust(
    truth: list[AnomalyInterval], pred: set[int], alpha: float
) -> set[int]:
    """Point-adjusted prediction set.

    Each truth interval whose overlap with the predictions exceeds
    alpha * length is expanded to its full point set (for alpha = 0 any
    overlap at all qualifies). alpha = 1 returns the predictions unchanged.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    adjusted = set(pred)
    for iv in truth:
        overlap = sum(1 for t in range(iv.start, iv.end + 1) if t in pred)
        if overlap > alpha * interval_length(iv):
            adjusted.update(range(iv.start, iv.end + 1))
    return adjusted


def prf(
    truth: list[AnomalyInterval], pred: set[int], length: int
) -> tuple[float, float, float]:
    """Per-point precision, recall, F1 against rasterized truth intervals.

    Conventions: precision is 1 with no predictions, recall is 1 with no
    truth points, F1 is 0 when P + R == 0.
    """
    truth_points: set[int] = set()
    for iv in truth:
        truth_points.update(range(iv.start, iv.end + 1))
    tp = len(pred & truth_points)
    fp = len(pred - truth_points)
    fn = len(truth_points - pred)
    precision = tp / (tp + fp) if (tp + fp) > 0 else 1.0
    recall = tp / (tp + fn) if (tp + fn) > 0 else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def _sweep_predictions(scores: np.ndarray):
    """Yield prediction sets for every distinct score threshold, descending.

    The empty set (threshold above the maximum) is yielded first, so the
    sweep always includes the no-prediction endpoint.
    """
    yield set()
    for v in sorted(set(float(s) for s in scores), reverse=True):
        yield {int(i) for i in np.flatnonzero(scores >= v)}


def _trapezoid(xs: list[float], ys: list[float]) -> float:
    order = sorted(range(len(xs)), key=lambda i: xs[i])
    area = 0.0
    for a, b in zip(order, order[1:]):
        area += (xs[b] - xs[a]) * (ys[a] + ys[b]) / 2.0
    return area


def auc_pr(
    scores: np.ndarray,
    truth: list[AnomalyInterval],
    pa_alpha: float | None = None,
) -> float:
    """Trapezoidal area under the precision-recall curve of a full sweep.

    Every distinct score value acts as a threshold (prediction = points at
    or above it); pa_alpha, when given, point-adjusts each thresholded
    prediction before counting. The curve is anchored at (recall 0,
    precision 1).
    """
    scores = np.asarray(scores)
    recalls, precisions = [], []
    for pred in _sweep_predictions(scores):
        if pa_alpha is not None:
            pred = point_adjust(truth, pred, pa_alpha)
        p, r, _ = prf(truth, pred, len(scores))
        if not pred:
            p = 1.0  # anchor: empty prediction plotted at precision 1
            r = 0.0 if truth else r
        recalls.append(r)
        precisions.append(p)
    return _trapezoid(recalls, precisions)


def auc_roc(
    scores: np.ndarray,
    truth: list[AnomalyInterval],
    pa_alpha: float | None = None,
) -> float:
    """Trapezoidal area under the ROC curve of a full threshold sweep.

    Without point adjustment this equals the tie-averaged pairwise ranking
    statistic. Degenerate inputs (no positives or no negatives) return nan.
    """
    scores = np.asarray(scores)
    length = len(scores)
    truth_points: set[int] = set()
    for iv in truth:
        truth_points.update(range(iv.start, iv.end + 1))
    n_pos = len(truth_points)
    n_neg = length - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")

    fprs, tprs = [], []
    for pred in _sweep_predictions(scores):
        if pa_alpha is not None:
            pred = point_adjust(truth, pred, pa_alpha)
        tp = len(pred & truth_points)
        fp = len(pred) - tp
        fprs.append(fp / n_neg)
        tprs.append(tp / n_pos)
    return _trapezoid(fprs, tprs)


def per_type_f1(
    type_truth: dict[int, AnomalyType],
    pred_points: set[int],
    pred_classes: dict[int, AnomalyType],
) -> dict[AnomalyType, float]:
    """Unadjusted per-point F1 for each anomaly type.

    Types absent from both truth and prediction are omitted from the map.
    """
    out: dict[AnomalyType, float] = {}
    typed_pred = {t: pred_classes[t] for t in pred_points if t in pred_classes}
    for kind in AnomalyType:
        truth_t = {t for t, k in type_truth.items() if k is kind}
        pred_t = {t for t, k in typed_pred.items() if k is kind}
        if not truth_t and not pred_t:
            continue
        tp = len(truth_t & pred_t)
        fp = len(pred_t - truth_t)
        fn = len(truth_t - pred_t)
        p = tp / (tp + fp) if (tp + fp) > 0 else 1.0
        r = tp / (tp + fn) if (tp + fn) > 0 else 1.0
        out[kind] = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return out


@dataclass(frozen=True)
class PatPoint:
    alpha: float
    f1: float
    auc_pr: float


def pat_sweep(
    scores: np.ndarray,
    truth: list[AnomalyInterval],
    alphas: list[float],
    c0: float = 1.0,
) -> list[PatPoint]:
    """F1 (at the fixed threshold c0) and adjusted AUC-PR per alpha."""
    scores = np.asarray(scores)
    base_pred = {int(i) for i in np.flatnonzero(scores >= c0)}
    points = []
    for alpha in alphas:
        adjusted = point_adjust(truth, base_pred, alpha)
        _, _, f1 = prf(truth, adjusted, len(scores))
        points.append(PatPoint(alpha=alpha, f1=f1, auc_pr=auc_pr(scores, truth, alpha)))
    return points


@dataclass(frozen=True)
class EvalReport:
    """Evaluation summary for one series."""

    series_name: str
    alpha: float
    precision: float
    recall: float
    f1: float
    auc_pr_adjusted: float
    auc_roc_adjusted: float
    auc_pr_raw: float
    auc_roc_raw: float
    per_type_f1: dict[str, float] = field(default_factory=dict)
    pat_curve: tuple[PatPoint, ...] = ()


def evaluate(
    series_name: str,
    truth: list[AnomalyInterval],
    pred_points: set[int],
    scores: np.ndarray,
    length: int,
    alpha: float = 0.0,
    type_truth: dict[int, AnomalyType] | None = None,
    pred_classes: dict[int, AnomalyType] | None = None,
    alpha_grid: list[float] | None = None,
    c0: float = 1.0,
) -> EvalReport:
    """Full evaluation of one series: PA P/R/F1, both AUC modes, type F1, PAT."""
    adjusted = point_adjust(truth, pred_points, alpha)
    precision, recall, f1 = prf(truth, adjusted, length)
    type_scores: dict[str, float] = {}
    if type_truth is not None and pred_classes is not None:
        type_scores = {
            kind.value: score
            for kind, score in per_type_f1(type_truth, pred_points, pred_classes).items()
        }
    curve: tuple[PatPoint, ...] = ()
    if alpha_grid:
        curve = tuple(pat_sweep(scores, truth, alpha_grid, c0=c0))
    return EvalReport(
        series_name=series_name,
        alpha=alpha,
        precision=precision,
        recall=recall,
        f1=f1,
        auc_pr_adjusted=auc_pr(scores, truth, pa_alpha=0.0),
        auc_roc_adjusted=auc_roc(scores, truth, pa_alpha=0.0),
        auc_pr_raw=auc_pr(scores, truth, pa_alpha=None),
        auc_roc_raw=auc_roc(scores, truth, pa_alpha=None),
        per_type_f1=type_scores,
        pat_curve=curve,
    )


def report_to_dict(report: EvalReport) -> dict:
    return {
        "series": report.series_name,
        "alpha": report.alpha,
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
        "auc_pr_adjusted": report.auc_pr_adjusted,
        "auc_roc_adjusted": report.auc_roc_adjusted,
        "auc_pr_raw": report.auc_pr_raw,
        "auc_roc_raw": report.auc_roc_raw,
        "per_type_f1": dict(sorted(report.per_type_f1.items())),
        "pat_curve": [
            {"alpha": p.alpha, "f1": p.f1, "auc_pr": p.auc_pr} for p in report.pat_curve
        ],
    }


def report_to_json(report: EvalReport) -> str:
    return json.dumps(report_to_dict(report), sort_keys=True, indent=2)


def reports_to_table(reports: list[EvalReport]) -> str:
    """Aligned-column text table with mean / std / max aggregate rows."""
    headers = ["series", "f1", "precision", "recall", "auc_pr", "auc_roc"]
    rows = [
        [
            r.series_name,
            f"{r.f1:.4f}",
            f"{r.precision:.4f}",
            f"{r.recall:.4f}",
            f"{r.auc_pr_adjusted:.4f}",
            f"{r.auc_roc_adjusted:.4f}",
        ]
        for r in reports
    ]
    if reports:
        for label, fn in (("mean", np.mean), ("std", np.std), ("max", np.max)):
            rows.append(
                [label]
                + [
                    f"{fn([getattr(r, a) for r in reports]):.4f}"
                    for a in (
                        "f1",
                        "precision",
                        "recall",
                        "auc_pr_adjusted",
                        "auc_roc_adjusted",
                    )
                ]
            )
    widths = [
        max(len(h), *(len(row[i]) for row in rows)) if rows else len(h)
        for i, h in enumerate(headers)
    ]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    for row in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
    return "\n".join(lines) + "\n"


def pat_curves_to_csv(reports: list[EvalReport]) -> str:
    lines = ["series,alpha,f1,auc_pr"]
    for r in reports:
        for p in r.pat_curve:
            lines.append(f"{r.series_name},{p.alpha},{p.f1},{p.auc_pr}")
    return "\n".join(lines) + "\n"
