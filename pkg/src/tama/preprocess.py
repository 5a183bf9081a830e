"""Mean-variance normalization and overlapped sliding-window segmentation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import TimeSeries


@dataclass(frozen=True)
class WindowPlan:
    """Segmentation layout: window width, stride, and all window starts."""

    width: int
    stride: int
    starts: tuple[int, ...]

    @property
    def overlap_ratio(self) -> float:
        return self.stride / self.width

    def __len__(self) -> int:
        return len(self.starts)


@dataclass(frozen=True)
class Window:
    """One slice of the normalized series.

    `values` has length equal to the plan width; `start` is the global index
    of its first element.
    """

    index: int
    start: int
    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)


def normalize(x: TimeSeries) -> TimeSeries:
    """Mean-variance normalize using the population standard deviation.

    A constant series (sigma == 0) maps to all zeros.
    """
    values = x.values
    if np.all(values == values[0]):
        return TimeSeries(
            np.zeros_like(values), name=x.name, period_hint=x.period_hint
        )
    centered = values - np.mean(values)
    # second centering pass kills the rounding residue when the mean is
    # huge relative to the spread
    centered = centered - np.mean(centered)
    sigma = float(np.std(centered))
    if sigma == 0.0:
        out = np.zeros_like(values)
    else:
        out = centered / sigma
    return TimeSeries(out, name=x.name, period_hint=x.period_hint)


def make_windows(x: TimeSeries, width: int, stride: int) -> tuple[WindowPlan, list[Window]]:
    """Segment a series into overlapped windows covering every index.

    Starts advance by `stride` from 0 while a full window fits; if the tail
    would otherwise be uncovered, a final window anchored at T - width is
    appended. Requires 1 <= stride < width <= T (overlap ratio < 1).
    """
    t = len(x)
    if stride <= 0:
        raise ValueError(f"stride must be positive, got {stride}")
    if stride >= width:
        raise ValueError(
            f"stride {stride} must be smaller than width {width} (overlap ratio < 1)"
        )
    if width > t:
        raise ValueError(f"window width {width} exceeds series length {t}")

    starts = list(range(0, t - width + 1, stride))
    if starts[-1] < t - width:
        starts.append(t - width)
    plan = WindowPlan(width=width, stride=stride, starts=tuple(starts))
    windows = [
        Window(index=k, start=s, values=x.values[s : s + width])
        for k, s in enumerate(starts)
    ]
    return plan, windows
