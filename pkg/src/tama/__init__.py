"""Time series anomaly analysis via multimodal-model prompting.

Subpackages cover the whole flow: ingest or synthesize labeled series,
normalize and segment them, render window plots, drive a chat-completion
backend (live, record/replay, or offline oracle) through the three prompt
stages, parse the structured detections, aggregate them into pointwise
confidence/class sequences, and score the result with point-adjusted and
threshold-agnostic metrics.
"""

__version__ = "0.1.0"

from .core import (
    AnomalyInterval,
    AnomalyType,
    Detection,
    LabelSeries,
    TimeSeries,
)

__all__ = [
    "AnomalyInterval",
    "AnomalyType",
    "Detection",
    "LabelSeries",
    "TimeSeries",
    "__version__",
]
