"""Orchestration of the three-stage analysis over one series.

Stage 1 learns a normal-pattern summary from anomaly-free reference plots,
stage 2 analyzes every sliding window, and stage 3 re-presents detected
regions as zoomed plots so the model can correct itself. Window analyses
fan out across a thread pool; the result list is always ordered by window
index.
"""

from __future__ import annotations

import json
import random
import string
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .core import LabelSeries, TimeSeries
from .gateway import (
    WINDOW_METADATA_TEMPLATE,
    ChatRequest,
    ConfigurationError,
    GatewayError,
    ImagePart,
    OracleMetadataError,
    ReplayMissError,
    TextPart,
)
from .plotrender import PlotConfig, RenderedImage, render_window, render_zoom
from .preprocess import Window, WindowPlan, make_windows, normalize
from .respparse import (
    Diagnostic,
    ResponseFormatError,
    parse_analysis,
    serialize_detections,
)

SCHEMA_VERSION = 1


class PipelineError(Exception):
    pass


class ReferenceLearningError(PipelineError):
    """Stage 1 failed or returned an unusable summary."""


def _load_prompt(name: str) -> string.Template:
    text = resources.files("tama.prompts").joinpath(f"{name}.txt").read_text("utf-8")
    return string.Template(text)


_PROMPTS = {name: _load_prompt(name) for name in ("reference", "analyze", "reflect")}


@dataclass(frozen=True)
class ReferenceSummary:
    normal_pattern: str
    source_image_ids: tuple[str, ...] = ()

    @classmethod
    def empty(cls) -> "ReferenceSummary":
        # Sentinel used when reference learning is disabled (n_references=0).
        return cls(normal_pattern="(no normal reference was provided)")


@dataclass(frozen=True)
class PipelineConfig:
    width: int
    stride: int
    n_references: int = 3
    reflection_enabled: bool = True
    zoom_margin_frac: float = 0.25
    plot: PlotConfig = field(default_factory=PlotConfig)
    reference_seed: int = 0
    reference_image_paths: tuple[str, ...] = ()
    reflection_resend_reference_images: bool = False
    max_workers: int = 4

    def __post_init__(self) -> None:
        if self.n_references < 0:
            raise ValueError("n_references must be >= 0")

    def snapshot(self) -> dict:
        return {
            "width": self.width,
            "stride": self.stride,
            "n_references": self.n_references,
            "reflection_enabled": self.reflection_enabled,
            "zoom_margin_frac": self.zoom_margin_frac,
            "reference_seed": self.reference_seed,
            "reference_image_paths": list(self.reference_image_paths),
            "reflection_resend_reference_images": self.reflection_resend_reference_images,
            "plot": {
                "width_px": self.plot.width_px,
                "height_px": self.plot.height_px,
                "grid": self.plot.grid,
                "x_tick_count": self.plot.x_tick_count,
            },
        }


@dataclass(frozen=True)
class WindowAnalysis:
    """Per-window bundle: detections, descriptions, and the raw response."""

    window_index: int
    detections: tuple
    abnormal_description: str = ""
    abnormal_type_description: str = ""
    raw_response: str = ""
    diagnostics: tuple = ()
    failed: bool = False


@dataclass(frozen=True)
class PipelineResult:
    series_name: str
    series_length: int
    plan: WindowPlan
    analyses: tuple[WindowAnalysis, ...]
    summary: ReferenceSummary
    config: PipelineConfig


def _window_metadata(name: str, start: int, width: int, length: int) -> str:
    return WINDOW_METADATA_TEMPLATE.format(
        name=name, start=start, width=width, length=length
    )


def select_reference_windows(
    labels: LabelSeries, plan: WindowPlan, n: int, seed: int
) -> list[int]:
    """Seeded sample of anomaly-free window indices (for reference plots)."""
    flags = labels.flags
    eligible = [
        k
        for k, s in enumerate(plan.starts)
        if not flags[s : s + plan.width].any()
    ]
    if not eligible:
        return []
    rng = random.Random(seed)
    if len(eligible) <= n:
        return eligible
    return sorted(rng.sample(eligible, n))


def learn_references(images: list[RenderedImage], gw) -> ReferenceSummary:
    """Stage 1: send all reference plots in one request, keep the summary."""
    if not images:
        raise ReferenceLearningError("reference learning needs at least one image")
    parts = [TextPart(_PROMPTS["reference"].substitute())]
    parts.extend(ImagePart(img.png) for img in images)
    response = gw.complete(ChatRequest(parts=tuple(parts)))
    try:
        doc = json.loads(response.text)
        pattern = doc["normal_pattern"]
    except (json.JSONDecodeError, TypeError, KeyError) as exc:
        raise ReferenceLearningError(
            f"response lacks a usable normal_pattern field ({exc}); "
            f"raw response: {response.text[:500]}"
        ) from None
    if not isinstance(pattern, str) or not pattern.strip():
        raise ReferenceLearningError(
            f"normal_pattern is empty; raw response: {response.text[:500]}"
        )
    return ReferenceSummary(
        normal_pattern=pattern,
        source_image_ids=tuple(f"ref_{i}" for i in range(len(images))),
    )


def analyze_window(
    window: Window,
    image: RenderedImage,
    summary: ReferenceSummary,
    gw,
    series_name: str,
    series_length: int,
) -> WindowAnalysis:
    """Stage 2: detect and classify anomalies in one window plot."""
    prompt = _PROMPTS["analyze"].substitute(
        summary=summary.normal_pattern,
        window_metadata=_window_metadata(
            series_name, window.start, len(window.values), series_length
        ),
    )
    response = gw.complete(ChatRequest(parts=(TextPart(prompt), ImagePart(image.png))))
    parsed = parse_analysis(response.text, len(window.values))
    return WindowAnalysis(
        window_index=window.index,
        detections=parsed.detections,
        abnormal_description=parsed.abnormal_description,
        abnormal_type_description=parsed.abnormal_type_description,
        raw_response=response.text,
        diagnostics=parsed.diagnostics,
    )


def reflect(
    window: Window,
    prior: WindowAnalysis,
    gw,
    cfg: PipelineConfig,
    summary: ReferenceSummary,
    series_name: str,
    series_length: int,
    reference_images: tuple[RenderedImage, ...] = (),
    window_image: RenderedImage | None = None,
    image_sink=None,
) -> WindowAnalysis:
    """Stage 3: double-check a window that reported detections.

    The corrected index list replaces the prior detections. On any failure
    the prior analysis is returned unchanged; reflection never loses data.
    """
    if not prior.detections:
        return prior
    window_series = TimeSeries(window.values, name=f"{series_name}:w{window.index}")
    zooms = [
        render_zoom(window_series, d.interval, cfg.zoom_margin_frac, cfg.plot)
        for d in prior.detections
    ]
    if image_sink is not None:
        for i, z in enumerate(zooms):
            image_sink(f"{window.index}_zoom_{i}.png", z.png)
    prompt = _PROMPTS["reflect"].substitute(
        summary=summary.normal_pattern,
        window_metadata=_window_metadata(
            series_name, window.start, len(window.values), series_length
        ),
        prior_prediction=serialize_detections(prior.detections),
        prior_description=prior.abnormal_description or "(none)",
    )
    parts: list = [TextPart(prompt)]
    if cfg.reflection_resend_reference_images:
        parts.extend(ImagePart(img.png) for img in reference_images)
    if window_image is not None:
        parts.append(ImagePart(window_image.png))
    parts.extend(ImagePart(z.png) for z in zooms)
    try:
        response = gw.complete(ChatRequest(parts=tuple(parts)))
        parsed = parse_analysis(response.text, len(window.values))
    except (ReplayMissError, ConfigurationError, OracleMetadataError):
        raise
    except (ResponseFormatError, GatewayError):
        return prior
    return WindowAnalysis(
        window_index=prior.window_index,
        detections=parsed.detections,
        abnormal_description=parsed.abnormal_description or prior.abnormal_description,
        abnormal_type_description=parsed.abnormal_type_description
        or prior.abnormal_type_description,
        raw_response=response.text,
        diagnostics=prior.diagnostics + parsed.diagnostics,
    )


def _analyze_and_reflect(
    window: Window,
    cfg: PipelineConfig,
    summary: ReferenceSummary,
    gw,
    series_name: str,
    series_length: int,
    reference_images: tuple[RenderedImage, ...],
    image_sink=None,
) -> WindowAnalysis:
    image = render_window(window, cfg.plot)
    if image_sink is not None:
        image_sink(f"{window.index}.png", image.png)
    try:
        analysis = analyze_window(window, image, summary, gw, series_name, series_length)
    except (ReplayMissError, ConfigurationError, OracleMetadataError):
        raise
    except (ResponseFormatError, GatewayError) as exc:
        return WindowAnalysis(
            window_index=window.index,
            detections=(),
            raw_response=getattr(exc, "raw", str(exc)),
            diagnostics=(Diagnostic("window_failed", str(exc)),),
            failed=True,
        )
    if cfg.reflection_enabled and analysis.detections:
        analysis = reflect(
            window,
            analysis,
            gw,
            cfg,
            summary,
            series_name,
            series_length,
            reference_images=reference_images,
            window_image=image,
            image_sink=image_sink,
        )
    return analysis


def run(
    series: TimeSeries,
    cfg: PipelineConfig,
    gw,
    labels: LabelSeries | None = None,
    image_sink=None,
) -> PipelineResult:
    """Run all three stages over a series and return the raw window bundle.

    Reference plots come from `cfg.reference_image_paths` when given,
    otherwise from seeded sampling of anomaly-free windows of `labels`.
    With n_references = 0 the learning stage is skipped entirely.
    """
    normalized = normalize(series)
    plan, windows = make_windows(normalized, cfg.width, cfg.stride)

    reference_images: tuple[RenderedImage, ...] = ()
    if cfg.n_references == 0:
        summary = ReferenceSummary.empty()
    else:
        if cfg.reference_image_paths:
            reference_images = tuple(
                RenderedImage(
                    png=Path(p).read_bytes(), x_domain=(0, 0), config=cfg.plot
                )
                for p in cfg.reference_image_paths[: cfg.n_references]
            )
        elif labels is not None:
            picks = select_reference_windows(
                labels, plan, cfg.n_references, cfg.reference_seed
            )
            reference_images = tuple(
                render_window(windows[k], cfg.plot) for k in picks
            )
        if not reference_images:
            raise ReferenceLearningError(
                "no reference images available: provide reference_image_paths "
                "or labels with at least one anomaly-free window"
            )
        summary = learn_references(list(reference_images), gw)

    def worker(w: Window) -> WindowAnalysis:
        return _analyze_and_reflect(
            w,
            cfg,
            summary,
            gw,
            series.name,
            len(series),
            reference_images,
            image_sink=image_sink,
        )

    if cfg.max_workers <= 1:
        analyses = [worker(w) for w in windows]
    else:
        with ThreadPoolExecutor(max_workers=cfg.max_workers) as pool:
            analyses = list(pool.map(worker, windows))
    analyses.sort(key=lambda a: a.window_index)
    return PipelineResult(
        series_name=series.name,
        series_length=len(series),
        plan=plan,
        analyses=tuple(analyses),
        summary=summary,
        config=cfg,
    )


def zraw_to_json(result: PipelineResult) -> str:
    """Deterministic serialization of the raw per-window analyses."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "series": result.series_name,
        "length": result.series_length,
        "plan": {
            "width": result.plan.width,
            "stride": result.plan.stride,
            "starts": list(result.plan.starts),
        },
        "normal_pattern": result.summary.normal_pattern,
        "config": result.config.snapshot(),
        "windows": [
            {
                "k": a.window_index,
                "failed": a.failed,
                "detections": [
                    {
                        "start": d.interval.start,
                        "end": d.interval.end,
                        "confidence": d.confidence,
                        "type": d.kind.value,
                    }
                    for d in a.detections
                ],
                "abnormal_description": a.abnormal_description,
                "abnormal_type_description": a.abnormal_type_description,
                "diagnostics": [
                    {"code": d.code, "message": d.message} for d in a.diagnostics
                ],
                "raw_response": a.raw_response,
            }
            for a in result.analyses
        ],
    }
    return json.dumps(doc, sort_keys=True, indent=2)
