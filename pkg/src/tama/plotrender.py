"""Deterministic line-plot rendering of windows and zoomed regions.

Images are PNG bytes rendered with the Agg backend at a fixed layout, so a
given (data, config) pair always produces identical bytes within a release.
The resolution is capped at 2000x768; larger configs are rejected before
any drawing happens. Auxiliary grid lines are vertical only, drawn at the
labeled x ticks, beneath the data line. Rotation is deliberately not
offered: plots are always value-over-index.
"""

from __future__ import annotations

import io
import math
import threading
from dataclasses import dataclass

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .core import AnomalyInterval, TimeSeries, interval_length
from .preprocess import Window

MAX_WIDTH_PX = 2000
MAX_HEIGHT_PX = 768

# Agg figures are not thread-safe; rendering is serialized process-wide.
_RENDER_LOCK = threading.RLock()

_AXES_RECT = (0.07, 0.12, 0.90, 0.83)

# Figure construction dominates render time; reuse one figure per pixel size.
_FIGURE_CACHE: dict[tuple[int, int, int], Figure] = {}


def _figure_for(cfg: "PlotConfig") -> Figure:
    key = (cfg.width_px, cfg.height_px, cfg.scale)
    fig = _FIGURE_CACHE.get(key)
    if fig is None:
        fig = Figure(
            figsize=(cfg.width_px / cfg.scale, cfg.height_px / cfg.scale),
            dpi=cfg.scale,
        )
        FigureCanvasAgg(fig)
        _FIGURE_CACHE[key] = fig
    fig.clf()
    return fig


class PlotConfigError(ValueError):
    """Raised when a plot configuration violates the resolution cap."""


@dataclass(frozen=True)
class PlotConfig:
    width_px: int = 1600
    height_px: int = 600
    grid: bool = True
    x_tick_count: int = 11
    line_color: tuple[int, int, int] = (31, 119, 180)
    background_color: tuple[int, int, int] = (255, 255, 255)
    scale: int = 100  # dpi

    def validate(self) -> None:
        if self.width_px <= 0 or self.height_px <= 0:
            raise PlotConfigError("image dimensions must be positive")
        if self.width_px > MAX_WIDTH_PX or self.height_px > MAX_HEIGHT_PX:
            raise PlotConfigError(
                f"{self.width_px}x{self.height_px} exceeds the "
                f"{MAX_WIDTH_PX}x{MAX_HEIGHT_PX} cap"
            )
        if self.x_tick_count < 2:
            raise PlotConfigError("need at least two x ticks")
        if self.scale <= 0:
            raise PlotConfigError("scale must be positive")


@dataclass(frozen=True)
class RenderedImage:
    png: bytes
    x_domain: tuple[int, int]
    config: PlotConfig


def _rgb(color: tuple[int, int, int]) -> tuple[float, float, float]:
    return tuple(c / 255.0 for c in color)


def _tick_positions(lo: int, hi: int, count: int) -> list[int]:
    ticks = np.unique(np.round(np.linspace(lo, hi, count)).astype(int))
    return [int(t) for t in ticks]


def _render(
    xs: np.ndarray, ys: np.ndarray, cfg: PlotConfig, x_domain: tuple[int, int]
) -> RenderedImage:
    cfg.validate()
    lo, hi = x_domain
    ticks = _tick_positions(lo, hi, cfg.x_tick_count)
    with _RENDER_LOCK:
        fig = _figure_for(cfg)
        fig.patch.set_facecolor(_rgb(cfg.background_color))
        ax = fig.add_axes(_AXES_RECT)
        ax.set_facecolor(_rgb(cfg.background_color))
        pad = 0.5 if hi == lo else 0.0
        ax.set_xlim(lo - pad, hi + pad)
        y_lo, y_hi = float(np.min(ys)), float(np.max(ys))
        if y_hi == y_lo:
            y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
        margin = 0.05 * (y_hi - y_lo)
        ax.set_ylim(y_lo - margin, y_hi + margin)
        if cfg.grid:
            for t in ticks:
                ax.axvline(
                    t, color="0.82", linewidth=1.0, antialiased=False, zorder=0
                )
        ax.plot(xs, ys, color=_rgb(cfg.line_color), linewidth=1.2, zorder=2)
        ax.set_xticks(ticks)
        ax.set_xlabel("index")
        ax.set_ylabel("value")
        buf = io.BytesIO()
        # Low PNG compression: these plots are intermediate artifacts and
        # encode speed matters more than file size.
        fig.savefig(buf, format="png", dpi=cfg.scale, pil_kwargs={"compress_level": 1})
    return RenderedImage(png=buf.getvalue(), x_domain=(lo, hi), config=cfg)


def render_window(window: Window, cfg: PlotConfig) -> RenderedImage:
    """Render one window with local x indices 0..width-1."""
    n = len(window.values)
    if n == 0:
        raise ValueError("cannot render an empty window")
    xs = np.arange(n)
    return _render(xs, window.values, cfg, (0, n - 1))


def render_zoom(
    series: TimeSeries,
    region: AnomalyInterval,
    margin_frac: float,
    cfg: PlotConfig,
) -> RenderedImage:
    """Render a zoomed view of a region with a proportional margin.

    The plotted domain is the region widened by ceil(margin_frac * region
    length) on each side, clamped to the series bounds; x labels show the
    plotted indices.
    """
    t = len(series)
    if region.end >= t:
        raise ValueError(
            f"region ({region.start}, {region.end}) out of range for length {t}"
        )
    if margin_frac < 0:
        raise ValueError("margin_frac must be non-negative")
    m = math.ceil(margin_frac * interval_length(region))
    lo = max(0, region.start - m)
    hi = min(t - 1, region.end + m)
    xs = np.arange(lo, hi + 1)
    return _render(xs, series.values[lo : hi + 1], cfg, (lo, hi))


def gridline_pixel_columns(window_length: int, cfg: PlotConfig) -> list[int]:
    """Pixel columns of the vertical grid lines render_window would draw.

    Used by verification code to confirm that toggling the grid changes
    only gridline pixels.
    """
    cfg.validate()
    ticks = _tick_positions(0, window_length - 1, cfg.x_tick_count)
    with _RENDER_LOCK:
        fig = _figure_for(cfg)
        ax = fig.add_axes(_AXES_RECT)
        pad = 0.5 if window_length == 1 else 0.0
        ax.set_xlim(0 - pad, window_length - 1 + pad)
        ax.set_ylim(0.0, 1.0)
        cols = [float(ax.transData.transform((t, 0.0))[0]) for t in ticks]
    return [int(round(c)) for c in cols]
