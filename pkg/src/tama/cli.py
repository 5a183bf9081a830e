"""Command-line entry point.

Subcommands: detect, eval, sweep-pat, gen-synth, render, cache. A YAML
config file can pre-set any option; explicit command-line flags win over
file values, which win over built-in defaults. Exit codes: 0 success, 1
partial per-series failures, 2 configuration or credential errors.
"""

from __future__ import annotations

import json
import os
import random
import sys
from pathlib import Path

import click
import numpy as np
import yaml

from . import aggregate, metrics, pipeline, synthgen
from .core import AnomalyInterval, AnomalyType, labels_to_intervals
from .gateway import (
    CacheStore,
    ConfigurationError,
    HttpGateway,
    OracleFidelity,
    OracleGateway,
    OracleTruth,
    RecordingGateway,
    ReplayGateway,
)
from .ingest import DatasetManifest, IngestError, load_entry, load_type_map
from .plotrender import PlotConfig, PlotConfigError, render_window
from .preprocess import make_windows, normalize

DEFAULT_CACHE_ENV = "TAMA_CACHE_DIR"


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    return doc or {}


def _setting(cli_value, file_config: dict, key: str, default):
    if cli_value is not None:
        return cli_value
    if key in file_config:
        return file_config[key]
    return default


def _load_manifest(path: str) -> DatasetManifest:
    doc = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    return DatasetManifest.from_dict(doc, Path(path).parent)


@click.group()
def main() -> None:
    """Time series anomaly analysis pipeline."""


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option(
    "--backend",
    type=click.Choice(["oracle", "http", "replay"]),
    default=None,
    help="oracle is the offline ground-truth double; replay serves a recorded cache.",
)
@click.option("--record/--no-record", default=None, help="Persist responses to the cache.")
@click.option("--cache-dir", default=None, type=click.Path())
@click.option("--base-url", default=None)
@click.option("--model", "model_name", default=None)
@click.option("--api-key-env", default=None)
@click.option("--width", type=int, default=None, help="Window width (default 3 x period hint).")
@click.option("--stride", type=int, default=None, help="Window stride (default width / 2).")
@click.option("--n-references", type=int, default=None)
@click.option("--reflection/--no-reflection", default=None)
@click.option("--c0", type=float, default=None, help="Confidence threshold for the final set.")
@click.option("--seed", type=int, default=None)
@click.option("--fidelity", type=click.Choice(["perfect", "noisy"]), default=None)
@click.option("--jitter", type=int, default=None)
@click.option("--fp-rate", type=float, default=None)
@click.option("--plot-width", type=int, default=None)
@click.option("--plot-height", type=int, default=None)
@click.option("--grid/--no-grid", default=None)
@click.option("--max-workers", type=int, default=None)
@click.option("--save-images/--no-save-images", default=None)
def detect(
    manifest_path,
    out_dir,
    config_path,
    backend,
    record,
    cache_dir,
    base_url,
    model_name,
    api_key_env,
    width,
    stride,
    n_references,
    reflection,
    c0,
    seed,
    fidelity,
    jitter,
    fp_rate,
    plot_width,
    plot_height,
    grid,
    max_workers,
    save_images,
):
    """Run the full pipeline over every manifest entry."""
    file_cfg = _load_config_file(config_path)
    backend = _setting(backend, file_cfg, "backend", "oracle")
    record = _setting(record, file_cfg, "record", False)
    cache_dir = _setting(
        cache_dir, file_cfg, "cache_dir", os.environ.get(DEFAULT_CACHE_ENV)
    )
    base_url = _setting(base_url, file_cfg, "base_url", "https://api.openai.com/v1")
    model_name = _setting(model_name, file_cfg, "model", "gpt-4o-2024-05-13")
    api_key_env = _setting(api_key_env, file_cfg, "api_key_env", "TAMA_API_KEY")
    width = _setting(width, file_cfg, "width", None)
    stride = _setting(stride, file_cfg, "stride", None)
    n_references = _setting(n_references, file_cfg, "n_references", 3)
    reflection = _setting(reflection, file_cfg, "reflection", True)
    c0 = _setting(c0, file_cfg, "c0", 1.0)
    seed = _setting(seed, file_cfg, "seed", 0)
    fidelity = _setting(fidelity, file_cfg, "fidelity", "perfect")
    jitter = _setting(jitter, file_cfg, "jitter", 0)
    fp_rate = _setting(fp_rate, file_cfg, "fp_rate", 0.0)
    plot_width = _setting(plot_width, file_cfg, "plot_width", 1600)
    plot_height = _setting(plot_height, file_cfg, "plot_height", 600)
    grid = _setting(grid, file_cfg, "grid", True)
    max_workers = _setting(max_workers, file_cfg, "max_workers", 4)
    save_images = _setting(save_images, file_cfg, "save_images", True)

    try:
        manifest = _load_manifest(manifest_path)
        plot_cfg = PlotConfig(width_px=plot_width, height_px=plot_height, grid=grid)
        plot_cfg.validate()
        gw, cache = _build_gateway(
            backend,
            record,
            cache_dir,
            base_url,
            model_name,
            api_key_env,
            fidelity,
            seed,
            jitter,
            fp_rate,
            manifest,
        )
    except (ConfigurationError, PlotConfigError, IngestError, ValueError) as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(2)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    snapshot = {
        "backend": backend,
        "record": record,
        "cache_dir": str(cache_dir) if cache_dir else None,
        "base_url": base_url,
        "model": model_name,
        "width": width,
        "stride": stride,
        "n_references": n_references,
        "reflection": reflection,
        "c0": c0,
        "seed": seed,
        "fidelity": fidelity,
        "jitter": jitter,
        "fp_rate": fp_rate,
        "plot_width": plot_width,
        "plot_height": plot_height,
        "grid": grid,
        "max_workers": max_workers,
        "save_images": save_images,
        "schema_version": pipeline.SCHEMA_VERSION,
    }
    (out / "run_config.yaml").write_text(
        yaml.safe_dump(snapshot, sort_keys=True), encoding="utf-8"
    )

    failures = []
    for entry in manifest.entries:
        try:
            _detect_one(
                entry,
                out,
                gw,
                width,
                stride,
                n_references,
                reflection,
                c0,
                seed,
                plot_cfg,
                max_workers,
                save_images,
            )
        except Exception as exc:  # per-series failures are summarized, not fatal
            failures.append((entry.name, exc))
            click.echo(f"series {entry.name} failed: {exc}", err=True)
    if failures:
        click.echo(f"{len(failures)} of {len(manifest.entries)} series failed", err=True)
        sys.exit(1)
    click.echo(f"wrote results for {len(manifest.entries)} series to {out}")


def _build_gateway(
    backend,
    record,
    cache_dir,
    base_url,
    model_name,
    api_key_env,
    fidelity,
    seed,
    jitter,
    fp_rate,
    manifest,
):
    cache = CacheStore(cache_dir) if cache_dir else None
    if backend == "replay":
        if cache is None:
            raise ConfigurationError("replay backend needs --cache-dir")
        return ReplayGateway(cache, strict=True), cache
    if backend == "oracle":
        truths = {}
        for entry in manifest.entries:
            series, labels = load_entry(entry)
            if labels is None:
                raise ConfigurationError(
                    f"oracle backend needs labels for series {entry.name}"
                )
            type_map = (
                load_type_map(entry.type_path, len(series))
                if entry.type_path is not None
                else {}
            )
            truths[entry.name] = OracleTruth(labels, type_map)
        fid = (
            OracleFidelity.perfect()
            if fidelity == "perfect"
            else OracleFidelity.noisy(seed=seed, jitter=jitter, fp_rate=fp_rate)
        )
        gw = OracleGateway(truths, fid)
    else:
        gw = HttpGateway(base_url=base_url, api_key_env=api_key_env)
    if record:
        if cache is None:
            raise ConfigurationError("--record needs --cache-dir")
        gw = RecordingGateway(gw, cache)
    return gw, cache


def _detect_one(
    entry,
    out: Path,
    gw,
    width,
    stride,
    n_references,
    reflection,
    c0,
    seed,
    plot_cfg: PlotConfig,
    max_workers,
    save_images,
):
    series, labels = load_entry(entry)
    if width is None:
        if entry.period_hint is None:
            raise ConfigurationError(
                f"series {entry.name}: no --width and no period hint in the manifest"
            )
        width = 3 * entry.period_hint
    if stride is None:
        stride = max(1, width // 2)

    cfg = pipeline.PipelineConfig(
        width=width,
        stride=stride,
        n_references=n_references,
        reflection_enabled=reflection,
        plot=plot_cfg,
        reference_seed=seed,
        max_workers=max_workers,
    )
    series_dir = out / entry.name
    series_dir.mkdir(parents=True, exist_ok=True)
    sink = None
    if save_images:
        image_dir = series_dir / "images"
        image_dir.mkdir(exist_ok=True)

        def sink(filename: str, png: bytes) -> None:
            (image_dir / filename).write_bytes(png)

    result = pipeline.run(series, cfg, gw, labels=labels, image_sink=sink)
    (series_dir / "zraw.json").write_text(pipeline.zraw_to_json(result), encoding="utf-8")
    final = aggregate.build_final_result(
        list(result.analyses),
        result.plan,
        series_name=entry.name,
        series_length=len(series),
        c0=c0,
    )
    (series_dir / "report.json").write_text(
        aggregate.result_to_json(final), encoding="utf-8"
    )


def _parse_alpha_grid(text: str) -> list[float]:
    values = [float(v) for v in text.split(",") if v.strip() != ""]
    for v in values:
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"alpha {v} outside [0, 1]")
    return values


def _evaluate_run(run_dir: Path, manifest: DatasetManifest, alpha: float, grid):
    reports = []
    for entry in manifest.entries:
        report_path = run_dir / entry.name / "report.json"
        if not report_path.exists():
            raise IngestError(f"no result for manifest entry {entry.name}")
        final = aggregate.result_from_json(report_path.read_text(encoding="utf-8"))
        series, labels = load_entry(entry)
        if labels is None:
            raise IngestError(f"series {entry.name} has no labels to evaluate against")
        truth = labels_to_intervals(labels)
        type_truth = (
            load_type_map(entry.type_path, len(series))
            if entry.type_path is not None
            else None
        )
        pred_classes = {
            t: final.classes[t]
            for t in final.anomaly_points
            if final.classes[t] is not None
        }
        reports.append(
            metrics.evaluate(
                series_name=entry.name,
                truth=truth,
                pred_points=set(final.anomaly_points),
                scores=final.confidence,
                length=len(series),
                alpha=alpha,
                type_truth=type_truth,
                pred_classes=pred_classes if type_truth is not None else None,
                alpha_grid=grid,
                c0=final.threshold,
            )
        )
    return reports


def _aggregate_stats(reports) -> dict:
    stats = {}
    for attr in ("f1", "precision", "recall", "auc_pr_adjusted", "auc_roc_adjusted"):
        values = [getattr(r, attr) for r in reports]
        stats[attr] = {
            "mean": float(np.mean(values)),
            "std": float(np.std(values)),
            "max": float(np.max(values)),
        }
    return stats


@main.command("eval")
@click.option("--run-dir", required=True, type=click.Path(exists=True))
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--alpha", type=float, default=0.0, show_default=True)
@click.option("--alpha-grid", default="0,0.2,0.4,0.6,0.8,1.0", show_default=True)
def eval_cmd(run_dir, manifest_path, alpha, alpha_grid):
    """Score a detect run: per-series metrics plus mean/std/max aggregates."""
    try:
        manifest = _load_manifest(manifest_path)
        grid = _parse_alpha_grid(alpha_grid)
    except (IngestError, ValueError) as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(2)
    run_path = Path(run_dir)
    reports = _evaluate_run(run_path, manifest, alpha, grid)
    doc = {
        "alpha": alpha,
        "series": [metrics.report_to_dict(r) for r in reports],
        "aggregate": _aggregate_stats(reports),
    }
    (run_path / "eval.json").write_text(
        json.dumps(doc, sort_keys=True, indent=2), encoding="utf-8"
    )
    table = metrics.reports_to_table(reports)
    (run_path / "eval.txt").write_text(table, encoding="utf-8")
    (run_path / "pat.csv").write_text(
        metrics.pat_curves_to_csv(reports), encoding="utf-8"
    )
    click.echo(table)


@main.command("sweep-pat")
@click.option("--run-dir", required=True, type=click.Path(exists=True))
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--alpha-grid", default="0,0.2,0.4,0.6,0.8,1.0", show_default=True)
def sweep_pat(run_dir, manifest_path, alpha_grid):
    """Write the point-adjustment-threshold sweep as CSV."""
    try:
        manifest = _load_manifest(manifest_path)
        grid = _parse_alpha_grid(alpha_grid)
    except (IngestError, ValueError) as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(2)
    run_path = Path(run_dir)
    reports = _evaluate_run(run_path, manifest, 0.0, grid)
    csv_text = metrics.pat_curves_to_csv(reports)
    (run_path / "pat.csv").write_text(csv_text, encoding="utf-8")
    click.echo(csv_text)


def default_injections(
    length: int, base_period: int, rng: random.Random
) -> list[synthgen.AnomalySpec]:
    """One point, one seasonal, one trend anomaly at disjoint seeded spots."""
    segment = length // 3
    span = min(2 * base_period, segment - 2 * base_period)
    point_at = rng.randrange(base_period, segment - 1)
    seasonal_start = segment + rng.randrange(0, segment - span - 1)
    trend_start = 2 * segment + rng.randrange(0, segment - span - 1)
    return [
        synthgen.AnomalySpec(
            AnomalyType.POINT, AnomalyInterval(point_at, point_at), magnitude=5.0
        ),
        synthgen.AnomalySpec(
            AnomalyType.SEASONAL,
            AnomalyInterval(seasonal_start, seasonal_start + span - 1),
            magnitude=2.0,
        ),
        synthgen.AnomalySpec(
            AnomalyType.TREND,
            AnomalyInterval(trend_start, trend_start + span - 1),
            magnitude=1.5,
        ),
    ]


def write_synthetic_dataset(
    out: Path,
    n_series: int,
    length: int,
    base_period: int,
    noise_sigma: float,
    seed: int,
) -> Path:
    """Generate a labeled dataset plus a ready-to-use manifest; returns its path."""
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(n_series):
        rng = random.Random(f"{seed}:{i}")
        config = synthgen.GeneratorConfig(
            length=length,
            base_period=base_period,
            noise_sigma=noise_sigma,
            seed=seed + i,
            injections=tuple(default_injections(length, base_period, rng)),
            name=f"series_{i:02d}",
        )
        series, labels, type_map = synthgen.generate(config)
        (out / f"series_{i:02d}.txt").write_text(
            "\n".join(f"{v:.9f}" for v in series.values) + "\n", encoding="utf-8"
        )
        (out / f"labels_{i:02d}.txt").write_text(
            "\n".join("1" if f else "0" for f in labels.flags) + "\n", encoding="utf-8"
        )
        (out / f"types_{i:02d}.txt").write_text(
            "".join(f"{t} {k.value}\n" for t, k in sorted(type_map.items())),
            encoding="utf-8",
        )
        entries.append(
            {
                "name": config.name,
                "series": f"series_{i:02d}.txt",
                "labels": f"labels_{i:02d}.txt",
                "types": f"types_{i:02d}.txt",
                "period_hint": base_period,
            }
        )
    manifest_path = out / "manifest.yaml"
    manifest_path.write_text(
        yaml.safe_dump({"entries": entries}, sort_keys=False), encoding="utf-8"
    )
    (out / "metadata.yaml").write_text(
        yaml.safe_dump(
            {
                "noise_algorithm": synthgen.NOISE_ALGORITHM,
                "n_series": n_series,
                "length": length,
                "base_period": base_period,
                "noise_sigma": noise_sigma,
                "seed": seed,
            },
            sort_keys=True,
        ),
        encoding="utf-8",
    )
    return manifest_path


@main.command("gen-synth")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--n-series", type=int, default=10, show_default=True)
@click.option("--length", type=int, default=3000, show_default=True)
@click.option("--period", type=int, default=100, show_default=True)
@click.option("--noise-sigma", type=float, default=0.05, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def gen_synth(out_dir, n_series, length, period, noise_sigma, seed):
    """Generate a labeled synthetic dataset with a manifest."""
    try:
        manifest_path = write_synthetic_dataset(
            Path(out_dir), n_series, length, period, noise_sigma, seed
        )
    except ValueError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(2)
    click.echo(f"wrote manifest {manifest_path}")


@main.command("render")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--width", type=int, default=None)
@click.option("--stride", type=int, default=None)
@click.option("--plot-width", type=int, default=1600)
@click.option("--plot-height", type=int, default=600)
@click.option("--grid/--no-grid", default=True)
def render_cmd(manifest_path, out_dir, width, stride, plot_width, plot_height, grid):
    """Emit window plot images only (debugging aid)."""
    try:
        manifest = _load_manifest(manifest_path)
        plot_cfg = PlotConfig(width_px=plot_width, height_px=plot_height, grid=grid)
        plot_cfg.validate()
    except (IngestError, PlotConfigError) as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(2)
    out = Path(out_dir)
    for entry in manifest.entries:
        series, _ = load_entry(entry)
        w = width or (3 * entry.period_hint if entry.period_hint else None)
        if w is None:
            click.echo(f"configuration error: no width for {entry.name}", err=True)
            sys.exit(2)
        s = stride or max(1, w // 2)
        _, windows = make_windows(normalize(series), w, s)
        series_dir = out / entry.name
        series_dir.mkdir(parents=True, exist_ok=True)
        for win in windows:
            img = render_window(win, plot_cfg)
            (series_dir / f"{win.index}.png").write_bytes(img.png)
        click.echo(f"{entry.name}: {len(windows)} image(s)")


@main.group()
def cache() -> None:
    """Inspect or purge the response cache."""


def _cache_dir_or_exit(cache_dir) -> CacheStore:
    cache_dir = cache_dir or os.environ.get(DEFAULT_CACHE_ENV)
    if not cache_dir:
        click.echo("configuration error: no cache dir (flag or TAMA_CACHE_DIR)", err=True)
        sys.exit(2)
    return CacheStore(cache_dir)


@cache.command("inspect")
@click.option("--cache-dir", default=None, type=click.Path())
def cache_inspect(cache_dir):
    store = _cache_dir_or_exit(cache_dir)
    index = {}
    if store.index_path.exists():
        index = json.loads(store.index_path.read_text(encoding="utf-8"))
    for key in store.keys():
        click.echo(f"{key}  {index.get(key, '')}")
    click.echo(f"{len(store.keys())} cached response(s)")


@cache.command("purge")
@click.option("--cache-dir", default=None, type=click.Path())
def cache_purge(cache_dir):
    store = _cache_dir_or_exit(cache_dir)
    n = store.purge()
    click.echo(f"removed {n} file(s)")


if __name__ == "__main__":
    main()
