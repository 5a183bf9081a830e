"""End-to-end acceptance checks.

Each test covers one numbered criterion and prints a single pass/fail line
so the suite doubles as a human-readable checklist. Criteria 1 and 2 drive
the full command-line pipeline against the offline oracle backends; the
remaining criteria are randomized equivalence and property checks against
the brute-force oracles in tests/oracles.py.
"""

import json
import math
import os
import random
import time

import io

import numpy as np
import pytest
from click.testing import CliRunner
from PIL import Image

from oracles import (
    brute_accumulate,
    brute_auc_pr,
    brute_auc_roc,
    brute_point_adjust,
    brute_prf,
    mann_whitney,
)
from tama.aggregate import accumulate, build_final_result, result_to_json, threshold
from tama.cli import main
from tama.core import AnomalyInterval, AnomalyType, Detection, LabelSeries, TimeSeries
from tama.gateway import CacheStore, OracleGateway, RecordingGateway, ReplayGateway
from tama.metrics import auc_pr, auc_roc, point_adjust, prf
from tama.pipeline import PipelineConfig, WindowAnalysis, run, zraw_to_json
from tama.plotrender import (
    PlotConfig,
    PlotConfigError,
    gridline_pixel_columns,
    render_window,
)
from tama.preprocess import Window, WindowPlan, make_windows, normalize
from tama.respparse import parse_index_list, serialize_detections


@pytest.fixture()
def announce(capsys):
    def _announce(number: int, ok: bool, detail: str = "") -> None:
        status = "PASS" if ok else "FAIL"
        with capsys.disabled():
            print(f"[acceptance] criterion {number}: {status}  {detail}")
        assert ok, f"criterion {number} failed: {detail}"

    return _announce


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    """10 synthetic series, T = 3000, period 100, one anomaly of each kind."""
    out = tmp_path_factory.mktemp("synth")
    result = CliRunner().invoke(
        main,
        ["gen-synth", "--out", str(out), "--n-series", "10",
         "--length", "3000", "--period", "100", "--seed", "0"],
    )
    assert result.exit_code == 0, result.output
    return out


def _detect(dataset, out_dir, extra):
    args = [
        "detect",
        "--manifest", str(dataset / "manifest.yaml"),
        "--out", str(out_dir),
        "--backend", "oracle",
        "--no-save-images",
        "--plot-width", "640",
        "--plot-height", "240",
    ] + extra
    result = CliRunner().invoke(main, args)
    assert result.exit_code == 0, result.output


def _eval(dataset, out_dir):
    result = CliRunner().invoke(
        main,
        ["eval", "--run-dir", str(out_dir),
         "--manifest", str(dataset / "manifest.yaml")],
    )
    assert result.exit_code == 0, result.output
    return json.loads((out_dir / "eval.json").read_text())


def test_criterion_1_oracle_end_to_end(dataset, tmp_path, announce):
    run_dir = tmp_path / "perfect"
    started = time.perf_counter()
    _detect(dataset, run_dir, ["--fidelity", "perfect"])
    elapsed = time.perf_counter() - started

    doc = _eval(dataset, run_dir)
    f1s = [s["f1"] for s in doc["series"]]
    type_f1s = [v for s in doc["series"] for v in s["per_type_f1"].values()]
    kinds_seen = {k for s in doc["series"] for k in s["per_type_f1"]}
    ok = (
        len(doc["series"]) == 10
        and all(abs(f - 1.0) < 1e-12 for f in f1s)
        and all(abs(v - 1.0) < 1e-12 for v in type_f1s)
        and kinds_seen == {"point", "seasonal", "trend"}
        and elapsed < 30.0
    )
    announce(
        1,
        ok,
        f"PA F1 = per-type F1 = 1.000 on all 10 series, detect took {elapsed:.1f}s (< 30s)",
    )


def test_criterion_2_noisy_degradation(dataset, tmp_path, announce):
    run_dir = tmp_path / "noisy"
    # seed 109 gives every series at least one partially covered truth
    # interval, so adjustment strictly beats the raw score on all of them
    _detect(
        dataset,
        run_dir,
        ["--fidelity", "noisy", "--jitter", "5", "--fp-rate", "0.02", "--seed", "109"],
    )
    doc = _eval(dataset, run_dir)
    ok = True
    worst = 1.0
    for series in doc["series"]:
        curve = {p["alpha"]: p["f1"] for p in series["pat_curve"]}
        f1_full, f1_raw = curve[0.0], curve[1.0]
        worst = min(worst, f1_full)
        ok = ok and f1_full >= 0.95 and f1_raw < f1_full
        f1_by_alpha = [p["f1"] for p in sorted(series["pat_curve"], key=lambda p: p["alpha"])]
        ok = ok and all(a >= b - 1e-12 for a, b in zip(f1_by_alpha, f1_by_alpha[1:]))
    announce(
        2,
        ok,
        f"min PA F1(alpha=0) = {worst:.3f} >= 0.95, raw F1 strictly lower, sweep monotone",
    )


def _random_disjoint_intervals(rng, length, max_n):
    n = rng.randint(0, max_n)
    cuts = sorted(rng.sample(range(length), min(2 * n, length)))
    pairs = list(zip(cuts[0::2], cuts[1::2]))
    return [AnomalyInterval(a, b) for a, b in pairs]


def test_criterion_3_metric_oracle_equivalence(announce):
    rng = random.Random(2024)
    checked_pairwise = 0
    for i in range(1000):
        tie_free = i % 10 == 0
        length = rng.randint(10, 120 if tie_free else 200)
        if tie_free:
            scores = rng.sample(range(length), length)
        else:
            scores = [rng.randint(0, 8) for _ in range(length)]
        truth = _random_disjoint_intervals(rng, length, 10)
        pred = set(rng.sample(range(length), rng.randint(0, length // 2)))
        alpha = rng.choice([0.0, 0.25, 0.5, 1.0])

        assert point_adjust(truth, pred, alpha) == brute_point_adjust(truth, pred, alpha)
        assert prf(truth, pred, length) == brute_prf(truth, pred, length)

        arr = np.array(scores, dtype=float)
        assert abs(auc_pr(arr, truth, None) - brute_auc_pr(scores, truth, None)) < 1e-9
        got = auc_roc(arr, truth, None)
        want = brute_auc_roc(scores, truth, None)
        if math.isnan(want):
            assert math.isnan(got)
        else:
            assert abs(got - want) < 1e-9
        if not tie_free:
            assert abs(auc_pr(arr, truth, 0.0) - brute_auc_pr(scores, truth, 0.0)) < 1e-9
        if tie_free and truth and not math.isnan(want):
            truth_points = {t for iv in truth for t in range(iv.start, iv.end + 1)}
            # equal quantities, but summed in different orders: allow the
            # final ulp to differ
            assert abs(got - mann_whitney(scores, truth_points)) < 1e-12
            checked_pairwise += 1
    announce(
        3,
        checked_pairwise > 0,
        f"1000 instances match brute force (pairwise statistic on {checked_pairwise} tie-free)",
    )


def test_criterion_4_pa_hand_cases(announce):
    # single hit expands the interval: perfect F1
    adjusted = point_adjust([AnomalyInterval(10, 20)], {15}, 0.0)
    _, _, f1_a = prf([AnomalyInterval(10, 20)], adjusted, 50)

    # one false positive next to a fully adjusted interval: F1 = 22/23
    adjusted = point_adjust([AnomalyInterval(10, 20)], {5, 15}, 0.0)
    _, _, f1_b = prf([AnomalyInterval(10, 20)], adjusted, 50)

    # overlap 3 of length 10: expands at alpha 0.25, not at alpha 0.5
    truth = [AnomalyInterval(0, 9)]
    low = point_adjust(truth, {0, 1, 2}, 0.25)
    high = point_adjust(truth, {0, 1, 2}, 0.5)

    ok = (
        f1_a == 1.0
        and f1_b == 22 / 23
        and low == set(range(10))
        and high == {0, 1, 2}
    )
    announce(4, ok, "F1 = 1, F1 = 22/23, and the alpha = 0.25/0.5 pair reproduce exactly")


def test_criterion_5_parser_totality_and_roundtrip(announce):
    rng = random.Random(99)
    alphabet = "[]()/,0123456789 abcdefghijklmnopqrstuvwxyz-\n\t\"'{}"
    for _ in range(100_000):
        s = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 40)))
        dets, diags = parse_index_list(s, 100)
        assert isinstance(dets, list) and isinstance(diags, list)

    kinds = list(AnomalyType)
    clean = 0
    for _ in range(10_000):
        dets = []
        for _ in range(rng.randint(0, 8)):
            a = rng.randint(0, 99)
            b = rng.randint(a, 99)
            dets.append(Detection(AnomalyInterval(a, b), rng.randint(1, 4), rng.choice(kinds)))
        parsed, diags = parse_index_list(serialize_detections(dets), 100)
        assert diags == []
        assert [(d.interval, d.confidence, d.kind) for d in parsed] == [
            (d.interval, d.confidence, d.kind) for d in dets
        ]
        clean += 1
    announce(5, clean == 10_000, "1e5 fuzzed strings survived, 1e4 clean round trips")


def test_criterion_6_windowing_normalization_properties(announce):
    rng = random.Random(7)
    for _ in range(300):
        length = rng.randint(2, 400)
        values = np.array([rng.uniform(-1e3, 1e3) for _ in range(length)])
        series = TimeSeries(values)
        norm = normalize(series)
        assert abs(float(np.mean(norm.values))) <= 1e-9
        assert abs(float(np.std(norm.values)) - 1.0) <= 1e-9

        width = rng.randint(2, length)
        stride = rng.randint(1, max(1, width - 1))
        plan, windows = make_windows(norm, width, stride)
        assert plan.overlap_ratio < 1
        covered = np.zeros(length, dtype=bool)
        for w in windows:
            covered[w.start : w.start + width] = True
        assert covered.all()

        with pytest.raises(ValueError):
            make_windows(norm, width, width)

    constant = normalize(TimeSeries(np.full(50, 3.7)))
    assert np.array_equal(constant.values, np.zeros(50))
    announce(6, True, "coverage, overlap < 1, mean/std bounds, sigma = 0 rule hold")


def test_criterion_7_rendering_constraints(announce):
    values = np.sin(np.arange(150) / 6.0)
    window = Window(index=0, start=0, values=values)

    cap = PlotConfig(width_px=2000, height_px=768)
    img = render_window(window, cap)
    decoded = Image.open(io.BytesIO(img.png))
    assert decoded.size == (2000, 768)

    with pytest.raises(PlotConfigError):
        render_window(window, PlotConfig(width_px=2400, height_px=900))
    with pytest.raises(PlotConfigError):
        render_window(window, PlotConfig(width_px=1600, height_px=769))

    small = PlotConfig(width_px=480, height_px=240)
    assert render_window(window, small).png == render_window(window, small).png

    on = np.asarray(Image.open(io.BytesIO(render_window(window, small).png)).convert("RGB"))
    off_cfg = PlotConfig(width_px=480, height_px=240, grid=False)
    off = np.asarray(Image.open(io.BytesIO(render_window(window, off_cfg).png)).convert("RGB"))
    diff_cols = set(np.nonzero((on != off).any(axis=2).any(axis=0))[0].tolist())
    allowed = set()
    for c in gridline_pixel_columns(150, small):
        allowed.update(range(c - 2, c + 3))
    assert diff_cols and diff_cols <= allowed
    announce(7, True, "cap enforced, bytes deterministic, grid toggle touches gridlines only")


class _CountingGateway:
    def __init__(self, inner):
        self.inner = inner
        self.calls = 0

    def complete(self, req):
        self.calls += 1
        return self.inner.complete(req)


def test_criterion_8_replay_determinism(tmp_path, announce):
    period, length = 50, 900
    t = np.arange(length)
    rng = np.random.default_rng(5)
    series = TimeSeries(
        np.sin(2 * np.pi * t / period) + rng.normal(0, 0.05, length), name="rp"
    )
    flags = np.zeros(length, dtype=bool)
    flags[400:441] = True
    labels = LabelSeries(flags)
    cfg = PipelineConfig(
        width=150, stride=75, plot=PlotConfig(width_px=320, height_px=160)
    )

    cache = CacheStore(tmp_path / "cache")
    live = _CountingGateway(OracleGateway.for_series("rp", labels))
    recorded = run(series, cfg, RecordingGateway(live, cache), labels=labels)
    live_calls = live.calls
    rec_zraw = zraw_to_json(recorded)
    rec_report = result_to_json(
        build_final_result(list(recorded.analyses), recorded.plan, "rp", length)
    )

    replayed = run(series, cfg, ReplayGateway(cache, strict=True), labels=labels)
    rep_zraw = zraw_to_json(replayed)
    rep_report = result_to_json(
        build_final_result(list(replayed.analyses), replayed.plan, "rp", length)
    )
    ok = (
        live_calls > 0
        and live.calls == live_calls
        and rec_zraw == rep_zraw
        and rec_report == rep_report
    )
    announce(8, ok, "strict replay made zero live calls, Z_raw and report byte-identical")


def test_criterion_9_aggregation_equivalence(announce):
    rng = random.Random(17)
    kinds = list(AnomalyType)
    for _ in range(1000):
        length = rng.randint(10, 120)
        width = rng.randint(4, length)
        starts = sorted(set(rng.randint(0, length - width) for _ in range(rng.randint(1, 4))))
        stride = starts[1] - starts[0] if len(starts) > 1 else max(1, width - 1)
        plan = WindowPlan(width=width, stride=stride, starts=tuple(starts))
        analyses = []
        flat = []
        for k, s in enumerate(starts):
            dets = []
            for _ in range(rng.randint(0, 3)):
                a = rng.randint(0, width - 1)
                b = rng.randint(a, width - 1)
                conf = rng.randint(1, 4)
                kind = rng.choice(kinds)
                dets.append(Detection(AnomalyInterval(a, b), conf, kind))
                flat.append((min(a + s, length - 1), min(b + s, length - 1), conf, kind))
            analyses.append(WindowAnalysis(k, tuple(dets)))

        conf, classes = accumulate(analyses, plan, length)
        want_conf, want_classes = brute_accumulate(flat, length)
        assert list(conf) == want_conf
        assert list(classes) == want_classes

        shuffled = analyses[:]
        rng.shuffle(shuffled)
        conf2, classes2 = accumulate(shuffled, plan, length)
        assert np.array_equal(conf, conf2)
        assert classes == classes2

        c_lo, c_hi = sorted((rng.randint(0, 10), rng.randint(0, 10)))
        assert threshold(conf, float(c_hi)) <= threshold(conf, float(c_lo))
    announce(9, True, "1000 instances match brute force; vote order-invariant; threshold monotone")


def test_criterion_10_live_smoke(announce, tmp_path):
    """Optional live smoke run; needs credentials and an opt-in flag.

    Non-deterministic by nature, so it is skipped unless TAMA_LIVE_SMOKE=1
    and TAMA_API_KEY are both set (TAMA_LIVE_BASE_URL overrides the default
    endpoint).
    """
    if os.environ.get("TAMA_LIVE_SMOKE") != "1" or not os.environ.get("TAMA_API_KEY"):
        pytest.skip(
            "[acceptance] criterion 10: SKIP  live smoke needs TAMA_LIVE_SMOKE=1 and TAMA_API_KEY"
        )

    data_dir = tmp_path / "data"
    result = CliRunner().invoke(
        main,
        ["gen-synth", "--out", str(data_dir), "--n-series", "1",
         "--length", "600", "--period", "50", "--seed", "0"],
    )
    assert result.exit_code == 0, result.output
    run_dir = tmp_path / "live"
    args = [
        "detect",
        "--manifest", str(data_dir / "manifest.yaml"),
        "--out", str(run_dir),
        "--backend", "http",
        "--no-save-images",
        "--plot-width", "640",
        "--plot-height", "240",
    ]
    base_url = os.environ.get("TAMA_LIVE_BASE_URL")
    if base_url:
        args += ["--base-url", base_url]
    result = CliRunner().invoke(main, args)
    assert result.exit_code == 0, result.output
    report = json.loads((run_dir / "series_00" / "report.json").read_text())
    announce(10, "anomaly_points" in report, "live run completed and parsed")
