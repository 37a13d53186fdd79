import datetime as dt
import json

import numpy as np
import pytest

from meterwatch.baselines import compare_on_detection
from meterwatch.classifier import CvResult
from meterwatch.detector import DetectionParams, sliding_window_detect
from meterwatch.metrics import MetricsError, pr_auc, pr_points, roc_auc, roc_points
from meterwatch.report import (
    CvSection,
    DetectionTrace,
    ProportionEntry,
    ReportError,
    ReportInputs,
    WindowSweepEntry,
    experiment_report,
)


# --- curve points ------------------------------------------------------------


def brute_roc_points(scores, labels):
    pts = [(0.0, 0.0)]
    n_pos = sum(labels)
    n_neg = len(labels) - n_pos
    for theta in sorted(set(scores), reverse=True):
        tp = sum(1 for s, y in zip(scores, labels) if s >= theta and y == 1)
        fp = sum(1 for s, y in zip(scores, labels) if s >= theta and y == 0)
        pts.append((fp / n_neg, tp / n_pos))
    return np.array(pts)


def brute_pr_points(scores, labels):
    pts = []
    n_pos = sum(labels)
    for theta in sorted(set(scores), reverse=True):
        tp = sum(1 for s, y in zip(scores, labels) if s >= theta and y == 1)
        fp = sum(1 for s, y in zip(scores, labels) if s >= theta and y == 0)
        pts.append((tp / n_pos, tp / (tp + fp)))
    return np.array(pts)


def test_roc_points_match_brute_force_sweep():
    rng = np.random.default_rng(0)
    for _ in range(30):
        n = rng.integers(4, 30)
        scores = rng.integers(0, 6, size=n).astype(float)  # plenty of ties
        labels = rng.integers(0, 2, size=n)
        if labels.sum() in (0, n):
            continue
        np.testing.assert_array_equal(roc_points(scores, labels),
                                      brute_roc_points(list(scores), list(labels)))


def test_pr_points_match_brute_force_sweep():
    rng = np.random.default_rng(1)
    for _ in range(30):
        n = rng.integers(4, 30)
        scores = rng.integers(0, 6, size=n).astype(float)
        labels = rng.integers(0, 2, size=n)
        if labels.sum() == 0:
            continue
        np.testing.assert_array_equal(pr_points(scores, labels),
                                      brute_pr_points(list(scores), list(labels)))


def test_roc_points_endpoints():
    pts = roc_points([0.9, 0.1, 0.8, 0.3], [1, 0, 1, 0])
    assert tuple(pts[0]) == (0.0, 0.0)
    assert tuple(pts[-1]) == (1.0, 1.0)


def test_pr_auc_equals_step_integral_of_pr_points():
    rng = np.random.default_rng(2)
    for _ in range(20):
        scores = rng.normal(size=25)
        labels = rng.integers(0, 2, size=25)
        if labels.sum() == 0:
            continue
        pts = pr_points(scores, labels)
        recalls = np.concatenate([[0.0], pts[:, 0]])
        integral = float(np.sum(pts[:, 1] * np.diff(recalls)))
        assert abs(integral - pr_auc(scores, labels)) < 1e-12


def test_curve_points_reject_degenerate():
    with pytest.raises(MetricsError):
        roc_points([0.1, 0.2], [1, 1])
    with pytest.raises(MetricsError):
        pr_points([0.1, 0.2], [0, 0])


# --- report bundle ------------------------------------------------------------


def test_empty_inputs_emit_valid_skeleton(tmp_path):
    bundle = experiment_report(ReportInputs(), tmp_path)
    assert bundle.files == ["report.json"]
    assert set(bundle.missing) == {"window_sweep", "detection", "cv",
                                   "target_rates", "proportion_sweep"}
    data = json.loads((tmp_path / "report.json").read_text())
    assert sorted(data["missing"]) == sorted(bundle.missing)


def make_trace(area_id="A0", flag=True):
    dates = [dt.date(2020, 1, 1) + dt.timedelta(days=i) for i in range(12)]
    predicted = np.zeros(12)
    observed = np.zeros(12)
    if flag:
        observed[6:] = 2.0  # DPE 2.0 > t from day 6 on
    params = DetectionParams(threshold=0.5, window_size=4)
    dpe = np.abs(observed - predicted)
    result = sliding_window_detect(dpe, params, dates, actual_start=dates[5])
    return DetectionTrace(area_id=area_id, dates=dates, observed=observed,
                          predicted=predicted, params=params, result=result)


def test_detection_section(tmp_path):
    bundle = experiment_report(
        ReportInputs(detection_traces=[make_trace("A1", True), make_trace("A0", False)]),
        tmp_path)
    assert "detections.json" in bundle.files
    assert "detection_trace_A0.csv" in bundle.files
    assert "detection_trace_A1.csv" in bundle.files
    det = json.loads((tmp_path / "detections.json").read_text())
    by_area = {d["area_id"]: d for d in det["areas"]}
    assert by_area["A1"]["flagged"] is True
    assert by_area["A0"]["flagged"] is False
    assert bundle.summary["detection"]["n_flagged"] == 1
    assert bundle.summary["detection"]["lags_days"] == [1]
    lines = (tmp_path / "detection_trace_A1.csv").read_text().strip().split("\n")
    assert lines[0] == "date,observed_E,predicted_E,lower,upper,dpe,exceeds"
    assert len(lines) == 13
    row = lines[1].split(",")
    assert row[0] == "2020-01-01"
    assert float(row[4]) == 0.5  # upper = predicted + t
    assert float(row[3]) == -0.5
    assert row[6] == "false"
    assert lines[8].split(",")[6] == "true"


def test_window_sweep_section(tmp_path):
    entries = [WindowSweepEntry(30, 0.5, 0.9), WindowSweepEntry(40, 0.4, 0.6),
               WindowSweepEntry(50, 0.3, 0.8)]
    bundle = experiment_report(ReportInputs(window_sweep=entries), tmp_path)
    assert bundle.summary["window_sweep"]["best_window_size"] == 40
    lines = (tmp_path / "window_sweep.csv").read_text().strip().split("\n")
    assert lines[0] == "window_size,train_mse,val_mse"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["30", "40", "50"]


def synthetic_cv_result(mode, seed):
    rng = np.random.default_rng(seed)
    labels = np.array([0, 1] * 10)
    folds = np.array([0, 0, 1, 1] * 5)
    scores = labels * 0.5 + rng.uniform(0, 0.5, size=20)
    fold_aucs = [roc_auc(scores[folds == f], labels[folds == f]) for f in (0, 1)]
    return CvResult(mode=mode, fold_of_sample=folds, oof_scores=scores,
                    fold_aucs=fold_aucs, models=[]), labels


def test_cv_section(tmp_path):
    r_dual, labels = synthetic_cv_result("dual", 3)
    r_seq, _ = synthetic_cv_result("sequence", 4)
    bundle = experiment_report(
        ReportInputs(cv=CvSection(results=[r_dual, r_seq], labels=labels)), tmp_path)
    summary = json.loads((tmp_path / "cv_summary.json").read_text())
    rows = summary["architectures"]
    assert [r["mode"] for r in rows] == ["dual", "sequence"]
    assert rows[0]["fold_roc_aucs"] == [float(a) for a in r_dual.fold_aucs]
    assert "±" in rows[0]["roc_auc"]
    for mode in ("dual", "sequence"):
        assert f"roc_points_{mode}.csv" in bundle.files
        assert f"pr_points_{mode}.csv" in bundle.files
        lines = (tmp_path / f"roc_points_{mode}.csv").read_text().strip().split("\n")
        assert lines[0] == "fold,fpr,tpr"
        assert len(lines) > 2


def test_target_rate_and_proportion_sections(tmp_path):
    rows = compare_on_detection({"lstm": np.array([1.0, 3.0])},
                                np.array([1.0, 1.0]), [0.5, 8.0])
    sweep = [ProportionEntry(0.5, (0.8, 0.9)), ProportionEntry(0.9, (0.7, 0.75))]
    bundle = experiment_report(
        ReportInputs(target_rates=rows, proportion_sweep=sweep), tmp_path)
    assert bundle.summary["target_rates"]["models"] == ["lstm"]
    assert bundle.summary["proportion_sweep"]["min_mean_auc"] == pytest.approx(0.725)
    lines = (tmp_path / "proportion_sweep.csv").read_text().strip().split("\n")
    assert lines[0] == "accurate_proportion,mean_auc,std_auc"
    assert lines[1].startswith("0.5,")


def test_report_deterministic_bytes(tmp_path):
    def run(d):
        r_dual, labels = synthetic_cv_result("dual", 3)
        experiment_report(ReportInputs(
            window_sweep=[WindowSweepEntry(30, 0.5, 0.9)],
            detection_traces=[make_trace()],
            cv=CvSection(results=[r_dual], labels=labels),
            target_rates=compare_on_detection({"m": np.array([1.0])},
                                              np.array([0.0]), [0.5]),
            proportion_sweep=[ProportionEntry(0.5, (0.8, 0.9))],
        ), d)

    d1 = tmp_path / "r1"
    d2 = tmp_path / "r2"
    run(d1)
    run(d2)
    names = sorted(p.name for p in d1.iterdir())
    assert names == sorted(p.name for p in d2.iterdir())
    for name in names:
        assert (d1 / name).read_bytes() == (d2 / name).read_bytes(), name


def test_trace_rejects_misaligned():
    dates = [dt.date(2020, 1, 1), dt.date(2020, 1, 2)]
    params = DetectionParams()
    result = sliding_window_detect(np.zeros(4), params,
                                   [dt.date(2020, 1, 1) + dt.timedelta(days=i)
                                    for i in range(4)])
    with pytest.raises(ReportError):
        DetectionTrace("A0", dates, np.zeros(3), np.zeros(2), params, result)


def test_all_bundle_files_exist(tmp_path):
    bundle = experiment_report(
        ReportInputs(window_sweep=[WindowSweepEntry(10, 1.0, 2.0)]), tmp_path)
    for name in bundle.files:
        assert (tmp_path / name).exists()
    assert bundle.files == sorted(bundle.files)
