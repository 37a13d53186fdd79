"""Experiment report bundle.

Collects the artifacts of a full run into plain JSON + CSV files: the
window-size sweep, per-area detection traces with prediction bounds, the
cross-validated classifier comparison (per-fold ROC and PR curves plus
"mean ± std" AUC rows per architecture), the target-rate table, and the
accurate-proportion sweep. Any subset may be missing; the report lists
what was absent and still emits the rest. No plotting engine: the CSVs
are point data any plotting tool can consume.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import TargetRateRow, write_target_rate_csv
from .classifier import CvResult
from .detector import DetectionParams, DetectionResult, detection_to_json_dict
from .metrics import format_mean_std, mean_std, pr_auc, pr_points, roc_auc, roc_points


class ReportError(ValueError):
    pass


@dataclass(frozen=True)
class WindowSweepEntry:
    window_size: int
    train_mse: float
    val_mse: float


@dataclass
class DetectionTrace:
    area_id: str
    dates: list
    observed: np.ndarray
    predicted: np.ndarray
    params: DetectionParams
    result: DetectionResult

    def __post_init__(self):
        self.observed = np.asarray(self.observed, dtype=np.float64)
        self.predicted = np.asarray(self.predicted, dtype=np.float64)
        n = len(self.dates)
        if not (self.observed.size == self.predicted.size == n):
            raise ReportError(
                f"trace {self.area_id!r}: {n} dates, {self.observed.size} observed, "
                f"{self.predicted.size} predicted"
            )


@dataclass(frozen=True)
class CvSection:
    results: list[CvResult]
    labels: np.ndarray  # ground truth per sample, aligned with oof_scores


@dataclass(frozen=True)
class ProportionEntry:
    accurate_proportion: float
    fold_aucs: tuple[float, ...]


@dataclass(frozen=True)
class ReportInputs:
    window_sweep: list[WindowSweepEntry] | None = None
    detection_traces: list[DetectionTrace] | None = None
    cv: CvSection | None = None
    target_rates: list[TargetRateRow] | None = None
    proportion_sweep: list[ProportionEntry] | None = None


@dataclass
class ReportBundle:
    files: list[str] = field(default_factory=list)
    missing: list[str] = field(default_factory=list)
    summary: dict = field(default_factory=dict)


SECTION_NAMES = ("window_sweep", "detection", "cv", "target_rates", "proportion_sweep")


def experiment_report(inputs: ReportInputs, out_dir) -> ReportBundle:
    """Writes every section whose inputs are present; always writes
    report.json, even as an empty skeleton."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bundle = ReportBundle()
    summary: dict = {}

    if inputs.window_sweep is not None:
        summary["window_sweep"] = _emit_window_sweep(inputs.window_sweep, out, bundle)
    else:
        bundle.missing.append("window_sweep")

    if inputs.detection_traces is not None:
        summary["detection"] = _emit_detection(inputs.detection_traces, out, bundle)
    else:
        bundle.missing.append("detection")

    if inputs.cv is not None:
        summary["cv"] = _emit_cv(inputs.cv, out, bundle)
    else:
        bundle.missing.append("cv")

    if inputs.target_rates is not None:
        summary["target_rates"] = _emit_target_rates(inputs.target_rates, out, bundle)
    else:
        bundle.missing.append("target_rates")

    if inputs.proportion_sweep is not None:
        summary["proportion_sweep"] = _emit_proportion_sweep(
            inputs.proportion_sweep, out, bundle)
    else:
        bundle.missing.append("proportion_sweep")

    summary["missing"] = bundle.missing
    bundle.summary = summary
    with open(out / "report.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    bundle.files.append("report.json")
    bundle.files.sort()
    return bundle


def _emit_window_sweep(entries: list[WindowSweepEntry], out: Path,
                       bundle: ReportBundle) -> dict:
    entries = sorted(entries, key=lambda e: e.window_size)
    with open(out / "window_sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["window_size", "train_mse", "val_mse"])
        for e in entries:
            writer.writerow([e.window_size, repr(e.train_mse), repr(e.val_mse)])
    bundle.files.append("window_sweep.csv")
    best = min(entries, key=lambda e: e.val_mse) if entries else None
    return {
        "n_windows": len(entries),
        "best_window_size": best.window_size if best else None,
        "best_val_mse": best.val_mse if best else None,
    }


def _emit_detection(traces: list[DetectionTrace], out: Path,
                    bundle: ReportBundle) -> dict:
    detections = []
    lags = []
    for trace in sorted(traces, key=lambda t: t.area_id):
        name = f"detection_trace_{trace.area_id}.csv"
        t = trace.params.threshold
        with open(out / name, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["date", "observed_E", "predicted_E", "lower", "upper",
                             "dpe", "exceeds"])
            dpe = trace.result.dpe_series
            for i, date in enumerate(trace.dates):
                writer.writerow([
                    date.isoformat(),
                    repr(float(trace.observed[i])),
                    repr(float(trace.predicted[i])),
                    repr(float(trace.predicted[i] - t)),
                    repr(float(trace.predicted[i] + t)),
                    repr(float(dpe[i])),
                    "true" if dpe[i] > t else "false",
                ])
        bundle.files.append(name)
        detections.append(detection_to_json_dict(trace.area_id, trace.result,
                                                 trace.params))
        if trace.result.lag is not None:
            lags.append(trace.result.lag)
    with open(out / "detections.json", "w") as fh:
        json.dump({"areas": detections}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    bundle.files.append("detections.json")
    n_flagged = sum(1 for d in detections if d["flagged"])
    return {
        "n_areas": len(traces),
        "n_flagged": n_flagged,
        "lags_days": lags,
        "mean_lag_days": float(np.mean(lags)) if lags else None,
    }


def _emit_cv(section: CvSection, out: Path, bundle: ReportBundle) -> dict:
    labels = np.asarray(section.labels).astype(int)
    rows = []
    for result in section.results:
        roc_fold, pr_fold = [], []
        roc_rows, pr_rows = [], []
        for fold in sorted(set(int(f) for f in result.fold_of_sample)):
            sel = result.fold_of_sample == fold
            scores = result.oof_scores[sel]
            y = labels[sel]
            roc_fold.append(roc_auc(scores, y))
            pr_fold.append(pr_auc(scores, y))
            for fpr, tpr in roc_points(scores, y):
                roc_rows.append([fold, repr(float(fpr)), repr(float(tpr))])
            for recall, precision in pr_points(scores, y):
                pr_rows.append([fold, repr(float(recall)), repr(float(precision))])
        roc_name = f"roc_points_{result.mode}.csv"
        with open(out / roc_name, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["fold", "fpr", "tpr"])
            writer.writerows(roc_rows)
        bundle.files.append(roc_name)
        pr_name = f"pr_points_{result.mode}.csv"
        with open(out / pr_name, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["fold", "recall", "precision"])
            writer.writerows(pr_rows)
        bundle.files.append(pr_name)
        roc_m, roc_s = mean_std(roc_fold)
        pr_m, pr_s = mean_std(pr_fold)
        rows.append({
            "mode": result.mode,
            "fold_roc_aucs": [float(a) for a in roc_fold],
            "fold_pr_aucs": [float(a) for a in pr_fold],
            "roc_auc_mean": roc_m,
            "roc_auc_std": roc_s,
            "roc_auc": format_mean_std(roc_fold),
            "pr_auc_mean": pr_m,
            "pr_auc_std": pr_s,
            "pr_auc": format_mean_std(pr_fold),
        })
    with open(out / "cv_summary.json", "w") as fh:
        json.dump({"architectures": rows}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    bundle.files.append("cv_summary.json")
    return {"architectures": rows}


def _emit_target_rates(rows: list[TargetRateRow], out: Path,
                       bundle: ReportBundle) -> dict:
    write_target_rate_csv(out / "target_rates.csv", rows)
    bundle.files.append("target_rates.csv")
    models = sorted({r.model for r in rows})
    thresholds = sorted({r.threshold for r in rows})
    return {"models": models, "thresholds": thresholds, "n_rows": len(rows)}


def _emit_proportion_sweep(entries: list[ProportionEntry], out: Path,
                           bundle: ReportBundle) -> dict:
    entries = sorted(entries, key=lambda e: e.accurate_proportion)
    rows = []
    with open(out / "proportion_sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["accurate_proportion", "mean_auc", "std_auc"])
        for e in entries:
            m, s = mean_std(e.fold_aucs)
            writer.writerow([repr(e.accurate_proportion), repr(m), repr(s)])
            rows.append({
                "accurate_proportion": e.accurate_proportion,
                "fold_aucs": [float(a) for a in e.fold_aucs],
                "mean_auc": m,
                "std_auc": s,
            })
    bundle.files.append("proportion_sweep.csv")
    min_mean = min((r["mean_auc"] for r in rows), default=None)
    return {"rows": rows, "min_mean_auc": min_mean}
