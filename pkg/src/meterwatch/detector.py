"""Sliding-window malfunction detection over a predicted residual series.

The detector compares the observed residual error E with a model's one-day
ahead prediction p. A day exceeds when the observed value falls outside the
band [p - t, p + t], equivalently when the daily prediction error
DPE = |E - p| is strictly greater than t. The area is flagged at the first
window of L consecutive exceeding days, and the window's left edge is the
predicted malfunction start.

t is in the units of the series being compared; detection pipelines here
standardize E first, so the default t of 0.5 is half a training standard
deviation.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
from dataclasses import dataclass

import numpy as np


class DetectorError(ValueError):
    pass


@dataclass(frozen=True)
class DetectionParams:
    threshold: float = 0.5
    window_size: int = 4

    def __post_init__(self):
        if self.threshold <= 0:
            raise DetectorError(f"threshold must be > 0, got {self.threshold}")
        if self.window_size < 1:
            raise DetectorError(f"window_size must be >= 1, got {self.window_size}")


@dataclass
class DetectionResult:
    flagged: bool
    predicted_start: dt.date | None
    lag: int | None
    dpe_series: np.ndarray

    def __post_init__(self):
        if self.flagged != (self.predicted_start is not None):
            raise DetectorError("flagged and predicted_start must agree")


def bounds(predicted: float, threshold: float) -> tuple[float, float]:
    """Upper and lower acceptance bounds around a prediction."""
    return predicted + threshold, predicted - threshold


def dpe(observed: np.ndarray, predicted: np.ndarray) -> np.ndarray:
    """Per-day absolute deviation of observation from prediction."""
    observed = np.asarray(observed, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    if observed.shape != predicted.shape:
        raise DetectorError(f"misaligned series: {observed.shape} vs {predicted.shape}")
    return np.abs(observed - predicted)


def exceedances(dpe_series: np.ndarray, threshold: float) -> np.ndarray:
    """Boolean per day: strictly above threshold, i.e. outside the band."""
    return np.asarray(dpe_series, dtype=np.float64) > threshold


def first_all_exceed_window(dpe_series: np.ndarray, params: DetectionParams) -> int | None:
    """Index of the left edge of the first window of L straight exceedances."""
    dpe_series = np.asarray(dpe_series, dtype=np.float64)
    n = dpe_series.size
    wl = params.window_size
    if n < wl:
        raise DetectorError(f"series length {n} shorter than window {wl}")
    exceed = dpe_series > params.threshold
    run = 0
    for i in range(n):
        run = run + 1 if exceed[i] else 0
        if run >= wl:
            return i - wl + 1
    return None


def sliding_window_detect(
    dpe_series: np.ndarray,
    params: DetectionParams,
    dates: list[dt.date],
    actual_start: dt.date | None = None,
) -> DetectionResult:
    """Scan left to right; flag at the first window whose DPEs all exceed t.

    actual_start (the ground-truth injection date, when known) additionally
    yields the signed lag.
    """
    dpe_series = np.asarray(dpe_series, dtype=np.float64)
    if len(dates) != dpe_series.size:
        raise DetectorError("dates length does not match dpe series")
    edge = first_all_exceed_window(dpe_series, params)
    if edge is None:
        return DetectionResult(False, None, None, dpe_series)
    start = dates[edge]
    lag = compute_lag(start, actual_start) if actual_start is not None else None
    return DetectionResult(True, predicted_start=start, lag=lag, dpe_series=dpe_series)


def compute_lag(predicted_start: dt.date, actual_start: dt.date) -> int:
    """Signed whole days from true start to predicted start (negative = early)."""
    return (predicted_start - actual_start).days


# ---------------------------------------------------------------------------
# report emission
# ---------------------------------------------------------------------------


def detection_to_json_dict(area_id: str, result: DetectionResult, params: DetectionParams) -> dict:
    return {
        "area_id": area_id,
        "flagged": result.flagged,
        "predicted_start": (
            result.predicted_start.isoformat() if result.predicted_start else None
        ),
        "lag": result.lag,
        "params": {"t": params.threshold, "L": params.window_size},
    }


def write_detection_json(path, area_id, result: DetectionResult, params: DetectionParams) -> None:
    with open(path, "w") as fh:
        json.dump(detection_to_json_dict(area_id, result, params), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_daily_csv(path, dates, observed, predicted, params: DetectionParams) -> None:
    """Per-day trace: date,observed_E,predicted_E,DPE,exceeds."""
    observed = np.asarray(observed, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    deviations = dpe(observed, predicted)
    flags = exceedances(deviations, params.threshold)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "observed_E", "predicted_E", "DPE", "exceeds"])
        for d, o, p, v, x in zip(dates, observed, predicted, deviations, flags):
            writer.writerow([d.isoformat(), repr(float(o)), repr(float(p)), repr(float(v)),
                             "true" if x else "false"])
