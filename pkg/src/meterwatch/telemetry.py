"""Meter telemetry data model: usage records, dataset assembly, cleaning,
calendar encoding, and the daily residual error of a residential area.

A residential area has one master meter (assumed accurate) and ``n``
submeters. The daily residual error is the master reading minus the sum of
all submeter readings for that day (``SSub``); it absorbs transmission
losses, so on plausible data it is nonnegative. Days where ``SSub`` exceeds
the master reading are physically impossible and are dropped during
cleaning, as are days with missing readings.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
from dataclasses import dataclass, field

import numpy as np

USAGE_CSV_HEADER = ["region_id", "meter_id", "system_id", "date", "usage"]

# Reasons attached to dates removed by drop_invalid_days.
REASON_SSUB_OVERFLOW = "ssub_overflow"
REASON_MISSING = "missing"


class TelemetryError(ValueError):
    """Raised for malformed or inconsistent telemetry data."""


@dataclass(frozen=True)
class UsageRecord:
    """One daily usage reading for one meter.

    ``(meter_id, date)`` is the primary key within a cleaned dataset;
    ``system_id`` is carried through ingestion but not consumed downstream.
    """

    region_id: str
    meter_id: str
    system_id: str
    date: dt.date
    usage: float

    def __post_init__(self) -> None:
        if self.usage < 0:
            raise TelemetryError(
                f"negative usage {self.usage} for meter {self.meter_id} on {self.date}"
            )


@dataclass(frozen=True)
class RemovedDay:
    """A date dropped during cleaning, with the reason it was dropped."""

    date: dt.date
    reason: str


@dataclass
class UsageDataset:
    """Daily usage of one residential area: a master meter plus n submeters.

    ``master`` maps date to the master meter reading; ``submeters`` maps
    meter id to that submeter's date-to-reading map. After cleaning, every
    submeter date is also a master date.
    """

    area_id: str
    master: dict[dt.date, float]
    submeters: dict[str, dict[dt.date, float]]

    def __post_init__(self) -> None:
        if not self.submeters:
            raise TelemetryError(f"area {self.area_id} has no submeters")
        if not self.master:
            raise TelemetryError(f"area {self.area_id} has no master readings")

    @property
    def n_submeters(self) -> int:
        return len(self.submeters)

    @property
    def date_range(self) -> tuple[dt.date, dt.date]:
        dates = self.master.keys()
        return (min(dates), max(dates))

    def dates(self) -> list[dt.date]:
        """Master dates in increasing order."""
        return sorted(self.master.keys())

    def meter_ids(self) -> list[str]:
        """Submeter ids in a stable (sorted) order."""
        return sorted(self.submeters.keys())


@dataclass(frozen=True)
class CalendarFeatures:
    """22-dim one-hot calendar encoding plus the day offset from a base date.

    Layout of the one-hot blocks is fixed: [Mon..Sun][Jan..Dec][year0..year2].
    """

    com_date: int
    weekday_onehot: tuple[int, ...]
    month_onehot: tuple[int, ...]
    year_onehot: tuple[int, ...]

    def as_array(self) -> np.ndarray:
        """The 22 one-hot values as a float vector."""
        return np.array(
            self.weekday_onehot + self.month_onehot + self.year_onehot, dtype=np.float64
        )


@dataclass
class ResidualSeries:
    """A dated series of daily residual errors (kWh, signed)."""

    dates: list[dt.date]
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if len(self.dates) != len(self.values):
            raise TelemetryError("dates and values length mismatch")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise TelemetryError("dates must be strictly increasing")

    def __len__(self) -> int:
        return len(self.dates)


def dedupe_rows(rows: list[UsageRecord]) -> list[UsageRecord]:
    """Keep only the first reading per (meter_id, date); later ones are redundant.

    Relative order of surviving rows is preserved.
    """
    seen: set[tuple[str, dt.date]] = set()
    out = []
    for row in rows:
        key = (row.meter_id, row.date)
        if key in seen:
            continue
        seen.add(key)
        out.append(row)
    return out


def _ssub(dataset: UsageDataset, date: dt.date) -> float:
    # Sum in sorted-meter order so the result is independent of dict order.
    return float(np.sum([dataset.submeters[m][date] for m in dataset.meter_ids()]))


def drop_invalid_days(dataset: UsageDataset) -> tuple[UsageDataset, list[RemovedDay]]:
    """Remove days that cannot be compared or are physically impossible.

    A day survives only if the master and every submeter have a reading and
    the submeter sum does not exceed the master reading (equality is fine).
    Returns the cleaned dataset and the removed days with reasons.
    """
    meter_ids = dataset.meter_ids()
    all_dates: set[dt.date] = set(dataset.master)
    for readings in dataset.submeters.values():
        all_dates.update(readings)

    removed: list[RemovedDay] = []
    kept: list[dt.date] = []
    for date in sorted(all_dates):
        if date not in dataset.master or any(
            date not in dataset.submeters[m] for m in meter_ids
        ):
            removed.append(RemovedDay(date, REASON_MISSING))
        elif _ssub(dataset, date) > dataset.master[date]:
            removed.append(RemovedDay(date, REASON_SSUB_OVERFLOW))
        else:
            kept.append(date)

    if not kept:
        raise TelemetryError(f"area {dataset.area_id}: no valid days survive cleaning")

    cleaned = UsageDataset(
        area_id=dataset.area_id,
        master={d: dataset.master[d] for d in kept},
        submeters={
            m: {d: dataset.submeters[m][d] for d in kept} for m in meter_ids
        },
    )
    return cleaned, removed


def encode_date(
    date: dt.date,
    base_date: dt.date,
    year_range: tuple[int, int] | None = None,
) -> CalendarFeatures:
    """Encode a date as day offset plus 22 one-hot values (7+12+3).

    ``year_range`` is the inclusive 3-year span (first_year, first_year + 2);
    it defaults to the span starting at the base date's year.
    """
    if year_range is None:
        year_range = (base_date.year, base_date.year + 2)
    first_year, last_year = year_range
    if last_year - first_year != 2:
        raise TelemetryError(f"year_range must span exactly 3 years, got {year_range}")
    if date < base_date:
        raise TelemetryError(f"date {date} precedes base date {base_date}")
    if not (first_year <= date.year <= last_year):
        raise TelemetryError(f"year {date.year} outside range {year_range}")

    weekday = [0] * 7
    weekday[date.weekday()] = 1
    month = [0] * 12
    month[date.month - 1] = 1
    year = [0] * 3
    year[date.year - first_year] = 1
    return CalendarFeatures(
        com_date=(date - base_date).days,
        weekday_onehot=tuple(weekday),
        month_onehot=tuple(month),
        year_onehot=tuple(year),
    )


def residual_error(dataset: UsageDataset, date: dt.date) -> float:
    """Master reading minus the submeter sum for one day (kWh)."""
    if date not in dataset.master:
        raise TelemetryError(f"no master reading for {date}")
    for m in dataset.meter_ids():
        if date not in dataset.submeters[m]:
            raise TelemetryError(f"no reading for submeter {m} on {date}")
    return dataset.master[date] - _ssub(dataset, date)


def residual_series(dataset: UsageDataset) -> ResidualSeries:
    """Residual error for every master date, in date order."""
    dates = dataset.dates()
    values = np.array([residual_error(dataset, d) for d in dates])
    return ResidualSeries(dates=dates, values=values)


# ---------------------------------------------------------------------------
# CSV / JSON interchange
# ---------------------------------------------------------------------------

MASTER_METER_ID = "MASTER"


def read_usage_csv(path) -> list[UsageRecord]:
    """Read usage rows from CSV with the canonical 5-column header."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != USAGE_CSV_HEADER:
            raise TelemetryError(
                f"unexpected usage CSV header {header!r}, want {USAGE_CSV_HEADER!r}"
            )
        rows = []
        for line in reader:
            if not line:
                continue
            region_id, meter_id, system_id, date_s, usage_s = line
            rows.append(
                UsageRecord(
                    region_id=region_id,
                    meter_id=meter_id,
                    system_id=system_id,
                    date=dt.date.fromisoformat(date_s),
                    usage=float(usage_s),
                )
            )
    return rows


def write_usage_csv(path, rows: list[UsageRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(USAGE_CSV_HEADER)
        for row in rows:
            writer.writerow(
                [row.region_id, row.meter_id, row.system_id, row.date.isoformat(), repr(row.usage)]
            )


def records_from_dataset(dataset: UsageDataset) -> list[UsageRecord]:
    """Flatten a dataset to rows; the master appears under MASTER_METER_ID."""
    rows = []
    for date in dataset.dates():
        rows.append(
            UsageRecord(dataset.area_id, MASTER_METER_ID, "sys0", date, dataset.master[date])
        )
    for m in dataset.meter_ids():
        for date in sorted(dataset.submeters[m]):
            rows.append(
                UsageRecord(dataset.area_id, m, f"sys-{m}", date, dataset.submeters[m][date])
            )
    return rows


def dataset_from_records(
    rows: list[UsageRecord],
    area_id: str | None = None,
    master_id: str = MASTER_METER_ID,
) -> UsageDataset:
    """Assemble a dataset from rows; rows with ``master_id`` feed the master map."""
    if not rows:
        raise TelemetryError("no rows")
    if area_id is None:
        area_id = rows[0].region_id
    master: dict[dt.date, float] = {}
    submeters: dict[str, dict[dt.date, float]] = {}
    for row in rows:
        if row.region_id != area_id:
            continue
        if row.meter_id == master_id:
            master[row.date] = row.usage
        else:
            submeters.setdefault(row.meter_id, {})[row.date] = row.usage
    return UsageDataset(area_id=area_id, master=master, submeters=submeters)


def write_removed_days_report(path, removed: list[RemovedDay]) -> None:
    """JSON report of cleaning removals, one entry per reason."""
    report = []
    for reason in (REASON_SSUB_OVERFLOW, REASON_MISSING):
        dates = sorted(r.date for r in removed if r.reason == reason)
        if dates:
            report.append(
                {"removed_dates": [d.isoformat() for d in dates], "reason": reason}
            )
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
