"""Synthetic residential-area generation and controlled malfunction injection.

Each generated area has n submeters whose daily usage follows
base x seasonal sinusoid x weekday multiplier + Gaussian noise, clamped at 0.
The master meter reads the submeter sum plus a strictly positive overhead
(transmission and other losses), so the clean residual error equals the
overhead and cleaning removes nothing.

A malfunction makes a submeter over-report with a linearly growing relative
drift: from its start day s onward, reading(i) = (1 + alpha*(i-s))*usage(i)
plus small Gaussian noise, clamped at 0. Master readings are never modified,
so the area's residual error drifts downward after the earliest start day.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import json
import math
import zlib
from dataclasses import dataclass

import numpy as np

from .telemetry import UsageDataset

DAYS_PER_YEAR = 365.25

LABEL_ACCURATE = "accurate"
LABEL_INACCURATE = "inaccurate"


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class AreaConfig:
    """Knobs for one synthetic area.

    The jitter fields spread per-submeter behavior around the shared means;
    all default to 0 so the degenerate config (no noise, no season, flat
    weekdays) yields every submeter constant at base_usage_mean. Overhead is
    master_overhead_mean scaled by a monthly profile plus a weekday offset
    plus noise, clamped positive, which keeps the clean residual error a
    near-deterministic function of the calendar.
    """

    n_submeters: int
    n_days: int
    base_usage_mean: float = 8.0
    seasonal_amplitude: float = 2.0
    weekday_effect: tuple[float, ...] = (1.0,) * 7
    noise_sigma: float = 0.4
    master_overhead_mean: float = 2.0
    seed: int = 0
    start_date: dt.date = dt.date(2014, 1, 6)
    # per-submeter heterogeneity (relative spreads, 0 = identical submeters)
    base_usage_spread: float = 0.0
    seasonal_amplitude_jitter: float = 0.0
    seasonal_phase_jitter_days: float = 0.0
    noise_sigma_jitter: float = 0.0
    # slow bounded occupancy wander: log-usage follows an AR(1) with step
    # sigma usage_walk_sigma and persistence usage_walk_rho; 0 disables it
    # (and leaves the rng stream untouched for configs that predate the knob)
    usage_walk_sigma: float = 0.0
    usage_walk_rho: float = 0.995
    # overhead shape
    overhead_month_profile: tuple[float, ...] = (1.0,) * 12
    overhead_weekday_delta: tuple[float, ...] = (0.0,) * 7
    overhead_sigma: float = 0.0

    def __post_init__(self) -> None:
        if self.n_submeters < 1:
            raise SimulationError(f"n_submeters must be >= 1, got {self.n_submeters}")
        if self.n_days < 1:
            raise SimulationError(f"n_days must be >= 1, got {self.n_days}")
        if self.master_overhead_mean <= 0:
            raise SimulationError("master_overhead_mean must be > 0")
        if len(self.weekday_effect) != 7:
            raise SimulationError("weekday_effect needs 7 multipliers")
        if len(self.overhead_month_profile) != 12:
            raise SimulationError("overhead_month_profile needs 12 values")
        if len(self.overhead_weekday_delta) != 7:
            raise SimulationError("overhead_weekday_delta needs 7 values")
        if self.usage_walk_sigma < 0:
            raise SimulationError("usage_walk_sigma must be >= 0")
        if not 0.0 <= self.usage_walk_rho < 1.0:
            raise SimulationError("usage_walk_rho must be in [0, 1)")


@dataclass(frozen=True)
class InjectionSpec:
    """Which submeters malfunction, from which day, and how noisily.

    targets maps meter_id to its start day index s (0-based, in date order).
    alpha is the per-day relative drift rate.
    """

    targets: dict[str, int]
    alpha: float = 0.01
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise SimulationError("alpha must be >= 0")
        for m, s in self.targets.items():
            if s < 0:
                raise SimulationError(f"start day for {m} must be >= 0, got {s}")

    def earliest_start(self) -> int | None:
        """First malfunctioning day index across targets, None if no targets."""
        return min(self.targets.values()) if self.targets else None


@dataclass
class LabeledArea:
    """A post-injection area with its clean twin and ground-truth labels."""

    dataset: UsageDataset
    clean_dataset: UsageDataset
    spec: InjectionSpec
    labels: dict[str, str]

    def __post_init__(self) -> None:
        marked = {m for m, lab in self.labels.items() if lab == LABEL_INACCURATE}
        if marked != set(self.spec.targets):
            raise SimulationError("labels disagree with injection targets")


def _meter_ids(n: int) -> list[str]:
    return [f"sub{j:02d}" for j in range(n)]


def generate_area(config: AreaConfig, area_id: str = "area000") -> UsageDataset:
    """Build one clean synthetic area, deterministic given config.seed."""
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    meters = _meter_ids(config.n_submeters)
    dates = [config.start_date + dt.timedelta(days=i) for i in range(config.n_days)]
    t = np.arange(config.n_days, dtype=np.float64)
    weekdays = np.array([d.weekday() for d in dates])
    months = np.array([d.month - 1 for d in dates])
    wd_mult = np.asarray(config.weekday_effect, dtype=np.float64)[weekdays]

    # Per-meter parameter draws come first, in meter-id order, then the daily
    # noise per meter, then the overhead noise; the draw order is part of the
    # determinism contract.
    per_meter = {}
    for m in meters:
        u = rng.uniform(-1.0, 1.0, size=4)
        per_meter[m] = dict(
            base=config.base_usage_mean * (1.0 + config.base_usage_spread * u[0]),
            amp=config.seasonal_amplitude * (1.0 + config.seasonal_amplitude_jitter * u[1]),
            phase=config.seasonal_phase_jitter_days * u[2],
            sigma=max(config.noise_sigma * (1.0 + config.noise_sigma_jitter * u[3]), 0.0),
        )

    submeters: dict[str, dict[dt.date, float]] = {}
    for m in meters:
        p = per_meter[m]
        seasonal = 1.0
        if config.base_usage_mean > 0:
            seasonal = 1.0 + (p["amp"] / config.base_usage_mean) * np.sin(
                2.0 * np.pi * (t + p["phase"]) / DAYS_PER_YEAR
            )
        level = p["base"] * seasonal * wd_mult
        if config.usage_walk_sigma > 0.0:
            steps = rng.normal(0.0, config.usage_walk_sigma, config.n_days)
            walk = np.empty(config.n_days)
            acc = 0.0
            for i in range(config.n_days):
                acc = config.usage_walk_rho * acc + steps[i]
                walk[i] = acc
            level = level * np.exp(walk)
        usage = level + rng.normal(0.0, 1.0, config.n_days) * p["sigma"]
        usage = np.maximum(usage, 0.0)
        submeters[m] = {d: float(v) for d, v in zip(dates, usage)}

    month_profile = np.asarray(config.overhead_month_profile, dtype=np.float64)[months]
    wd_delta = np.asarray(config.overhead_weekday_delta, dtype=np.float64)[weekdays]
    overhead = (
        config.master_overhead_mean * month_profile
        + wd_delta
        + rng.normal(0.0, 1.0, config.n_days) * config.overhead_sigma
    )
    overhead = np.maximum(overhead, 1e-9)  # keep E strictly positive

    master: dict[dt.date, float] = {}
    for i, d in enumerate(dates):
        ssub = float(np.sum([submeters[m][d] for m in sorted(submeters)]))
        master[d] = ssub + float(overhead[i])

    return UsageDataset(area_id=area_id, master=master, submeters=submeters)


def inject_malfunction(
    series: dict[dt.date, float], spec: InjectionSpec, meter_id: str
) -> dict[dt.date, float]:
    """Apply the linear-drift malfunction to one submeter's series.

    The noise stream is seeded by (spec.seed, crc32(meter_id)) so a target's
    readings do not depend on which other meters are targeted.
    """
    if meter_id not in spec.targets:
        raise SimulationError(f"{meter_id} is not an injection target")
    s = spec.targets[meter_id]
    dates = sorted(series)
    if s >= len(dates):
        raise SimulationError(f"start day {s} >= series length {len(dates)}")
    rng = np.random.default_rng(np.random.SeedSequence((spec.seed, zlib.crc32(meter_id.encode()))))
    out = dict(series)
    for i in range(s, len(dates)):
        d = dates[i]
        noise = float(rng.normal(0.0, spec.noise_sigma)) if spec.noise_sigma > 0 else 0.0
        out[d] = max((1.0 + spec.alpha * (i - s)) * series[d] + noise, 0.0)
    return out


def inject_area(dataset: UsageDataset, spec: InjectionSpec) -> UsageDataset:
    """Apply the injection to every target submeter; master stays unmodified."""
    missing = set(spec.targets) - set(dataset.submeters)
    if missing:
        raise SimulationError(f"targets not in dataset: {sorted(missing)}")
    submeters = {
        m: inject_malfunction(readings, spec, m) if m in spec.targets else dict(readings)
        for m, readings in dataset.submeters.items()
    }
    return UsageDataset(
        area_id=dataset.area_id, master=dict(dataset.master), submeters=submeters
    )


def make_labeled_area(
    config: AreaConfig,
    spec: InjectionSpec,
    area_id: str = "area000",
) -> LabeledArea:
    """Generate a clean area and apply one injection spec to it."""
    clean = generate_area(config, area_id=area_id)
    injected = inject_area(clean, spec)
    labels = {
        m: LABEL_INACCURATE if m in spec.targets else LABEL_ACCURATE
        for m in clean.meter_ids()
    }
    return LabeledArea(dataset=injected, clean_dataset=clean, spec=spec, labels=labels)


def make_labeled_corpus(
    config: AreaConfig,
    fraction_inaccurate: float = 0.30,
    n_areas: int = 1,
    seed: int = 0,
    start_window: tuple[float, float] = (0.25, 0.75),
    n_clean_areas: int = 0,
    injection_noise_sigma: float | None = None,
    alpha: float = 0.01,
) -> list[LabeledArea]:
    """Generate a corpus of labeled areas, deterministic given seed.

    The first (n_areas - n_clean_areas) areas get ceil(fraction * n)
    malfunctioning submeters each, chosen without replacement, with start
    days uniform over the interior window [lo, hi] given as fractions of
    n_days. The remaining areas are clean (empty targets). Each area's state
    derives from (seed, area_index), so the corpus is order-independent.
    """
    if not (0.0 < fraction_inaccurate < 1.0):
        raise SimulationError("fraction_inaccurate must be in (0, 1)")
    if not (0 <= n_clean_areas <= n_areas):
        raise SimulationError("n_clean_areas must be in [0, n_areas]")
    lo_f, hi_f = start_window
    if not (0.0 <= lo_f <= hi_f < 1.0):
        raise SimulationError(f"bad start window {start_window}")
    if injection_noise_sigma is None:
        injection_noise_sigma = 0.01 * config.base_usage_mean

    n_targets = math.ceil(fraction_inaccurate * config.n_submeters)
    lo = math.ceil(lo_f * config.n_days)
    hi = max(math.floor(hi_f * config.n_days), lo)

    areas = []
    for idx in range(n_areas):
        area_seed_seq = np.random.SeedSequence((seed, idx))
        area_seed, inj_seed = (int(s) for s in area_seed_seq.generate_state(2))
        area_cfg = dataclasses.replace(config, seed=area_seed)
        malfunctioning = idx < n_areas - n_clean_areas
        if malfunctioning:
            if n_targets == 0:
                raise SimulationError("fraction yields zero targets")
            rng = np.random.default_rng(np.random.SeedSequence((seed, idx, 1)))
            meters = _meter_ids(config.n_submeters)
            chosen = sorted(rng.choice(len(meters), size=n_targets, replace=False).tolist())
            targets = {
                meters[j]: int(rng.integers(lo, hi + 1)) for j in chosen
            }
        else:
            targets = {}
        spec = InjectionSpec(
            targets=targets, alpha=alpha, noise_sigma=injection_noise_sigma, seed=inj_seed
        )
        areas.append(make_labeled_area(area_cfg, spec, area_id=f"area{idx:03d}"))
    return areas


# ---------------------------------------------------------------------------
# labels JSON interchange
# ---------------------------------------------------------------------------


def labels_to_json_dict(area: LabeledArea) -> dict:
    return {
        "area_id": area.dataset.area_id,
        "labels": {m: area.labels[m] for m in sorted(area.labels)},
        "spec": {
            "targets": {m: area.spec.targets[m] for m in sorted(area.spec.targets)},
            "alpha": area.spec.alpha,
            "noise_sigma_N": area.spec.noise_sigma,
            "seed": area.spec.seed,
        },
    }


def write_labels_json(path, area: LabeledArea) -> None:
    with open(path, "w") as fh:
        json.dump(labels_to_json_dict(area), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_labels_json(path) -> tuple[str, dict[str, str], InjectionSpec]:
    with open(path) as fh:
        blob = json.load(fh)
    spec = InjectionSpec(
        targets={m: int(s) for m, s in blob["spec"]["targets"].items()},
        alpha=float(blob["spec"]["alpha"]),
        noise_sigma=float(blob["spec"]["noise_sigma_N"]),
        seed=int(blob["spec"]["seed"]),
    )
    return blob["area_id"], dict(blob["labels"]), spec
