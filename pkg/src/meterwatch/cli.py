"""Command-line workflow wiring the full monitoring loop end to end:

    generate -> clean -> train-predictor -> detect -> train-classifier
             -> classify -> evaluate

plus a `pipeline` command that runs every stage in order. One JSON config
document drives everything; command-line flags override file values; every
default equals the owning module's default. Each run writes a manifest
(config snapshot, seed, artifact hashes). Timestamps live only in the
manifest, so identical config+seed reproduces byte-identical artifacts.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import copy
import dataclasses
import datetime as dt
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import zlib

from . import baselines as bl
from . import classifier as clf
from . import detector as det
from . import predictor as pred
from . import report as rpt
from . import simulate as sim
from . import telemetry as tel
from .metrics import format_mean_std, pr_auc, roc_auc

STAGES = ("generate", "clean", "train-predictor", "detect",
          "train-classifier", "classify", "evaluate")


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    pass


DEFAULT_CONFIG = {
    "seed": 0,
    "out_dir": "meterwatch_run",
    "jobs": 1,
    "simgen": {
        "n_areas": 1,
        "n_clean_areas": 0,
        "fraction_inaccurate": 0.30,
        "start_window": [0.25, 0.75],
        "alpha": 0.01,
        "injection_noise_sigma": None,
        "area": {
            "n_submeters": 10,
            "n_days": 770,
            "base_usage_mean": 8.0,
            "seasonal_amplitude": 2.0,
            "weekday_effect": [1.0] * 7,
            "noise_sigma": 0.4,
            "master_overhead_mean": 2.0,
            "start_date": "2014-01-06",
            "base_usage_spread": 0.0,
            "seasonal_amplitude_jitter": 0.0,
            "seasonal_phase_jitter_days": 0.0,
            "noise_sigma_jitter": 0.0,
            "usage_walk_sigma": 0.0,
            "usage_walk_rho": 0.995,
            "overhead_month_profile": [1.0] * 12,
            "overhead_weekday_delta": [0.0] * 7,
            "overhead_sigma": 0.0,
        },
    },
    "predictor": {
        "window_size": 40,
        "hidden_dims": [30, 30],
        "epochs": 200,
        "learning_rate": 0.001,
        "batch_size": 64,
        "val_fraction": 0.1,
        "patience": 20,
        # feature days used for training; null = all but n_test_days
        "train_days": None,
        "n_test_days": 27,
        # extra window sizes to train on the first area for the sweep table
        "window_sweep": [],
    },
    "detector": {
        "threshold": 0.5,
        "window_size": 4,
        # detection scans feature days [train_days, end_day); null = to the end
        "end_day": None,
    },
    "classifier": {
        "series_length": 128,
        "rp_mode": "binary",
        "eps_percentile": 10.0,
        "seq_filters": [8, 16],
        "seq_kernels": [7, 5],
        "seq_pool": 2,
        "mat_filters": [8, 16],
        "mat_kernels": [5, 3],
        "mat_strides": [2, 2],
        "mat_pool": 2,
        "merge_width": 32,
        "merge": "add",
        "epochs": 30,
        "learning_rate": 0.003,
        "batch_size": 32,
        "folds": 5,
        "modes": ["dual", "sequence"],
        "score_threshold": 0.5,
    },
    "baselines": {
        "enabled": True,
        "thresholds": [0.5, 1.0, 2.0, 4.0, 8.0],
        # which area feeds the target-rate table; null = first flagged area
        "area_id": None,
        "elastic_net": {"lam1": 0.1, "lam2": 0.1},
        "gbr": {"n_trees": 100, "depth": 3, "learning_rate": 0.1},
    },
    "evaluate": {
        # accurate-meter proportions to re-run classifier CV on, e.g. [0.5, 0.7, 0.9]
        "proportion_sweep": [],
        "sweep_n_areas": 6,
        "sweep_seed_offset": 1000,
    },
}


def _merge_config(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        dotted = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key {dotted!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {dotted!r} must be an object")
            out[key] = _merge_config(base[key], value, dotted)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: str | None, overrides: dict | None = None) -> dict:
    """Defaults <- config file <- flag overrides, rejecting unknown keys."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        try:
            with open(path) as fh:
                file_cfg = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}")
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        cfg = _merge_config(cfg, file_cfg)
    if overrides:
        cfg = _merge_config(cfg, overrides)
    return cfg


@dataclass
class RunSettings:
    raw: dict
    seed: int
    out_dir: Path
    jobs: int
    area_config: sim.AreaConfig
    predictor_config: pred.PredictorConfig
    detection_params: det.DetectionParams
    tsrp_config: clf.TsRpConfig

    @property
    def data_dir(self) -> Path:
        return self.out_dir / "data"

    @property
    def cleaned_dir(self) -> Path:
        return self.out_dir / "cleaned"

    @property
    def predictor_dir(self) -> Path:
        return self.out_dir / "predictor"

    @property
    def predictions_dir(self) -> Path:
        return self.out_dir / "predictions"

    @property
    def detection_dir(self) -> Path:
        return self.out_dir / "detection"

    @property
    def classifier_dir(self) -> Path:
        return self.out_dir / "classifier"

    @property
    def report_dir(self) -> Path:
        return self.out_dir / "report"


def resolve_settings(cfg: dict) -> RunSettings:
    """Builds every module config up front so bad values fail as config
    errors (exit 2) before any stage runs."""
    try:
        seed = int(cfg["seed"])
        area_raw = dict(cfg["simgen"]["area"])
        area_raw["start_date"] = dt.date.fromisoformat(area_raw["start_date"])
        for key in ("weekday_effect", "overhead_month_profile", "overhead_weekday_delta"):
            area_raw[key] = tuple(area_raw[key])
        area_config = sim.AreaConfig(seed=seed, **area_raw)

        frac = cfg["simgen"]["fraction_inaccurate"]
        if not (0.0 < frac < 1.0):
            raise ConfigError(f"fraction_inaccurate must be in (0, 1), got {frac}")
        lo, hi = cfg["simgen"]["start_window"]
        if not (0.0 <= lo <= hi < 1.0):
            raise ConfigError(f"bad start_window {cfg['simgen']['start_window']}")
        if cfg["simgen"]["n_clean_areas"] > cfg["simgen"]["n_areas"]:
            raise ConfigError("n_clean_areas exceeds n_areas")

        p = cfg["predictor"]
        predictor_config = pred.PredictorConfig(
            window_size=p["window_size"], hidden_dims=tuple(p["hidden_dims"]),
            epochs=p["epochs"], learning_rate=p["learning_rate"],
            batch_size=p["batch_size"], seed=seed,
            val_fraction=p["val_fraction"], patience=p["patience"],
        )
        if p["train_days"] is not None and p["train_days"] <= p["window_size"]:
            raise ConfigError("train_days must exceed window_size")

        d = cfg["detector"]
        detection_params = det.DetectionParams(threshold=d["threshold"],
                                               window_size=d["window_size"])

        c = cfg["classifier"]
        tsrp_config = clf.TsRpConfig(
            series_length=c["series_length"], rp_mode=c["rp_mode"],
            eps_percentile=c["eps_percentile"],
            seq_filters=tuple(c["seq_filters"]), seq_kernels=tuple(c["seq_kernels"]),
            seq_pool=c["seq_pool"], mat_filters=tuple(c["mat_filters"]),
            mat_kernels=tuple(c["mat_kernels"]), mat_strides=tuple(c["mat_strides"]),
            mat_pool=c["mat_pool"], merge_width=c["merge_width"], merge=c["merge"],
            epochs=c["epochs"], learning_rate=c["learning_rate"],
            batch_size=c["batch_size"], seed=seed, folds=c["folds"],
        )
        for mode in c["modes"]:
            if mode not in clf.MODES:
                raise ConfigError(f"unknown classifier mode {mode!r}")
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"invalid config: {e}")

    return RunSettings(
        raw=cfg, seed=seed, out_dir=Path(cfg["out_dir"]), jobs=max(1, int(cfg["jobs"])),
        area_config=area_config, predictor_config=predictor_config,
        detection_params=detection_params, tsrp_config=tsrp_config,
    )


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def _area_ids(directory: Path) -> list[str]:
    return sorted(p.stem for p in directory.glob("*.csv"))


def _read_dataset(path: Path) -> tel.UsageDataset:
    return tel.dataset_from_records(tel.read_usage_csv(path))


def _labels_path(s: RunSettings, area_id: str) -> Path:
    return s.data_dir / f"labels_{area_id}.json"


def _read_labels(s: RunSettings, area_id: str):
    path = _labels_path(s, area_id)
    if not path.exists():
        return None
    _, labels, spec = sim.read_labels_json(path)
    return labels, spec


def _area_predictor_seed(seed: int, area_id: str) -> int:
    return int(np.random.SeedSequence(
        (seed, zlib.crc32(area_id.encode("utf-8")), 5)).generate_state(1)[0] % 2**31)


def _train_split(windows: pred.WindowSamples, s: RunSettings,
                 n_feature_days: int) -> tuple[pred.WindowSamples, int]:
    """Head split for training; returns (train windows, train_end day index)."""
    p = s.raw["predictor"]
    w = s.predictor_config.window_size
    train_end = p["train_days"] if p["train_days"] is not None \
        else n_feature_days - p["n_test_days"]
    n_train = train_end - w
    if not (1 <= n_train < len(windows)):
        raise StageError(
            f"train_days={train_end} leaves {n_train} training windows out of "
            f"{len(windows)}; need at least 1 and a nonempty detection horizon"
        )
    head, _ = pred.split_train_test(windows, n_test=len(windows) - n_train)
    return head, train_end


def _horizon_slice(s: RunSettings, n_feature_days: int, train_end: int) -> slice:
    """Positions of the detection horizon inside the prediction series
    (which starts at feature day W)."""
    w = s.predictor_config.window_size
    end_day = s.raw["detector"]["end_day"]
    end = n_feature_days if end_day is None else min(end_day, n_feature_days)
    return slice(train_end - w, end - w)


def _actual_start_date(s: RunSettings, area_id: str) -> dt.date | None:
    info = _read_labels(s, area_id)
    if info is None:
        return None
    _, spec = info
    start = spec.earliest_start()
    if start is None:
        return None
    raw_path = s.data_dir / f"{area_id}.csv"
    source = raw_path if raw_path.exists() else s.cleaned_dir / f"{area_id}.csv"
    first_date = _read_dataset(source).date_range[0]
    return first_date + dt.timedelta(days=start)


def _detect_area(s: RunSettings, area_id: str):
    """Shared by detect and evaluate: recomputes detection for one area from
    its stored prediction series. Returns (dates, observed, predicted,
    result) over the detection horizon."""
    pred_path = s.predictions_dir / f"{area_id}.csv"
    if not pred_path.exists():
        raise StageError(f"missing predictions for {area_id}: {pred_path}")
    observed, predicted = pred.read_predictions_csv(pred_path)
    w = s.predictor_config.window_size
    n_feature_days = len(predicted.values) + w
    p = s.raw["predictor"]
    train_end = p["train_days"] if p["train_days"] is not None \
        else n_feature_days - p["n_test_days"]
    sl = _horizon_slice(s, n_feature_days, train_end)
    dates = predicted.dates[sl]
    obs = observed.values[sl]
    prd = predicted.values[sl]
    if len(dates) < s.detection_params.window_size:
        raise StageError(
            f"detection horizon for {area_id} has {len(dates)} days, shorter "
            f"than the detection window L={s.detection_params.window_size}"
        )
    dpe_series = det.dpe(obs, prd)
    result = det.sliding_window_detect(dpe_series, s.detection_params, dates,
                                       actual_start=_actual_start_date(s, area_id))
    return dates, obs, prd, result


def _manifest(s: RunSettings, command: str, started: str) -> None:
    artifacts = {}
    for path in sorted(s.out_dir.rglob("*")):
        if path.is_file() and path.name != "manifest.json":
            digest = hashlib.sha256(path.read_bytes()).hexdigest()
            artifacts[str(path.relative_to(s.out_dir))] = digest
    blob = {
        "command": command,
        "config": s.raw,
        "seed": s.seed,
        "started_at": started,
        "finished_at": dt.datetime.now(dt.timezone.utc).isoformat(),
        "artifacts": artifacts,
    }
    with open(s.out_dir / "manifest.json", "w") as fh:
        json.dump(blob, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _map_areas(s: RunSettings, area_ids: list[str], fn) -> list:
    """Run fn per area, optionally in a thread pool capped at --jobs."""
    if s.jobs <= 1 or len(area_ids) <= 1:
        return [fn(a) for a in area_ids]
    with concurrent.futures.ThreadPoolExecutor(max_workers=s.jobs) as pool:
        return list(pool.map(fn, area_ids))


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


def stage_generate(s: RunSettings) -> None:
    g = s.raw["simgen"]
    corpus = sim.make_labeled_corpus(
        s.area_config,
        fraction_inaccurate=g["fraction_inaccurate"],
        n_areas=g["n_areas"],
        seed=s.seed,
        start_window=tuple(g["start_window"]),
        n_clean_areas=g["n_clean_areas"],
        injection_noise_sigma=g["injection_noise_sigma"],
        alpha=g["alpha"],
    )
    s.data_dir.mkdir(parents=True, exist_ok=True)
    n_injected_meters = 0
    for area in corpus:
        area_id = area.dataset.area_id
        tel.write_usage_csv(s.data_dir / f"{area_id}.csv",
                            tel.records_from_dataset(area.dataset))
        sim.write_labels_json(_labels_path(s, area_id), area)
        n_injected_meters += len(area.spec.targets)
    n_injected_areas = sum(1 for a in corpus if a.spec.targets)
    print(f"generated {len(corpus)} areas x {s.area_config.n_submeters} submeters "
          f"x {s.area_config.n_days} days; {n_injected_areas} areas with "
          f"{n_injected_meters} malfunctioning submeters")


def stage_clean(s: RunSettings) -> None:
    area_ids = _area_ids(s.data_dir)
    if not area_ids:
        raise StageError(f"no usage CSVs found in {s.data_dir}")
    s.cleaned_dir.mkdir(parents=True, exist_ok=True)
    total_removed = 0
    for area_id in area_ids:
        dataset = _read_dataset(s.data_dir / f"{area_id}.csv")
        cleaned, removed = tel.drop_invalid_days(dataset)
        tel.write_usage_csv(s.cleaned_dir / f"{area_id}.csv",
                            tel.records_from_dataset(cleaned))
        tel.write_removed_days_report(s.cleaned_dir / f"removed_{area_id}.json",
                                      removed)
        total_removed += len(removed)
    print(f"cleaned {len(area_ids)} areas; removed {total_removed} days total")


def stage_train_predictor(s: RunSettings) -> None:
    area_ids = _area_ids(s.cleaned_dir)
    if not area_ids:
        raise StageError(f"no cleaned CSVs found in {s.cleaned_dir}")
    s.predictor_dir.mkdir(parents=True, exist_ok=True)
    s.predictions_dir.mkdir(parents=True, exist_ok=True)
    sweep_sizes = list(s.raw["predictor"]["window_sweep"])
    first_area = area_ids[0]

    def run(area_id: str) -> None:
        dataset = _read_dataset(s.cleaned_dir / f"{area_id}.csv")
        feats = pred.build_features(dataset)
        config = dataclasses.replace(
            s.predictor_config, seed=_area_predictor_seed(s.seed, area_id))
        windows = pred.make_windows(feats, config.window_size)
        head, _ = _train_split(windows, s, len(feats))
        model = pred.train(head, config)
        pred.save_predictor(s.predictor_dir / f"{area_id}.json", model)
        predicted = pred.predict_series(model, feats)
        observed = tel.residual_series(dataset)
        pred.write_predictions_csv(s.predictions_dir / f"{area_id}.csv",
                                   observed, predicted)
        print(f"trained predictor for {area_id}: train_mse={model.train_mse:.4f} "
              f"val_mse={model.val_mse:.4f}")
        if sweep_sizes and area_id == first_area:
            entries = []
            for w in sorted(set(sweep_sizes)):
                cfg_w = dataclasses.replace(config, window_size=w)
                windows_w = pred.make_windows(feats, w)
                head_w, _ = _train_split(windows_w, s, len(feats))
                model_w = pred.train(head_w, cfg_w)
                entries.append({"window_size": w, "train_mse": model_w.train_mse,
                                "val_mse": model_w.val_mse})
            with open(s.predictor_dir / "window_sweep.json", "w") as fh:
                json.dump({"area_id": area_id, "entries": entries}, fh,
                          indent=2, sort_keys=True)
                fh.write("\n")

    _map_areas(s, area_ids, run)


def stage_detect(s: RunSettings) -> None:
    area_ids = _area_ids(s.cleaned_dir)
    if not area_ids:
        raise StageError(f"no cleaned CSVs found in {s.cleaned_dir}")
    s.detection_dir.mkdir(parents=True, exist_ok=True)
    n_flagged = 0
    for area_id in area_ids:
        dates, obs, prd, result = _detect_area(s, area_id)
        det.write_detection_json(s.detection_dir / f"{area_id}.json", area_id,
                                 result, s.detection_params)
        det.write_daily_csv(s.detection_dir / f"daily_{area_id}.csv", dates,
                            obs, prd, s.detection_params)
        n_flagged += int(result.flagged)
        status = "flagged" if result.flagged else "clear"
        lag = f" lag={result.lag}d" if result.lag is not None else ""
        print(f"detector {area_id}: {status}{lag}")
    print(f"detection complete: {n_flagged}/{len(area_ids)} areas flagged")


def _flagged_area_ids(s: RunSettings) -> list[str]:
    flagged = []
    for path in sorted(s.detection_dir.glob("*.json")):
        with open(path) as fh:
            blob = json.load(fh)
        if blob.get("flagged"):
            flagged.append(blob["area_id"])
    return flagged


def _classifier_area_ids(s: RunSettings, classify_all: bool) -> list[str]:
    if classify_all:
        return _area_ids(s.cleaned_dir)
    if not s.detection_dir.exists():
        raise StageError(f"no detection results in {s.detection_dir}; run detect "
                         "first or pass --classify-all")
    return _flagged_area_ids(s)


def _classifier_samples(s: RunSettings, area_ids: list[str]) -> list[clf.SubmeterSample]:
    samples = []
    for area_id in area_ids:
        info = _read_labels(s, area_id)
        if info is None:
            raise StageError(f"training labels missing: {_labels_path(s, area_id)}")
        labels, _ = info
        dataset = _read_dataset(s.cleaned_dir / f"{area_id}.csv")
        samples.extend(clf.samples_from_dataset(dataset, labels, s.tsrp_config))
    return samples


def stage_train_classifier(s: RunSettings, classify_all: bool = False) -> None:
    s.classifier_dir.mkdir(parents=True, exist_ok=True)
    area_ids = _classifier_area_ids(s, classify_all)
    results_path = s.classifier_dir / "cv_results.json"
    if not area_ids:
        with open(results_path, "w") as fh:
            json.dump({"skipped": True, "reason": "no areas flagged"}, fh,
                      indent=2, sort_keys=True)
            fh.write("\n")
        print("classifier skipped: no areas flagged")
        return
    samples = _classifier_samples(s, area_ids)
    if len({x.label for x in samples}) < 2:
        with open(results_path, "w") as fh:
            json.dump({"skipped": True,
                       "reason": "training labels contain a single class"}, fh,
                      indent=2, sort_keys=True)
            fh.write("\n")
        print("classifier skipped: training labels contain a single class")
        return
    blob = {
        "skipped": False,
        "areas": area_ids,
        "samples": [{"area_id": x.area_id, "meter_id": x.meter_id, "label": x.label}
                    for x in samples],
        "modes": {},
    }
    for mode in s.raw["classifier"]["modes"]:
        result = clf.train_cv(samples, s.tsrp_config, mode=mode)
        for k, model in enumerate(result.models):
            clf.save_classifier(s.classifier_dir / f"model_{mode}_fold{k}.json", model)
        blob["modes"][mode] = {
            "fold_of_sample": [int(f) for f in result.fold_of_sample],
            "oof_scores": [float(x) for x in result.oof_scores],
            "fold_aucs": [float(a) for a in result.fold_aucs],
        }
        print(f"classifier CV [{mode}]: ROC AUC {format_mean_std(result.fold_aucs)}")
    with open(results_path, "w") as fh:
        json.dump(blob, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_cv_results(s: RunSettings) -> dict | None:
    path = s.classifier_dir / "cv_results.json"
    if not path.exists():
        return None
    with open(path) as fh:
        return json.load(fh)


def stage_classify(s: RunSettings, model_path: str | None = None) -> None:
    s.classifier_dir.mkdir(parents=True, exist_ok=True)
    threshold = s.raw["classifier"]["score_threshold"]
    if model_path is not None:
        model = clf.load_classifier(model_path)
        area_ids = _area_ids(s.cleaned_dir)
        samples = _classifier_samples(s, area_ids)
        scores = clf.classify(model, samples)
        out = s.classifier_dir / "scores_model.csv"
        clf.write_classification_csv(out, samples, scores, threshold=threshold)
        print(f"classified {len(samples)} submeters with {model_path} -> {out}")
        return
    blob = _load_cv_results(s)
    if blob is None:
        raise StageError(f"no classifier results in {s.classifier_dir}; run "
                         "train-classifier first or pass --model")
    if blob.get("skipped"):
        print("classify skipped: no areas flagged")
        return
    stubs = [clf.SubmeterSample(area_id=row["area_id"], meter_id=row["meter_id"],
                                series=np.zeros(2), rp=np.zeros((2, 2)),
                                label=int(row["label"]))
             for row in blob["samples"]]
    for mode, payload in sorted(blob["modes"].items()):
        scores = np.asarray(payload["oof_scores"])
        out = s.classifier_dir / f"scores_{mode}.csv"
        clf.write_classification_csv(out, stubs, scores, threshold=threshold)
        n_hit = int(np.sum(scores > threshold))
        print(f"classify [{mode}]: {n_hit}/{len(stubs)} submeters scored inaccurate "
              f"(out-of-fold scores) -> {out}")


def _window_sweep_inputs(s: RunSettings) -> list[rpt.WindowSweepEntry] | None:
    path = s.predictor_dir / "window_sweep.json"
    if not path.exists():
        return None
    with open(path) as fh:
        blob = json.load(fh)
    return [rpt.WindowSweepEntry(window_size=e["window_size"],
                                 train_mse=e["train_mse"], val_mse=e["val_mse"])
            for e in blob["entries"]]


def _detection_trace_inputs(s: RunSettings) -> list[rpt.DetectionTrace] | None:
    if not s.predictions_dir.exists():
        return None
    traces = []
    for area_id in _area_ids(s.cleaned_dir):
        if not (s.predictions_dir / f"{area_id}.csv").exists():
            continue
        dates, obs, prd, result = _detect_area(s, area_id)
        traces.append(rpt.DetectionTrace(
            area_id=area_id, dates=dates, observed=obs, predicted=prd,
            params=s.detection_params, result=result))
    return traces or None


def _cv_inputs(s: RunSettings) -> rpt.CvSection | None:
    blob = _load_cv_results(s)
    if blob is None or blob.get("skipped"):
        return None
    labels = np.array([row["label"] for row in blob["samples"]], dtype=int)
    results = []
    for mode, payload in sorted(blob["modes"].items()):
        results.append(clf.CvResult(
            mode=mode,
            fold_of_sample=np.asarray(payload["fold_of_sample"], dtype=int),
            oof_scores=np.asarray(payload["oof_scores"]),
            fold_aucs=list(payload["fold_aucs"]),
            models=[],
        ))
    return rpt.CvSection(results=results, labels=labels)


def _target_rate_inputs(s: RunSettings) -> list[bl.TargetRateRow] | None:
    b = s.raw["baselines"]
    if not b["enabled"]:
        return None
    area_id = b["area_id"]
    if area_id is None:
        flagged = _flagged_area_ids(s) if s.detection_dir.exists() else []
        candidates = flagged or _area_ids(s.cleaned_dir)
        if not candidates:
            return None
        area_id = candidates[0]
    ckpt = s.predictor_dir / f"{area_id}.json"
    if not ckpt.exists():
        return None
    model = pred.load_predictor(ckpt)
    dataset = _read_dataset(s.cleaned_dir / f"{area_id}.csv")
    feats = pred.build_features(dataset)
    w = model.config.window_size
    x_std = model.standardizer.transform(feats.matrix)
    n = len(feats)
    flat = [bl.FlatSample(x=x_std[i : i + w].reshape(-1),
                          y=float(feats.matrix[i + w, pred.ERROR_COL]))
            for i in range(n - w)]
    p = s.raw["predictor"]
    train_end = p["train_days"] if p["train_days"] is not None else n - p["n_test_days"]
    sl = _horizon_slice(s, n, train_end)
    train_flat = flat[: train_end - w]
    horizon_flat = flat[sl]
    if not train_flat or not horizon_flat:
        return None
    X_hor, observed = bl.design_matrix(horizon_flat)
    en = b["elastic_net"]
    gb = b["gbr"]
    models = {
        "bayesian_ridge": bl.fit_bayesian_ridge(train_flat),
        "elastic_net": bl.fit_elastic_net(train_flat, en["lam1"], en["lam2"]),
        "gbr": bl.fit_gbr(train_flat, bl.GbrConfig(
            n_trees=gb["n_trees"], depth=gb["depth"],
            learning_rate=gb["learning_rate"])),
    }
    predictions = {name: m.predict(X_hor) for name, m in models.items()}
    _, predicted = pred.read_predictions_csv(s.predictions_dir / f"{area_id}.csv")
    predictions["lstm"] = predicted.values[sl]
    return bl.compare_on_detection(predictions, observed, b["thresholds"])


def _proportion_sweep_inputs(s: RunSettings) -> list[rpt.ProportionEntry] | None:
    props = s.raw["evaluate"]["proportion_sweep"]
    if not props:
        return None
    g = s.raw["simgen"]
    entries = []
    for i, accurate_prop in enumerate(sorted(props)):
        if not (0.0 < accurate_prop < 1.0):
            raise StageError(f"proportion {accurate_prop} outside (0, 1)")
        fraction = round(1.0 - accurate_prop, 10)
        sweep_seed = s.seed + s.raw["evaluate"]["sweep_seed_offset"] + i
        corpus = sim.make_labeled_corpus(
            s.area_config, fraction_inaccurate=fraction,
            n_areas=s.raw["evaluate"]["sweep_n_areas"], seed=sweep_seed,
            start_window=tuple(g["start_window"]),
            injection_noise_sigma=g["injection_noise_sigma"], alpha=g["alpha"],
        )
        samples = clf.prepare_samples(corpus, s.tsrp_config)
        result = clf.train_cv(samples, s.tsrp_config, mode=clf.MODE_DUAL)
        entries.append(rpt.ProportionEntry(accurate_proportion=accurate_prop,
                                           fold_aucs=tuple(result.fold_aucs)))
        print(f"proportion sweep {accurate_prop}: fold AUCs "
              f"{[round(a, 3) for a in result.fold_aucs]}")
    return entries


def stage_evaluate(s: RunSettings, fmt: str = "json") -> rpt.ReportBundle:
    inputs = rpt.ReportInputs(
        window_sweep=_window_sweep_inputs(s),
        detection_traces=_detection_trace_inputs(s),
        cv=_cv_inputs(s),
        target_rates=_target_rate_inputs(s),
        proportion_sweep=_proportion_sweep_inputs(s),
    )
    bundle = rpt.experiment_report(inputs, s.report_dir)
    if bundle.missing:
        print("report sections missing inputs: " + ", ".join(bundle.missing))
    if fmt == "csv":
        for key in sorted(bundle.summary):
            print(f"{key},{json.dumps(bundle.summary[key], sort_keys=True)}")
    else:
        print(json.dumps(bundle.summary, indent=2, sort_keys=True))
    return bundle


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _evaluate_scores_files(scores_path: str, labels_paths: list[str],
                           out_path: Path | None, fmt: str) -> int:
    """Standalone metric computation from a scores CSV + labels JSON files."""
    import csv as _csv

    if not Path(scores_path).exists():
        print(f"scores file not found: {scores_path}", file=sys.stderr)
        return 1
    truth: dict[tuple[str, str], int] = {}
    for lp in labels_paths:
        if not Path(lp).exists():
            print(f"labels file not found: {lp}", file=sys.stderr)
            return 1
        area_id, labels, _ = sim.read_labels_json(lp)
        for meter, lab in labels.items():
            truth[(area_id, meter)] = 1 if lab == sim.LABEL_INACCURATE else 0
    scores, labels_list = [], []
    with open(scores_path, newline="") as fh:
        reader = _csv.DictReader(fh)
        for row in reader:
            key = (row["area_id"], row["meter_id"])
            if key not in truth:
                print(f"no label for submeter {key[1]} of {key[0]} in the given "
                      "labels files", file=sys.stderr)
                return 1
            scores.append(float(row["score"]))
            labels_list.append(truth[key])
    summary = {
        "n_samples": len(scores),
        "roc_auc": roc_auc(np.array(scores), np.array(labels_list)),
        "pr_auc": pr_auc(np.array(scores), np.array(labels_list)),
    }
    if out_path is not None:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    if fmt == "csv":
        for key in sorted(summary):
            print(f"{key},{summary[key]}")
    else:
        print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def _run_stages(s: RunSettings, stages: list[str], classify_all: bool,
                model_path: str | None, fmt: str) -> None:
    for stage in stages:
        if stage == "generate":
            stage_generate(s)
        elif stage == "clean":
            stage_clean(s)
        elif stage == "train-predictor":
            stage_train_predictor(s)
        elif stage == "detect":
            stage_detect(s)
        elif stage == "train-classifier":
            stage_train_classifier(s, classify_all=classify_all)
        elif stage == "classify":
            stage_classify(s, model_path=model_path)
        elif stage == "evaluate":
            stage_evaluate(s, fmt=fmt)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meterwatch",
        description="Submeter malfunction detection workflow",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--out", help="output directory (config key out_dir)")
        p.add_argument("--seed", type=int, help="global seed")
        p.add_argument("--jobs", type=int, help="parallel area workers (default 1)")

    p_gen = sub.add_parser("generate", help="simulate a labeled corpus")
    common(p_gen)
    p_gen.add_argument("--areas", type=int, help="number of areas")
    p_gen.add_argument("--clean-areas", type=int, help="areas left un-injected")
    p_gen.add_argument("--submeters", type=int, help="submeters per area")
    p_gen.add_argument("--days", type=int, help="days per series")
    p_gen.add_argument("--fraction", type=float,
                       help="fraction of submeters injected per area")

    for name, help_text in [
        ("clean", "drop invalid days from ingested usage CSVs"),
        ("train-predictor", "train the daily-error predictor per area"),
        ("detect", "run sliding-window detection on the test horizon"),
    ]:
        common(sub.add_parser(name, help=help_text))

    p_tc = sub.add_parser("train-classifier",
                          help="cross-validate the submeter classifier")
    common(p_tc)
    p_tc.add_argument("--classify-all", action="store_true",
                      help="use every area, not only flagged ones")

    p_cl = sub.add_parser("classify", help="write per-submeter scores")
    common(p_cl)
    p_cl.add_argument("--model", help="score with this checkpoint instead of "
                      "the cross-validation out-of-fold scores")

    p_ev = sub.add_parser("evaluate", help="assemble the report bundle")
    common(p_ev)
    p_ev.add_argument("--format", choices=("json", "csv"), default="json",
                      help="stdout encoding of the summary")
    p_ev.add_argument("--scores", help="standalone: classification scores CSV")
    p_ev.add_argument("--labels", action="append", default=[],
                      help="standalone: ground-truth labels JSON (repeatable)")

    p_pipe = sub.add_parser("pipeline", help="run every stage in order")
    common(p_pipe)
    p_pipe.add_argument("--classify-all", action="store_true",
                        help="classify every area, not only flagged ones")
    p_pipe.add_argument("--stage", action="append", choices=STAGES, default=None,
                        help="run only these stages (repeatable, in canonical order)")
    p_pipe.add_argument("--format", choices=("json", "csv"), default="json")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    overrides: dict = {}
    if getattr(args, "out", None) is not None:
        overrides["out_dir"] = args.out
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "jobs", None) is not None:
        overrides["jobs"] = args.jobs
    simgen_over = {}
    if getattr(args, "areas", None) is not None:
        simgen_over["n_areas"] = args.areas
    if getattr(args, "clean_areas", None) is not None:
        simgen_over["n_clean_areas"] = args.clean_areas
    if getattr(args, "fraction", None) is not None:
        simgen_over["fraction_inaccurate"] = args.fraction
    area_over = {}
    if getattr(args, "submeters", None) is not None:
        area_over["n_submeters"] = args.submeters
    if getattr(args, "days", None) is not None:
        area_over["n_days"] = args.days
    if area_over:
        simgen_over["area"] = area_over
    if simgen_over:
        overrides["simgen"] = simgen_over

    try:
        cfg = load_config(getattr(args, "config", None), overrides)
        s = resolve_settings(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2

    if args.command == "evaluate" and args.scores is not None:
        return _evaluate_scores_files(
            args.scores, args.labels,
            s.report_dir / "scores_eval.json", args.format)

    if args.command == "pipeline":
        chosen = args.stage if args.stage else list(STAGES)
        stages = [st for st in STAGES if st in chosen]
    else:
        stages = [args.command]

    started = dt.datetime.now(dt.timezone.utc).isoformat()
    s.out_dir.mkdir(parents=True, exist_ok=True)
    current = stages[0]
    try:
        for stage in stages:
            current = stage
            _run_stages(s, [stage],
                        classify_all=getattr(args, "classify_all", False),
                        model_path=getattr(args, "model", None),
                        fmt=getattr(args, "format", "json"))
    except Exception as e:
        print(f"stage {current} failed: {e}", file=sys.stderr)
        _manifest(s, args.command, started)
        return 1
    _manifest(s, args.command, started)
    return 0


if __name__ == "__main__":
    sys.exit(main())
