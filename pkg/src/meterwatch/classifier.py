"""Per-submeter accurate/inaccurate classification.

Each submeter's recent usage window (tail-aligned, standardized per sample)
feeds a dual-input network: a 1D convolutional branch over the raw series
and a 2D convolutional branch over its recurrence plot, merged by
element-wise addition into a single dense logit. Single-branch ablations
(sequence-only, matrix-only) are constructible for architecture comparisons.

The recurrence plot uses embedding dimension 1 and delay 1 on the scalar
daily series: D[i][j] = |x_i - x_j|. Binary mode thresholds D at a
percentile of the off-diagonal distances (so recurrence density adapts to
scale); grayscale mode maps D to 1 - D/max(D).
"""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .metrics import roc_auc, stratified_kfold
from .simulate import LABEL_INACCURATE, LabeledArea

MODE_DUAL = "dual"
MODE_SEQUENCE = "sequence"
MODE_MATRIX = "matrix"
MODES = (MODE_DUAL, MODE_SEQUENCE, MODE_MATRIX)

RP_BINARY = "binary"
RP_GRAYSCALE = "grayscale"


class ClassifierError(ValueError):
    pass


@dataclass(frozen=True)
class TsRpConfig:
    series_length: int = 128
    rp_mode: str = RP_BINARY
    eps_percentile: float = 10.0
    # sequence branch: conv filters/kernels per block, shared pool window
    seq_filters: tuple[int, ...] = (8, 16)
    seq_kernels: tuple[int, ...] = (7, 5)
    seq_pool: int = 2
    # matrix branch: conv filters/kernels/strides per block, shared pool window
    mat_filters: tuple[int, ...] = (8, 16)
    mat_kernels: tuple[int, ...] = (5, 3)
    mat_strides: tuple[int, ...] = (2, 2)
    mat_pool: int = 2
    merge_width: int = 32
    merge: str = "add"
    epochs: int = 30
    learning_rate: float = 3e-3
    batch_size: int = 32
    seed: int = 0
    folds: int = 5

    def __post_init__(self):
        if self.series_length < 2:
            raise ClassifierError("series_length must be >= 2")
        if self.rp_mode not in (RP_BINARY, RP_GRAYSCALE):
            raise ClassifierError(f"unknown rp_mode {self.rp_mode!r}")
        if self.merge not in ("add", "concat"):
            raise ClassifierError(f"unknown merge {self.merge!r}")
        if len(self.seq_filters) != len(self.seq_kernels):
            raise ClassifierError("sequence branch filters/kernels length mismatch")
        if not (len(self.mat_filters) == len(self.mat_kernels) == len(self.mat_strides)):
            raise ClassifierError("matrix branch filters/kernels/strides length mismatch")


@dataclass
class SubmeterSample:
    area_id: str
    meter_id: str
    series: np.ndarray  # (T,) standardized
    rp: np.ndarray  # (T, T) in [0, 1]
    label: int  # accurate=0, inaccurate=1


def recurrence_plot(series: np.ndarray, mode: str = RP_BINARY,
                    eps_percentile: float = 10.0) -> np.ndarray:
    """Pairwise-distance recurrence matrix of a scalar series, values in [0,1]."""
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ClassifierError(f"series must be 1-d with length >= 2, got shape {x.shape}")
    d = np.abs(x[:, None] - x[None, :])
    if mode == RP_BINARY:
        off_diag = d[~np.eye(x.size, dtype=bool)]
        eps = np.percentile(off_diag, eps_percentile)
        return (d <= eps).astype(np.float64)
    if mode == RP_GRAYSCALE:
        dmax = d.max()
        if dmax == 0.0:
            return np.ones_like(d)
        return 1.0 - d / dmax
    raise ClassifierError(f"unknown rp mode {mode!r}")


def standardize_series(values: np.ndarray) -> np.ndarray:
    """Zero mean, unit variance; constant series map to all-zeros."""
    x = np.asarray(values, dtype=np.float64)
    std = x.std()
    if std == 0.0:
        return np.zeros_like(x)
    return (x - x.mean()) / std


def prepare_series(values: np.ndarray, series_length: int) -> np.ndarray:
    """Tail-align to the most recent series_length days, standardize the kept
    span, and left-pad with zeros (the standardized mean) when shorter."""
    x = np.asarray(values, dtype=np.float64)
    if x.size < 2:
        raise ClassifierError("need at least 2 observed days")
    tail = standardize_series(x[-series_length:])
    if tail.size < series_length:
        tail = np.concatenate([np.zeros(series_length - tail.size), tail])
    return tail


def samples_from_dataset(dataset, labels: dict[str, str],
                         config: TsRpConfig) -> list[SubmeterSample]:
    """One sample per submeter of one area, in meter id order."""
    samples = []
    for meter_id in dataset.meter_ids():
        readings = dataset.submeters[meter_id]
        values = np.array([readings[d] for d in sorted(readings)])
        series = prepare_series(values, config.series_length)
        samples.append(
            SubmeterSample(
                area_id=dataset.area_id,
                meter_id=meter_id,
                series=series,
                rp=recurrence_plot(series, config.rp_mode, config.eps_percentile),
                label=1 if labels[meter_id] == LABEL_INACCURATE else 0,
            )
        )
    return samples


def prepare_samples(areas: list[LabeledArea], config: TsRpConfig) -> list[SubmeterSample]:
    """One sample per submeter across all areas, in (area, meter id) order."""
    samples = []
    for area in areas:
        samples.extend(samples_from_dataset(area.dataset, area.labels, config))
    return samples


def sample_arrays(samples: list[SubmeterSample]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack samples into (series (B,T,1), rp (B,T,T,1), labels (B,))."""
    xs = np.stack([s.series for s in samples])[:, :, None]
    xm = np.stack([s.rp for s in samples])[:, :, :, None]
    y = np.array([s.label for s in samples], dtype=np.float64)
    return xs, xm, y


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------


@dataclass
class TsRpModel:
    mode: str
    net: object  # TwoBranchNet (dual) or Sequential (ablations)
    config: TsRpConfig

    def logits(self, series_x: np.ndarray, rp_x: np.ndarray) -> np.ndarray:
        if self.mode == MODE_DUAL:
            return self.net.forward(series_x, rp_x)
        if self.mode == MODE_SEQUENCE:
            return self.net.forward(series_x)
        return self.net.forward(rp_x)

    def backward(self, grad: np.ndarray) -> None:
        self.net.backward(grad)

    def scores(self, series_x: np.ndarray, rp_x: np.ndarray, chunk: int = 64) -> np.ndarray:
        """Probability of inaccurate per sample, chunked to bound memory."""
        out = []
        for lo in range(0, series_x.shape[0], chunk):
            z = self.logits(series_x[lo : lo + chunk], rp_x[lo : lo + chunk])
            out.append(nn.sigmoid(z[:, 0]))
        return np.concatenate(out)


def _conv_out_len(t: int, kernel: int, stride: int) -> int:
    return (t - kernel) // stride + 1


def _sequence_branch(config: TsRpConfig, rng) -> tuple[list, int]:
    layers = []
    t = config.series_length
    ch = 1
    for filters, kernel in zip(config.seq_filters, config.seq_kernels):
        layers += [nn.Conv1D(ch, filters, kernel, rng=rng), nn.Relu(),
                   nn.MaxPool1D(config.seq_pool)]
        t = _conv_out_len(t, kernel, 1) // config.seq_pool
        ch = filters
        if t < 1:
            raise ClassifierError("sequence branch shrinks below length 1")
    layers.append(nn.Flatten())
    return layers, t * ch


def _matrix_branch(config: TsRpConfig, rng) -> tuple[list, int]:
    layers = []
    t = config.series_length
    ch = 1
    for filters, kernel, stride in zip(config.mat_filters, config.mat_kernels,
                                       config.mat_strides):
        layers += [nn.Conv2D(ch, filters, kernel, stride=stride, rng=rng), nn.Relu(),
                   nn.MaxPool2D(config.mat_pool)]
        t = _conv_out_len(t, kernel, stride) // config.mat_pool
        ch = filters
        if t < 1:
            raise ClassifierError("matrix branch shrinks below size 1")
    layers.append(nn.Flatten())
    return layers, t * t * ch


def build_model(config: TsRpConfig, mode: str = MODE_DUAL, seed: int | None = None) -> TsRpModel:
    """Assemble the dual model or a single-branch ablation; output is a logit."""
    if mode not in MODES:
        raise ClassifierError(f"unknown mode {mode!r}")
    rng = np.random.default_rng(np.random.SeedSequence((config.seed if seed is None else seed, 23)))
    d = config.merge_width
    seq_layers, seq_flat = _sequence_branch(config, rng)
    seq_layers.append(nn.Dense(seq_flat, d, rng=rng))
    mat_layers, mat_flat = _matrix_branch(config, rng)
    mat_layers.append(nn.Dense(mat_flat, d, rng=rng))
    head_in = 2 * d if (mode == MODE_DUAL and config.merge == "concat") else d
    head = nn.Sequential([nn.Dense(head_in, 1, rng=rng)])
    if mode == MODE_DUAL:
        net = nn.TwoBranchNet(
            branch_a=nn.Sequential(seq_layers),
            branch_b=nn.Sequential(mat_layers),
            head=head,
            merge=config.merge,
        )
    elif mode == MODE_SEQUENCE:
        net = nn.Sequential(seq_layers + head.layers)
    else:
        net = nn.Sequential(mat_layers + head.layers)
    return TsRpModel(mode=mode, net=net, config=config)


def train_model(model: TsRpModel, series_x, rp_x, labels, rng: np.random.Generator) -> list[float]:
    """Train in place with binary cross-entropy; returns the epoch loss curve."""
    cfg = model.config
    y = np.asarray(labels, dtype=np.float64)[:, None]
    n = series_x.shape[0]
    opt = nn.Adam(lr=cfg.learning_rate)
    curve = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            out = model.logits(series_x[idx], rp_x[idx])
            loss, grad = nn.bce_with_logits_loss(out, y[idx])
            if not np.isfinite(loss):
                raise ClassifierError(f"nonfinite training loss {loss}")
            model.backward(grad)
            opt.step(model.net.params(), model.net.grads())
            total += loss * len(idx)
        curve.append(total / n)
    return curve


@dataclass
class CvResult:
    mode: str
    fold_of_sample: np.ndarray
    oof_scores: np.ndarray
    fold_aucs: list[float]
    models: list[TsRpModel] = field(default_factory=list)


def train_cv(samples: list[SubmeterSample], config: TsRpConfig,
             mode: str = MODE_DUAL) -> CvResult:
    """Stratified k-fold CV; every sample is scored once out-of-fold."""
    xs, xm, y = sample_arrays(samples)
    folds = stratified_kfold(y.astype(int), k=config.folds, seed=config.seed)
    oof = np.zeros(len(samples))
    fold_aucs = []
    models = []
    for fold in range(config.folds):
        test_sel = folds == fold
        train_sel = ~test_sel
        y_train = y[train_sel]
        if len(np.unique(y_train)) < 2:
            raise ClassifierError(f"fold {fold} training set lacks a class")
        model = build_model(config, mode=mode, seed=config.seed * 1000 + fold)
        rng = np.random.default_rng(np.random.SeedSequence((config.seed, fold, 29)))
        train_model(model, xs[train_sel], xm[train_sel], y_train, rng)
        scores = model.scores(xs[test_sel], xm[test_sel])
        oof[test_sel] = scores
        fold_aucs.append(roc_auc(scores, y[test_sel].astype(int)))
        models.append(model)
    return CvResult(mode=mode, fold_of_sample=folds, oof_scores=oof,
                    fold_aucs=fold_aucs, models=models)


def classify(model: TsRpModel, samples: list[SubmeterSample]) -> np.ndarray:
    """Probability of inaccuracy per sample (deterministic forward pass)."""
    if not samples:
        return np.zeros(0)
    for s in samples:
        if s.series.size != model.config.series_length:
            raise ClassifierError(
                f"sample length {s.series.size} does not match model "
                f"T={model.config.series_length}"
            )
    xs, xm, _ = sample_arrays(samples)
    return model.scores(xs, xm)


# ---------------------------------------------------------------------------
# persistence and emission
# ---------------------------------------------------------------------------


def save_classifier(path, model: TsRpModel) -> None:
    cfg = dataclasses.asdict(model.config)
    for key, value in cfg.items():
        if isinstance(value, tuple):
            cfg[key] = list(value)
    nn.save_checkpoint(path, model.net, seed=model.config.seed,
                       training_config={"mode": model.mode, "tsrp_config": cfg})


def load_classifier(path) -> TsRpModel:
    net, _, tc = nn.load_checkpoint(path)
    cfg_dict = dict(tc["tsrp_config"])
    for key, value in cfg_dict.items():
        if isinstance(value, list):
            cfg_dict[key] = tuple(value)
    return TsRpModel(mode=tc["mode"], net=net, config=TsRpConfig(**cfg_dict))


def write_classification_csv(path, samples: list[SubmeterSample], scores,
                             threshold: float = 0.5) -> None:
    """Per-submeter rows: area_id,meter_id,score,label_pred,label_true."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["area_id", "meter_id", "score", "label_pred", "label_true"])
        for s, score in zip(samples, scores):
            writer.writerow([
                s.area_id, s.meter_id, repr(float(score)),
                "inaccurate" if score > threshold else "accurate",
                "inaccurate" if s.label == 1 else "accurate",
            ])


def write_fold_report_json(path, results: list[CvResult]) -> None:
    """Per-mode fold AUCs with mean and std, one row per architecture mode."""
    from .metrics import mean_std

    rows = []
    for r in results:
        m, s = mean_std(r.fold_aucs)
        rows.append({
            "mode": r.mode,
            "fold_aucs": [float(a) for a in r.fold_aucs],
            "mean_auc": m,
            "std_auc": s,
        })
    with open(path, "w") as fh:
        json.dump({"cv_results": rows}, fh, indent=2, sort_keys=True)
        fh.write("\n")
