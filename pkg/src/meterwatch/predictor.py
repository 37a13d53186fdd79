"""Residual-error prediction with a two-layer LSTM over daily feature vectors.

Each day becomes a 26-dim feature vector
[error, master, com_date, weekday(7), month(12), year(3), number]; stride-1
windows of W consecutive days predict the next day's residual error. The
network is LSTM(26->30, sequences) -> LSTM(30->30, last) -> Dense(30->1)
trained with MSE on standardized values; continuous columns are z-scored
with training-set statistics, one-hot columns pass through untouched.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .telemetry import ResidualSeries, UsageDataset, encode_date, residual_series

N_FEATURES = 26
ERROR_COL = 0
MASTER_COL = 1
COM_DATE_COL = 2
NUMBER_COL = 25
CONTINUOUS_COLS = (ERROR_COL, MASTER_COL, COM_DATE_COL, NUMBER_COL)


class PredictorError(ValueError):
    pass


@dataclass
class DailyFeatures:
    """Raw (unstandardized) per-day feature matrix for one area."""

    dates: list[dt.date]
    matrix: np.ndarray  # (n_days, 26)

    @property
    def errors(self) -> np.ndarray:
        return self.matrix[:, ERROR_COL]

    def __len__(self) -> int:
        return len(self.dates)


@dataclass
class WindowSamples:
    """Stride-1 window samples: W input days each predicting the next day."""

    inputs: np.ndarray  # (N, W, 26) raw
    targets: np.ndarray  # (N,) raw next-day error
    target_dates: list[dt.date]
    window_size: int

    def __len__(self) -> int:
        return self.inputs.shape[0]


@dataclass(frozen=True)
class PredictorConfig:
    window_size: int = 40
    hidden_dims: tuple[int, int] = (30, 30)
    epochs: int = 200
    learning_rate: float = 1e-3
    batch_size: int = 64
    seed: int = 0
    val_fraction: float = 0.1
    patience: int = 20

    def __post_init__(self):
        if self.window_size < 1:
            raise PredictorError("window_size must be >= 1")
        if len(self.hidden_dims) != 2:
            raise PredictorError("exactly two recurrent layers")


@dataclass
class Standardizer:
    """Column-wise z-scoring; one-hot columns keep mean 0 / std 1."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, day_rows: np.ndarray) -> "Standardizer":
        mean = np.zeros(N_FEATURES)
        std = np.ones(N_FEATURES)
        for col in CONTINUOUS_COLS:
            mean[col] = day_rows[:, col].mean()
            s = day_rows[:, col].std()
            std[col] = s if s > 0 else 1.0  # constant column -> zeros
        return cls(mean=mean, std=std)

    def transform(self, rows: np.ndarray) -> np.ndarray:
        return (rows - self.mean) / self.std

    def standardize_target(self, e: np.ndarray) -> np.ndarray:
        return (e - self.mean[ERROR_COL]) / self.std[ERROR_COL]

    def destandardize_target(self, z: np.ndarray) -> np.ndarray:
        return z * self.std[ERROR_COL] + self.mean[ERROR_COL]


@dataclass
class TrainedPredictor:
    net: nn.Sequential
    standardizer: Standardizer
    config: PredictorConfig
    train_mse: float
    val_mse: float
    loss_curve: list[float] = field(default_factory=list)


def build_features(dataset: UsageDataset) -> DailyFeatures:
    """One raw feature vector per cleaned day, base date = first day."""
    series = residual_series(dataset)
    dates = series.dates
    base = dates[0]
    n = dataset.n_submeters
    matrix = np.zeros((len(dates), N_FEATURES))
    for k, d in enumerate(dates):
        cal = encode_date(d, base)
        matrix[k, ERROR_COL] = series.values[k]
        matrix[k, MASTER_COL] = dataset.master[d]
        matrix[k, COM_DATE_COL] = cal.com_date
        matrix[k, 3:25] = cal.as_array()
        matrix[k, NUMBER_COL] = n
    return DailyFeatures(dates=dates, matrix=matrix)


def make_windows(feats: DailyFeatures, window_size: int) -> WindowSamples:
    """All stride-1 windows; sample count = n_days - window_size."""
    n_days = len(feats)
    w = window_size
    if n_days < w + 1:
        raise PredictorError(f"need at least {w + 1} days, have {n_days}")
    n = n_days - w
    inputs = np.stack([feats.matrix[i : i + w] for i in range(n)])
    targets = feats.matrix[w:, ERROR_COL].copy()
    return WindowSamples(
        inputs=inputs,
        targets=targets,
        target_dates=feats.dates[w:],
        window_size=w,
    )


def split_train_test(samples: WindowSamples, n_test: int) -> tuple[WindowSamples, WindowSamples]:
    """Chronological split: the last n_test samples are the test set."""
    n = len(samples)
    if not (0 <= n_test < n):
        raise PredictorError(f"n_test={n_test} out of range for {n} samples")
    cut = n - n_test
    head = WindowSamples(samples.inputs[:cut], samples.targets[:cut],
                         samples.target_dates[:cut], samples.window_size)
    tail = WindowSamples(samples.inputs[cut:], samples.targets[cut:],
                         samples.target_dates[cut:], samples.window_size)
    return head, tail


def _training_day_rows(samples: WindowSamples) -> np.ndarray:
    # stride-1 consecutive windows: the unique day rows are the whole first
    # window plus the last row of every later window
    if len(samples) == 1:
        return samples.inputs[0]
    return np.vstack([samples.inputs[0], samples.inputs[1:, -1, :]])


def build_predictor_net(config: PredictorConfig) -> nn.Sequential:
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, 7)))
    h1, h2 = config.hidden_dims
    return nn.Sequential([
        nn.LstmLayer(N_FEATURES, h1, return_sequences=True, rng=rng),
        nn.LstmLayer(h1, h2, rng=rng),
        nn.Dense(h2, 1, rng=rng),
    ])


def train(samples: WindowSamples, config: PredictorConfig) -> TrainedPredictor:
    """Train the predictor; deterministic given config.seed.

    A validation tail (val_fraction of the training samples, chronological)
    drives early stopping with the configured patience; the best-validation
    parameters are restored.
    """
    if len(samples) < 1:
        raise PredictorError("no training samples")
    scaler = Standardizer.fit(_training_day_rows(samples))
    x_all = scaler.transform(samples.inputs)
    y_all = scaler.standardize_target(samples.targets)[:, None]

    n_val = int(round(config.val_fraction * len(samples)))
    n_val = min(n_val, len(samples) - 1)
    if n_val > 0:
        x_train, y_train = x_all[:-n_val], y_all[:-n_val]
        x_val, y_val = x_all[-n_val:], y_all[-n_val:]
    else:
        x_train, y_train = x_all, y_all
        x_val, y_val = x_all, y_all

    net = build_predictor_net(config)
    opt = nn.Adam(lr=config.learning_rate)
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, 13)))
    n_train = x_train.shape[0]

    def val_mse() -> float:
        pred = net.forward(x_val)
        return float(np.mean((pred - y_val) ** 2))

    best = {name: p.copy() for name, p in net.params().items()}
    best_val = val_mse()
    since_best = 0
    loss_curve = []
    for epoch in range(config.epochs):
        order = rng.permutation(n_train)
        epoch_loss = 0.0
        for lo in range(0, n_train, config.batch_size):
            idx = order[lo : lo + config.batch_size]
            out = net.forward(x_train[idx])
            loss, grad = nn.mse_loss(out, y_train[idx])
            if not np.isfinite(loss):
                raise PredictorError(
                    f"nonfinite training loss {loss} at epoch {epoch}, batch start {lo}"
                )
            net.backward(grad)
            opt.step(net.params(), net.grads())
            epoch_loss += loss * len(idx)
        loss_curve.append(epoch_loss / n_train)
        current = val_mse()
        if current < best_val:
            best_val = current
            best = {name: p.copy() for name, p in net.params().items()}
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break
    for name, p in net.params().items():
        p[...] = best[name]

    train_pred = net.forward(x_train)
    train_mse = float(np.mean((train_pred - y_train) ** 2))
    return TrainedPredictor(
        net=net,
        standardizer=scaler,
        config=config,
        train_mse=train_mse,
        val_mse=best_val,
        loss_curve=loss_curve,
    )


def predict_series(model: TrainedPredictor, feats: DailyFeatures) -> ResidualSeries:
    """One-step-ahead prediction for every day with a full window of history."""
    w = model.config.window_size
    if len(feats) < w + 1:
        raise PredictorError(f"need at least {w + 1} days of features, have {len(feats)}")
    x = model.standardizer.transform(feats.matrix)
    windows = np.stack([x[i : i + w] for i in range(len(feats) - w)])
    z = model.net.forward(windows)[:, 0]
    return ResidualSeries(
        dates=feats.dates[w:],
        values=model.standardizer.destandardize_target(z),
    )


def predict_standardized(model: TrainedPredictor, feats: DailyFeatures) -> ResidualSeries:
    """Like predict_series but in standardized units (for threshold tests)."""
    raw = predict_series(model, feats)
    return ResidualSeries(
        dates=raw.dates, values=model.standardizer.standardize_target(raw.values)
    )


# ---------------------------------------------------------------------------
# persistence and emission
# ---------------------------------------------------------------------------


def save_predictor(path, model: TrainedPredictor) -> None:
    cfg = dataclasses.asdict(model.config)
    cfg["hidden_dims"] = list(model.config.hidden_dims)
    nn.save_checkpoint(
        path,
        model.net,
        seed=model.config.seed,
        training_config={
            "predictor_config": cfg,
            "standardizer": {
                "mean": model.standardizer.mean.tolist(),
                "std": model.standardizer.std.tolist(),
            },
            "train_mse": model.train_mse,
            "val_mse": model.val_mse,
            "loss_curve": model.loss_curve,
        },
    )


def load_predictor(path) -> TrainedPredictor:
    net, _, tc = nn.load_checkpoint(path)
    cfg_dict = dict(tc["predictor_config"])
    cfg_dict["hidden_dims"] = tuple(cfg_dict["hidden_dims"])
    config = PredictorConfig(**cfg_dict)
    scaler = Standardizer(
        mean=np.asarray(tc["standardizer"]["mean"], dtype=np.float64),
        std=np.asarray(tc["standardizer"]["std"], dtype=np.float64),
    )
    return TrainedPredictor(
        net=net,
        standardizer=scaler,
        config=config,
        train_mse=tc["train_mse"],
        val_mse=tc["val_mse"],
        loss_curve=list(tc["loss_curve"]),
    )


def write_predictions_csv(path, observed: ResidualSeries, predicted: ResidualSeries) -> None:
    """Aligned observed/predicted residual errors: date,observed_E,predicted_E."""
    obs = {d: v for d, v in zip(observed.dates, observed.values)}
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "observed_E", "predicted_E"])
        for d, p in zip(predicted.dates, predicted.values):
            if d not in obs:
                raise PredictorError(f"no observed value for {d}")
            writer.writerow([d.isoformat(), repr(float(obs[d])), repr(float(p))])


def read_predictions_csv(path) -> tuple[ResidualSeries, ResidualSeries]:
    """Inverse of write_predictions_csv: (observed, predicted) series."""
    dates, observed, predicted = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["date", "observed_E", "predicted_E"]:
            raise PredictorError(f"unexpected predictions header {header}")
        for row in reader:
            dates.append(dt.date.fromisoformat(row[0]))
            observed.append(float(row[1]))
            predicted.append(float(row[2]))
    obs = np.asarray(observed)
    pred = np.asarray(predicted)
    return ResidualSeries(dates, obs), ResidualSeries(list(dates), pred)
