"""Classical regressors for the residual-error prediction comparison.

Bayesian ridge (evidence maximization), elastic net (coordinate descent),
and gradient-boosted regression trees, all consuming the same sliding
windows as the recurrent predictor, flattened to 26*W feature vectors.
The target-rate table counts test days where a model's predicted daily
error falls outside [observed - t, observed + t]; on a malfunction-injected
horizon more out-of-band days mean the malfunction is more visible.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .predictor import WindowSamples

KIND_BAYESIAN_RIDGE = "bayesian_ridge"
KIND_ELASTIC_NET = "elastic_net"
KIND_GBR = "gbr"


class BaselineError(ValueError):
    pass


@dataclass(frozen=True)
class FlatSample:
    x: np.ndarray  # (26*W,)
    y: float


def flatten_windows(samples: WindowSamples) -> list[FlatSample]:
    """One FlatSample per window: features concatenated day-major."""
    n = samples.inputs.shape[0]
    flat = samples.inputs.reshape(n, -1)
    return [FlatSample(x=flat[i].copy(), y=float(samples.targets[i])) for i in range(n)]


def design_matrix(samples: list[FlatSample]) -> tuple[np.ndarray, np.ndarray]:
    if not samples:
        raise BaselineError("no samples")
    X = np.stack([s.x for s in samples]).astype(np.float64)
    y = np.array([s.y for s in samples], dtype=np.float64)
    return X, y


# ---------------------------------------------------------------------------
# model container
# ---------------------------------------------------------------------------


@dataclass
class _TreeNode:
    feature: int = -1
    threshold: float = 0.0
    left: "_TreeNode | None" = None
    right: "_TreeNode | None" = None
    value: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class BaselineModel:
    kind: str
    coef: np.ndarray | None = None
    intercept: float = 0.0
    trees: list[_TreeNode] = field(default_factory=list)
    base_value: float = 0.0
    learning_rate: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise BaselineError(f"expected 2-d design matrix, got shape {X.shape}")
        if self.kind in (KIND_BAYESIAN_RIDGE, KIND_ELASTIC_NET):
            return X @ self.coef + self.intercept
        if self.kind == KIND_GBR:
            out = np.full(X.shape[0], self.base_value)
            for tree in self.trees:
                out += self.learning_rate * _tree_predict(tree, X)
            return out
        raise BaselineError(f"unknown model kind {self.kind!r}")


# ---------------------------------------------------------------------------
# Bayesian ridge via evidence maximization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BayesianRidgeConfig:
    max_iter: int = 300
    tol: float = 1e-6
    init_alpha: float = 1.0  # prior precision on coefficients
    init_beta: float | None = None  # noise precision; default 1/var(y)
    fixed_alpha: float | None = None
    fixed_beta: float | None = None


_PREC_FLOOR = 1e-12
_PREC_CEIL = 1e12


def fit_bayesian_ridge(samples: list[FlatSample],
                       config: BayesianRidgeConfig = BayesianRidgeConfig()) -> BaselineModel:
    """Iterates the evidence fixed point for the precisions (alpha, beta),
    solving the ridge posterior mean at each step on centered data."""
    X, y = design_matrix(samples)
    n, p = X.shape
    if n < 2:
        raise BaselineError("need at least 2 samples")
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = X - x_mean
    yc = y - y_mean
    evals, V = np.linalg.eigh(Xc.T @ Xc)
    evals = np.clip(evals, 0.0, None)
    Xty_rot = V.T @ (Xc.T @ yc)

    y_var = yc @ yc / n
    alpha = config.init_alpha
    beta = config.init_beta if config.init_beta is not None else 1.0 / max(y_var, _PREC_FLOOR)
    if config.fixed_alpha is not None:
        alpha = config.fixed_alpha
    if config.fixed_beta is not None:
        beta = config.fixed_beta

    coef = np.zeros(p)
    n_iter = 0
    converged = False
    for n_iter in range(1, config.max_iter + 1):
        coef = V @ (beta / (alpha + beta * evals) * Xty_rot)
        resid = yc - Xc @ coef
        sse = resid @ resid
        gamma = np.sum(beta * evals / (alpha + beta * evals))
        alpha_new = alpha
        beta_new = beta
        if config.fixed_alpha is None:
            alpha_new = float(np.clip(gamma / max(coef @ coef, _PREC_FLOOR),
                                      _PREC_FLOOR, _PREC_CEIL))
        if config.fixed_beta is None:
            beta_new = float(np.clip(max(n - gamma, _PREC_FLOOR) / max(sse, _PREC_FLOOR),
                                     _PREC_FLOOR, _PREC_CEIL))
        rel = max(abs(alpha_new - alpha) / alpha, abs(beta_new - beta) / beta)
        alpha, beta = alpha_new, beta_new
        if rel < config.tol:
            converged = True
            coef = V @ (beta / (alpha + beta * evals) * Xty_rot)
            break

    intercept = float(y_mean - x_mean @ coef)
    return BaselineModel(
        kind=KIND_BAYESIAN_RIDGE, coef=coef, intercept=intercept,
        diagnostics={"alpha": alpha, "beta": beta, "n_iter": n_iter,
                     "converged": converged},
    )


# ---------------------------------------------------------------------------
# elastic net via coordinate descent
# ---------------------------------------------------------------------------


def fit_elastic_net(samples: list[FlatSample], lam1: float, lam2: float,
                    max_iter: int = 10_000, tol: float = 1e-8) -> BaselineModel:
    """Minimizes 0.5*||y - Xb||^2 + lam1*||b||_1 + lam2*||b||^2 with an
    unpenalized intercept (data centered internally)."""
    if lam1 < 0 or lam2 < 0:
        raise BaselineError("penalties must be nonnegative")
    X, y = design_matrix(samples)
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = np.ascontiguousarray(X - x_mean)
    yc = y - y_mean
    p = X.shape[1]
    col_sq = (Xc * Xc).sum(axis=0)
    beta = np.zeros(p)
    resid = yc.copy()
    n_iter = 0
    converged = False
    for n_iter in range(1, max_iter + 1):
        max_delta = 0.0
        for j in range(p):
            if col_sq[j] == 0.0:
                continue
            rho = Xc[:, j] @ resid + col_sq[j] * beta[j]
            bj = _soft_threshold(rho, lam1) / (col_sq[j] + 2.0 * lam2)
            if bj != beta[j]:
                resid += Xc[:, j] * (beta[j] - bj)
                max_delta = max(max_delta, abs(bj - beta[j]))
                beta[j] = bj
        if max_delta < tol:
            converged = True
            break
    intercept = float(y_mean - x_mean @ beta)
    return BaselineModel(
        kind=KIND_ELASTIC_NET, coef=beta, intercept=intercept,
        diagnostics={"lam1": lam1, "lam2": lam2, "n_iter": n_iter,
                     "converged": converged},
    )


def _soft_threshold(rho: float, lam: float) -> float:
    if rho > lam:
        return rho - lam
    if rho < -lam:
        return rho + lam
    return 0.0


def elastic_net_kkt_residual(samples: list[FlatSample], model: BaselineModel) -> float:
    """Largest violation of the subgradient optimality conditions; 0 at the
    exact optimum. Uses the model's own penalties from its diagnostics."""
    if model.kind != KIND_ELASTIC_NET:
        raise BaselineError("KKT check applies to elastic net models")
    lam1 = model.diagnostics["lam1"]
    lam2 = model.diagnostics["lam2"]
    X, y = design_matrix(samples)
    resid = y - model.predict(X)
    # optimal unpenalized intercept makes the residual mean-zero, so the raw
    # correlations below equal the centered ones
    worst = abs(float(resid.mean())) * len(resid)
    grad = X.T @ resid  # = Xc^T resid given mean-zero resid
    for j, bj in enumerate(model.coef):
        if bj != 0.0:
            worst = max(worst, abs(-grad[j] + lam1 * np.sign(bj) + 2.0 * lam2 * bj))
        else:
            worst = max(worst, max(0.0, abs(grad[j]) - lam1))
    return worst


# ---------------------------------------------------------------------------
# gradient-boosted regression trees
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GbrConfig:
    n_trees: int = 100
    depth: int = 3
    learning_rate: float = 0.1


def fit_gbr(samples: list[FlatSample], config: GbrConfig = GbrConfig()) -> BaselineModel:
    """Stagewise squared-loss boosting: each stage fits a depth-limited tree
    to the current residuals by exact greedy variance-reduction splits."""
    X, y = design_matrix(samples)
    if X.shape[0] < 2:
        raise BaselineError("need at least 2 samples")
    base = float(y.mean())
    pred = np.full(y.shape, base)
    trees = []
    mse_per_stage = []
    for _ in range(config.n_trees):
        residuals = y - pred
        tree = _fit_tree(X, residuals, config.depth)
        trees.append(tree)
        pred = pred + config.learning_rate * _tree_predict(tree, X)
        mse_per_stage.append(float(np.mean((y - pred) ** 2)))
    return BaselineModel(
        kind=KIND_GBR, trees=trees, base_value=base,
        learning_rate=config.learning_rate,
        diagnostics={"mse_per_stage": mse_per_stage, "n_trees": config.n_trees,
                     "depth": config.depth},
    )


def _fit_tree(X: np.ndarray, r: np.ndarray, depth: int) -> _TreeNode:
    n = r.size
    if depth == 0 or n < 2 or np.ptp(r) == 0.0:
        return _TreeNode(value=float(r.mean()))
    split = _best_split(X, r)
    if split is None:
        return _TreeNode(value=float(r.mean()))
    feature, threshold = split
    left_sel = X[:, feature] <= threshold
    if not left_sel.any() or left_sel.all():
        return _TreeNode(value=float(r.mean()))
    return _TreeNode(
        feature=feature, threshold=threshold,
        left=_fit_tree(X[left_sel], r[left_sel], depth - 1),
        right=_fit_tree(X[~left_sel], r[~left_sel], depth - 1),
    )


def _best_split(X: np.ndarray, r: np.ndarray) -> tuple[int, float] | None:
    """Exact search over all (feature, threshold) pairs maximizing the
    variance reduction sum_L^2/n_L + sum_R^2/n_R, vectorized per node."""
    n = r.size
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    rs = r[order]
    csum = rs.cumsum(axis=0)
    total = csum[-1]
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    left = csum[:-1]
    gain = left ** 2 / n_left + (total - left) ** 2 / (n - n_left)
    valid = xs[1:] != xs[:-1]  # threshold must separate distinct values
    if not valid.any():
        return None
    gain = np.where(valid, gain, -np.inf)
    pos, feature = np.unravel_index(np.argmax(gain), gain.shape)
    # split at the left-side maximum so "x <= threshold" reproduces the
    # sorted prefix without floating-point midpoint hazards
    return int(feature), float(xs[pos, feature])


def _tree_predict(tree: _TreeNode, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0])
    stack = [(tree, np.arange(X.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if node.is_leaf:
            out[idx] = node.value
            continue
        left_sel = X[idx, node.feature] <= node.threshold
        stack.append((node.left, idx[left_sel]))
        stack.append((node.right, idx[~left_sel]))
    return out


def tree_depth(tree: _TreeNode) -> int:
    if tree.is_leaf:
        return 0
    return 1 + max(tree_depth(tree.left), tree_depth(tree.right))


# ---------------------------------------------------------------------------
# target-rate comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TargetRateRow:
    threshold: float
    model: str
    days_outside: int
    target_rate_pct: float


def compare_on_detection(predictions: dict[str, np.ndarray], observed: np.ndarray,
                         thresholds: list[float]) -> list[TargetRateRow]:
    """Per model and threshold, the count and percentage of days where the
    predicted daily error leaves the band [observed - t, observed + t]."""
    observed = np.asarray(observed, dtype=np.float64)
    n = observed.size
    if n == 0:
        raise BaselineError("no observed days")
    rows = []
    for t in sorted(thresholds):
        for name, pred in predictions.items():
            pred = np.asarray(pred, dtype=np.float64)
            if pred.shape != observed.shape:
                raise BaselineError(
                    f"prediction series for {name!r} has shape {pred.shape}, "
                    f"observed has {observed.shape}"
                )
            outside = int(np.sum(np.abs(pred - observed) > t))
            rows.append(TargetRateRow(
                threshold=float(t), model=name, days_outside=outside,
                target_rate_pct=100.0 * outside / n,
            ))
    return rows


def write_target_rate_csv(path, rows: list[TargetRateRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "model", "days_outside", "target_rate_pct"])
        for row in rows:
            writer.writerow([repr(row.threshold), row.model, row.days_outside,
                             repr(row.target_rate_pct)])
