"""Elastic-net readout fitted by cyclic coordinate descent.

Objective per target column::

    (1 / 2n) ||y - X b - b0||^2 + lam * (l1_ratio ||b||_1 + (1 - l1_ratio) / 2 ||b||^2)

Features are standardized over the fit rows before descent (constant
columns keep scale 1) and coefficients are mapped back afterwards, so the
stored model predicts straight from raw features.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np


def soft_threshold(z, gamma):
    return np.sign(z) * np.maximum(np.abs(z) - gamma, 0.0)


@dataclass
class RegressionModel:
    coefficients: np.ndarray  # (F, K) in raw feature units
    intercept: np.ndarray  # (K,)
    lam: float
    l1_ratio: float
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    n_iter: int = 0
    converged: bool = True

    @property
    def n_features(self) -> int:
        return self.coefficients.shape[0]

    def to_dict(self) -> dict:
        return {
            "coefficients": self.coefficients.tolist(),
            "intercept": self.intercept.tolist(),
            "lambda": self.lam,
            "l1_ratio": self.l1_ratio,
            "feature_mean": self.feature_mean.tolist(),
            "feature_scale": self.feature_scale.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RegressionModel":
        d = json.loads(text)
        return cls(
            coefficients=np.array(d["coefficients"], dtype=float),
            intercept=np.array(d["intercept"], dtype=float),
            lam=float(d["lambda"]),
            l1_ratio=float(d["l1_ratio"]),
            feature_mean=np.array(d["feature_mean"], dtype=float),
            feature_scale=np.array(d["feature_scale"], dtype=float),
        )


def _as_2d(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def standardize(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale < 1e-12 * max(1.0, float(np.abs(X).max(initial=0.0)))] = 1.0
    return (X - mean) / scale, mean, scale


def objective(beta: np.ndarray, G: np.ndarray, c: np.ndarray, yy: float, n: int, lam: float, l1_ratio: float) -> float:
    """Elastic-net objective for one target from Gram statistics of centered data."""
    rss = yy - 2.0 * beta @ c + beta @ G @ beta
    pen = lam * (l1_ratio * np.abs(beta).sum() + 0.5 * (1.0 - l1_ratio) * beta @ beta)
    return 0.5 * rss / n + pen


class ObjectiveIncreaseError(AssertionError):
    pass


def _descend(G, c, yy, n, lam, l1_ratio, tol, max_iter, beta, trace):
    """Covariance-update coordinate descent for a single target column."""
    diag = (np.diag(G) / n).tolist()
    denom = [d + lam * (1.0 - l1_ratio) for d in diag]
    gamma = float(lam * l1_ratio)
    Gn = G / n
    grad = c / n - Gn @ beta  # x_j . r / n
    cn = c / n
    prev = objective(beta, G, c, yy, n, lam, l1_ratio)
    # round-off of the Gram-form objective scales with ||y||^2 / 2n
    slack = 1e-12 * (yy / (2 * n) + abs(prev)) + 1e-15
    active = [j for j in range(len(beta)) if denom[j] != 0.0]
    b = beta.tolist()
    n_iter, converged = 0, False
    for n_iter in range(1, max_iter + 1):
        max_delta = 0.0
        for j in active:
            old = b[j]
            z = float(grad[j]) + diag[j] * old
            # scalar soft threshold; a numpy ufunc call costs more than the math
            new = ((z - gamma) if z > gamma else (z + gamma) if z < -gamma else 0.0) / denom[j]
            if new != old:
                delta = new - old
                grad -= Gn[j] * delta  # G is symmetric; rows are contiguous
                b[j] = new
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        beta[:] = b
        # r^T r / n = yy/n - 2 c.b/n + b.G b/n, with G b / n = c/n - grad
        rss_n = yy / n - 2.0 * (beta @ cn) + beta @ (cn - grad)
        cur = 0.5 * rss_n + lam * (l1_ratio * np.abs(beta).sum() + 0.5 * (1.0 - l1_ratio) * (beta @ beta))
        if trace is not None:
            trace.append(float(cur))
        if cur > prev + slack:
            raise ObjectiveIncreaseError(f"objective rose from {prev} to {cur} at sweep {n_iter}")
        prev = cur
        if max_delta < tol:
            converged = True
            break
    return beta, n_iter, converged


def fit_elastic_net(
    X,
    Y,
    lam: float = 1e-4,
    l1_ratio: float = 0.5,
    tol: float = 1e-10,
    max_iter: int = 10000,
    trace: list | None = None,
    warm_start: RegressionModel | None = None,
) -> RegressionModel:
    """Fit one elastic net per target column of ``Y``.

    ``tol`` bounds the largest coefficient change (standardized units) in a
    sweep. Hitting ``max_iter`` is reported through ``converged``, not raised.
    When ``trace`` is a list it receives the objective after every sweep,
    summed over targets. ``warm_start`` seeds the descent with another
    model's coefficients (same feature standardization assumed).
    """
    X, Y = _as_2d(X), _as_2d(Y)
    if X.shape[0] != Y.shape[0] or X.shape[0] < 2:
        raise ValueError("X and Y need the same number of rows, at least 2")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise ValueError("inputs contain NaN or infinite values")
    if lam < 0 or not (0.0 <= l1_ratio <= 1.0):
        raise ValueError("lambda must be >= 0 and l1_ratio in [0, 1]")
    n = X.shape[0]
    Xs, mean, scale = standardize(X)
    y_mean = Y.mean(axis=0)
    Yc = Y - y_mean
    G = Xs.T @ Xs
    C = Xs.T @ Yc
    betas = np.zeros((X.shape[1], Y.shape[1]))
    if warm_start is not None:
        if warm_start.coefficients.shape != betas.shape:
            raise ValueError("warm start has the wrong coefficient shape")
        betas = warm_start.coefficients * scale[:, None]
    iters, conv = 0, True
    traces = []
    for k in range(Y.shape[1]):
        tr = [] if trace is not None else None
        b, it, ok = _descend(G, C[:, k], float(Yc[:, k] @ Yc[:, k]), n, lam, l1_ratio, tol, max_iter, betas[:, k].copy(), tr)
        betas[:, k] = b
        iters, conv = max(iters, it), conv and ok
        if tr is not None:
            traces.append(tr)
    if trace is not None:
        # pad shorter traces with their final value so sums stay comparable
        length = max(len(t) for t in traces)
        trace.extend(sum(t[i] if i < len(t) else t[-1] for t in traces) for i in range(length))
    coef = betas / scale[:, None]
    intercept = y_mean - mean @ coef
    return RegressionModel(coef, intercept, float(lam), float(l1_ratio), mean, scale, iters, conv)


def predict(model: RegressionModel, X) -> np.ndarray:
    X = _as_2d(X)
    if X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {X.shape[1]}")
    return X @ model.coefficients + model.intercept


def rmse(pred, target) -> float:
    """Root mean squared error pooled over every entry."""
    pred, target = np.asarray(pred, dtype=float), np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    if pred.size == 0:
        raise ValueError("rmse of an empty array")
    return float(np.sqrt(np.mean((pred - target) ** 2)))


def per_target_rmse(pred, target) -> list[float]:
    pred, target = _as_2d(pred), _as_2d(target)
    return [float(v) for v in np.sqrt(np.mean((pred - target) ** 2, axis=0))]


@dataclass
class FitReport:
    train_rmse: float
    test_rmse: float
    per_target_train: list[float]
    per_target_test: list[float]
    iterations: int
    converged: bool
    lam: float
    l1_ratio: float
    model: str = "qesn"
    grid: list[dict] = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        """One row per grid point (or just the chosen fit when no grid ran)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "lambda", "l1_ratio", "train_rmse", "test_rmse", "selection_rmse", "iterations", "converged", "chosen"])
        rows = self.grid or [{
            "lambda": self.lam, "l1_ratio": self.l1_ratio, "train_rmse": self.train_rmse,
            "test_rmse": self.test_rmse, "selection_rmse": self.test_rmse,
            "iterations": self.iterations, "converged": self.converged,
        }]
        for r in rows:
            chosen = r["lambda"] == self.lam and r["l1_ratio"] == self.l1_ratio
            w.writerow([self.model, repr(r["lambda"]), repr(r["l1_ratio"]), repr(r["train_rmse"]), repr(r["test_rmse"]),
                        repr(r["selection_rmse"]), r["iterations"], r["converged"], chosen])
        return buf.getvalue()


def report_for(model: RegressionModel, X_train, Y_train, X_test, Y_test, label: str = "qesn") -> FitReport:
    p_tr, p_te = predict(model, X_train), predict(model, X_test)
    return FitReport(
        train_rmse=rmse(p_tr, _as_2d(Y_train)),
        test_rmse=rmse(p_te, _as_2d(Y_test)),
        per_target_train=per_target_rmse(p_tr, Y_train),
        per_target_test=per_target_rmse(p_te, Y_test),
        iterations=model.n_iter,
        converged=model.converged,
        lam=model.lam,
        l1_ratio=model.l1_ratio,
        model=label,
    )


DEFAULT_LAMBDA_GRID = (0.0, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2)
DEFAULT_L1_GRID = (0.0, 0.5, 1.0)


def tune_hyperparameters(
    X_train,
    Y_train,
    X_test,
    Y_test,
    lambda_grid=DEFAULT_LAMBDA_GRID,
    l1_grid=DEFAULT_L1_GRID,
    selection: str = "test",
    tol: float = 1e-8,
    max_iter: int = 5000,
    workers: int = 1,
    label: str = "qesn",
) -> tuple[RegressionModel, FitReport]:
    """Exhaustive grid search.

    ``selection="test"`` picks the grid point with the lowest test RMSE.
    ``selection="validation"`` holds out the last 20% of the training rows,
    selects on them, then refits the winner on all training rows.
    Ties go to the larger lambda.
    """
    if not lambda_grid or not l1_grid:
        raise ValueError("hyperparameter grids must be non-empty")
    if selection not in ("test", "validation"):
        raise ValueError("selection must be 'test' or 'validation'")
    X_train, Y_train, X_test, Y_test = map(_as_2d, (X_train, Y_train, X_test, Y_test))
    if selection == "validation":
        cut = int(math.floor(0.8 * len(X_train)))
        fit_X, fit_Y, sel_X, sel_Y = X_train[:cut], Y_train[:cut], X_train[cut:], Y_train[cut:]
    else:
        fit_X, fit_Y, sel_X, sel_Y = X_train, Y_train, X_test, Y_test
    lams = sorted({float(v) for v in lambda_grid}, reverse=True)
    l1s = [float(v) for v in dict.fromkeys(l1_grid)]

    def path(l1):
        # strongest penalty first; each fit warm-starts the next
        out, prev = {}, None
        for lam in lams:
            m = fit_elastic_net(fit_X, fit_Y, lam, l1, tol=tol, max_iter=max_iter, warm_start=prev)
            out[lam] = (m, rmse(predict(m, sel_X), sel_Y))
            prev = m
        return out

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            paths = dict(zip(l1s, pool.map(path, l1s)))
    else:
        paths = {l1: path(l1) for l1 in l1s}
    points = [(lam, l1) for lam in lams for l1 in l1s]
    results = [paths[l1][lam] for lam, l1 in points]

    grid = []
    best = None
    for (lam, l1), (m, sel) in zip(points, results):
        grid.append({
            "lambda": lam, "l1_ratio": l1,
            "train_rmse": rmse(predict(m, X_train), Y_train),
            "test_rmse": rmse(predict(m, X_test), Y_test),
            "selection_rmse": sel, "iterations": m.n_iter, "converged": m.converged,
        })
        key = (sel, -lam)
        if best is None or key < best[0]:
            best = (key, m)
    model = best[1]
    if selection == "validation":
        model = fit_elastic_net(X_train, Y_train, model.lam, model.l1_ratio, tol=tol, max_iter=max_iter)
    report = report_for(model, X_train, Y_train, X_test, Y_test, label)
    report.grid = grid
    report.extras["selection"] = selection
    return model, report
