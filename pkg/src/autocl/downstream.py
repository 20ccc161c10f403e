"""Task heads over frozen embeddings: classification, forecasting, anomaly.

These provide the reward signal during search and the final evaluation
metrics. All of them consume plain numpy arrays; nothing here touches the
autodiff tape.
"""

from __future__ import annotations

import numpy as np

from .encoder import EncoderParams, encode
from .errors import ConfigError, DataError, NumericError

RIDGE_GRID: tuple[float, ...] = (0.1, 1.0, 10.0)
STD_FLOOR = 1e-8


def instance_embed(h: np.ndarray) -> np.ndarray:
    """Per-instance readout: elementwise max over the time axis."""
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 3 or h.shape[1] < 1:
        raise DataError(f"instance_embed expects (batch, time, dim) with T >= 1, got {h.shape}")
    return h.max(axis=1)


def _standardize(train: np.ndarray, *others: np.ndarray):
    mu = train.mean(axis=0)
    sd = np.maximum(train.std(axis=0), STD_FLOOR)
    return tuple((x - mu) / sd for x in (train, *others))


def classification_metrics(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> dict:
    """Accuracy and macro F1; classes absent from both truth and prediction
    contribute an F1 of 0."""
    acc = float(np.mean(y_true == y_pred))
    f1s = []
    for c in range(n_classes):
        tp = float(np.sum((y_pred == c) & (y_true == c)))
        fp = float(np.sum((y_pred == c) & (y_true != c)))
        fn = float(np.sum((y_pred != c) & (y_true == c)))
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1s.append(2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0)
    return {"acc": acc, "macro_f1": float(np.mean(f1s))}


def fit_logistic(
    x: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    epochs: int = 200,
    lr: float = 0.1,
    l2: float = 1e-4,
) -> tuple[np.ndarray, np.ndarray]:
    """Multinomial logistic regression by full-batch gradient descent.

    Inputs are assumed standardized; the l2 penalty applies to weights only.
    """
    n, d = x.shape
    w = np.zeros((d, n_classes))
    b = np.zeros(n_classes)
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0
    for _ in range(epochs):
        logits = x @ w + b
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        g = (p - onehot) / n
        w -= lr * (x.T @ g + l2 * w)
        b -= lr * g.sum(axis=0)
    return w, b


def eval_classification(
    train_x: np.ndarray, train_y: np.ndarray, eval_x: np.ndarray, eval_y: np.ndarray
) -> dict:
    train_y = np.asarray(train_y, dtype=np.int64)
    eval_y = np.asarray(eval_y, dtype=np.int64)
    n_classes = int(train_y.max()) + 1
    if len(np.unique(train_y)) < 2:
        raise ConfigError("classification needs at least two classes in the training split")
    train_s, eval_s = _standardize(np.asarray(train_x, float), np.asarray(eval_x, float))
    w, b = fit_logistic(train_s, train_y, n_classes)
    preds = np.argmax(eval_s @ w + b, axis=1)
    return classification_metrics(eval_y, preds, n_classes)


def ridge_fit(x: np.ndarray, y: np.ndarray, lam: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Closed-form ridge with an intercept via centering.

    Returns (weights, x_mean, y_mean); predict with (x - x_mean) @ w + y_mean.
    """
    x_mean = x.mean(axis=0)
    y_mean = y.mean(axis=0)
    xc = x - x_mean
    yc = y - y_mean
    a = xc.T @ xc + lam * np.eye(x.shape[1])
    try:
        w = np.linalg.solve(a, xc.T @ yc)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"ridge system singular at lambda={lam}") from exc
    return w, x_mean, y_mean


def ridge_predict(x: np.ndarray, fit: tuple[np.ndarray, np.ndarray, np.ndarray]) -> np.ndarray:
    w, x_mean, y_mean = fit
    return (x - x_mean) @ w + y_mean


def eval_forecasting(
    train_x: np.ndarray,
    train_y: np.ndarray,
    val_x: np.ndarray,
    val_y: np.ndarray,
    eval_x: np.ndarray,
    eval_y: np.ndarray,
    lam_grid: tuple[float, ...] = RIDGE_GRID,
) -> dict:
    """Ridge from embeddings to the next-horizon targets; lambda picked by
    validation MSE, metrics reported on the eval split."""
    best = None
    for lam in lam_grid:
        fit = ridge_fit(train_x, train_y, lam)
        val_mse = float(np.mean((ridge_predict(val_x, fit) - val_y) ** 2))
        if best is None or val_mse < best[0]:
            best = (val_mse, lam, fit)
    _, lam, fit = best
    pred = ridge_predict(eval_x, fit)
    return {
        "mse": float(np.mean((pred - eval_y) ** 2)),
        "mae": float(np.mean(np.abs(pred - eval_y))),
        "lambda": lam,
    }


def compute_anomaly_scores(params: EncoderParams, series: np.ndarray, window: int = 64) -> np.ndarray:
    """Score each timestep by how much zero-masking it moves its own embedding.

    The series is processed in non-overlapping windows; within a window the
    masked variants form one batch, so each window costs two forward passes.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 2:
        raise DataError(f"anomaly scoring expects (time, channels), got shape {series.shape}")
    t_total = series.shape[0]
    scores = np.zeros(t_total)
    for start in range(0, t_total, window):
        chunk = series[start : min(start + window, t_total)]
        length = chunk.shape[0]
        observed = encode(params, chunk[None])[0]  # (L, d)
        masked = np.repeat(chunk[None], length, axis=0)
        masked[np.arange(length), np.arange(length)] = 0.0
        h_masked = encode(params, masked)  # (L, L, d)
        diag = h_masked[np.arange(length), np.arange(length)]
        scores[start : start + length] = np.abs(observed - diag).sum(axis=1)
    return scores


def anomaly_threshold(train_scores: np.ndarray) -> float:
    return float(np.mean(train_scores) + 3.0 * np.std(train_scores))


def _true_segments(labels: np.ndarray) -> list[tuple[int, int]]:
    segments = []
    start = None
    for i, flag in enumerate(labels):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            segments.append((start, i - 1))
            start = None
    if start is not None:
        segments.append((start, len(labels) - 1))
    return segments


def eval_anomaly(scores: np.ndarray, labels: np.ndarray, delay: int = 7, threshold: float | None = None) -> dict:
    """Delay-adjusted segment scoring: a true segment counts as fully detected
    iff some prediction lands within `delay` steps of its start; otherwise the
    whole segment counts as missed."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape:
        raise DataError("scores and labels must align one to one")
    if threshold is None:
        threshold = anomaly_threshold(scores)
    predicted = scores > threshold

    adjusted = predicted.copy()
    for start, end in _true_segments(labels):
        detected = predicted[start : min(start + delay + 1, end + 1)].any()
        adjusted[start : end + 1] = detected

    tp = float(np.sum(adjusted & labels))
    fp = float(np.sum(adjusted & ~labels))
    fn = float(np.sum(~adjusted & labels))
    flags = []
    if not labels.any():
        flags.append("no_positive_labels")
    if tp + fp == 0:
        flags.append("no_predictions")
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return {"f1": f1, "precision": precision, "recall": recall, "flags": flags}


def metric_records(task: str, split: str, metrics: dict) -> list[dict]:
    """Flatten a metrics dict into {task, metric, split, value} records."""
    records = []
    for name, value in metrics.items():
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            records.append({"task": task, "metric": name, "split": split, "value": float(value)})
    return records
