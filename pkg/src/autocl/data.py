"""Dataset ingestion, splits, and desk-scale synthetic generators.

Two text formats (UTF-8, LF):

- classification: ``AUTOCL-CLS 1 <n> <T> <c>`` then per instance a
  ``label <int>`` line followed by T rows of c decimals;
- series: ``AUTOCL-SER 1 <T> <c> <has_labels>`` then T rows of c decimals,
  with a trailing 0/1 label column when has_labels is 1.

Floats are written with repr, so write(load(f)) is byte-identical for files
this module produced. Splits are deterministic per seed (stratified for
classification, contiguous for series tasks); channel standardization uses
train-split statistics only. Search code receives a SearchView that simply
has no test accessor, so test data cannot leak into phases 1/2.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

STD_FLOOR = 1e-8
DEFAULT_RATIOS = (0.7, 0.1, 0.2)
TASKS = ("classification", "forecast", "anomaly")

CLS_MAGIC = "AUTOCL-CLS"
SER_MAGIC = "AUTOCL-SER"


def _check_ratios(ratios) -> tuple[float, float, float]:
    if len(ratios) != 3:
        raise ConfigError(f"need train/val/test ratios, got {ratios!r}")
    r = tuple(float(v) for v in ratios)
    if any(v < 0 for v in r) or r[0] <= 0:
        raise ConfigError(f"ratios must be non-negative with a positive train share: {r}")
    if abs(sum(r) - 1.0) > 1e-9:
        raise ConfigError(f"ratios must sum to 1, got {r}")
    return r


@dataclass(frozen=True)
class SearchView:
    """Train and validation data only; phases 1/2 never see test."""

    task: str
    train_x: np.ndarray | None = None
    train_y: np.ndarray | None = None
    val_x: np.ndarray | None = None
    val_y: np.ndarray | None = None
    series: np.ndarray | None = None  # standardized train+val series
    train_end: int = 0  # boundary between train and val inside `series`
    train_labels: np.ndarray | None = None
    val_labels: np.ndarray | None = None


@dataclass(frozen=True)
class TestView:
    """Everything the final report needs, including test labels."""

    task: str
    train_x: np.ndarray | None = None
    train_y: np.ndarray | None = None
    test_x: np.ndarray | None = None
    test_y: np.ndarray | None = None
    series: np.ndarray | None = None  # full standardized series
    train_end: int = 0
    val_end: int = 0
    labels: np.ndarray | None = None


class DatasetBundle:
    """Raw payload plus split bookkeeping and train-split channel stats."""

    def __init__(
        self,
        task: str,
        *,
        instances: np.ndarray | None = None,
        labels: np.ndarray | None = None,
        series: np.ndarray | None = None,
        series_labels: np.ndarray | None = None,
        ratios=DEFAULT_RATIOS,
        seed: int = 0,
    ):
        if task not in TASKS:
            raise ConfigError(f"unknown task {task!r}, expected one of {TASKS}")
        self.task = task
        self.ratios = _check_ratios(ratios)
        self.seed = seed
        if task == "classification":
            if instances is None or labels is None:
                raise DataError("classification needs instances and labels")
            self.instances = np.asarray(instances, dtype=np.float64)
            self.labels = np.asarray(labels, dtype=np.int64)
            if self.instances.ndim != 3 or self.instances.shape[0] != self.labels.shape[0]:
                raise DataError("instances must be (n, T, c) aligned with labels")
            self._check_label_range(self.labels)
            self.split_idx = self._stratified_split()
            train = self.instances[self.split_idx["train"]]
            self.mean = train.mean(axis=(0, 1))
            self.std = np.maximum(train.std(axis=(0, 1)), STD_FLOOR)
            self.series = None
            self.series_labels = None
        else:
            if series is None:
                raise DataError(f"{task} needs a series payload")
            self.series = np.asarray(series, dtype=np.float64)
            if self.series.ndim != 2:
                raise DataError("series must be (T, c)")
            self.series_labels = (
                None if series_labels is None else np.asarray(series_labels, dtype=np.int64)
            )
            if task == "anomaly" and self.series_labels is None:
                raise DataError("anomaly task needs labels")
            if self.series_labels is not None and len(self.series_labels) != len(self.series):
                raise DataError("series labels must align with the series")
            t = self.series.shape[0]
            n_train = int(t * self.ratios[0])
            n_val = int(t * self.ratios[1])
            self.bounds = (n_train, n_train + n_val)
            if n_train < 1:
                raise DataError("train split is empty")
            train = self.series[:n_train]
            self.mean = train.mean(axis=0)
            self.std = np.maximum(train.std(axis=0), STD_FLOOR)
            self.instances = None
            self.labels = None

    @staticmethod
    def _check_label_range(labels: np.ndarray) -> None:
        present = np.unique(labels)
        if present.min() < 0:
            raise DataError("labels must be non-negative")
        expected = np.arange(present.max() + 1)
        if not np.array_equal(present, expected):
            missing = sorted(set(expected.tolist()) - set(present.tolist()))
            raise DataError(f"label gap: classes {missing} absent")

    def _stratified_split(self) -> dict[str, np.ndarray]:
        rng = np.random.default_rng(self.seed)
        idx = {"train": [], "val": [], "test": []}
        for c in np.unique(self.labels):
            members = np.flatnonzero(self.labels == c)
            members = members[rng.permutation(len(members))]
            n = len(members)
            n_train = int(n * self.ratios[0])
            n_val = int(n * self.ratios[1])
            idx["train"].append(members[:n_train])
            idx["val"].append(members[n_train : n_train + n_val])
            idx["test"].append(members[n_train + n_val :])
        out = {k: np.sort(np.concatenate(v)) for k, v in idx.items()}
        if len(out["train"]) == 0:
            raise DataError("train split is empty")
        return out

    def _std_instances(self, which: np.ndarray) -> np.ndarray:
        return (self.instances[which] - self.mean) / self.std

    def _std_series(self) -> np.ndarray:
        return (self.series - self.mean) / self.std

    @property
    def n_channels(self) -> int:
        payload = self.instances if self.task == "classification" else self.series
        return payload.shape[-1]

    def search_view(self) -> SearchView:
        if self.task == "classification":
            return SearchView(
                task=self.task,
                train_x=self._std_instances(self.split_idx["train"]),
                train_y=self.labels[self.split_idx["train"]].copy(),
                val_x=self._std_instances(self.split_idx["val"]),
                val_y=self.labels[self.split_idx["val"]].copy(),
            )
        n_train, n_val_end = self.bounds
        view = self._std_series()[:n_val_end]
        labels = self.series_labels
        return SearchView(
            task=self.task,
            series=view,
            train_end=n_train,
            train_labels=None if labels is None else labels[:n_train].copy(),
            val_labels=None if labels is None else labels[n_train:n_val_end].copy(),
        )

    def test_view(self) -> TestView:
        if self.task == "classification":
            return TestView(
                task=self.task,
                train_x=self._std_instances(self.split_idx["train"]),
                train_y=self.labels[self.split_idx["train"]].copy(),
                test_x=self._std_instances(self.split_idx["test"]),
                test_y=self.labels[self.split_idx["test"]].copy(),
            )
        n_train, n_val_end = self.bounds
        return TestView(
            task=self.task,
            series=self._std_series(),
            train_end=n_train,
            val_end=n_val_end,
            labels=None if self.series_labels is None else self.series_labels.copy(),
        )


# --- text formats -----------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def write_classification(path: str | Path, instances: np.ndarray, labels: np.ndarray) -> None:
    instances = np.asarray(instances, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, t, c = instances.shape
    lines = [f"{CLS_MAGIC} 1 {n} {t} {c}"]
    for i in range(n):
        lines.append(f"label {int(labels[i])}")
        for row in instances[i]:
            lines.append(" ".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def write_series(path: str | Path, values: np.ndarray, labels: np.ndarray | None = None) -> None:
    values = np.asarray(values, dtype=np.float64)
    t, c = values.shape
    has_labels = int(labels is not None)
    lines = [f"{SER_MAGIC} 1 {t} {c} {has_labels}"]
    for i in range(t):
        row = " ".join(_fmt(v) for v in values[i])
        if has_labels:
            row += f" {int(labels[i])}"
        lines.append(row)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def write_dataset(path: str | Path, bundle: DatasetBundle) -> None:
    if bundle.task == "classification":
        write_classification(path, bundle.instances, bundle.labels)
    else:
        write_series(path, bundle.series, bundle.series_labels)


def _parse_floats(token_line: str, count: int, lineno: int) -> list[float]:
    parts = token_line.split()
    if len(parts) != count:
        raise DataError(f"line {lineno}: expected {count} columns, found {len(parts)}")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise DataError(f"line {lineno}: bad decimal ({exc})") from exc


def load_dataset(
    path: str | Path, task: str, ratios=DEFAULT_RATIOS, seed: int = 0
) -> DatasetBundle:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DataError("line 1: empty file")
    header = lines[0].split()
    if header[:2] == [CLS_MAGIC, "1"]:
        if task != "classification":
            raise DataError(f"file holds classification instances, task is {task!r}")
        if len(header) != 5:
            raise DataError("line 1: classification header needs n, T, c")
        n, t, c = (int(v) for v in header[2:])
        expected = 1 + n * (t + 1)
        if len(lines) != expected:
            raise DataError(f"expected {expected} lines for {n} instances, found {len(lines)}")
        instances = np.zeros((n, t, c))
        labels = np.zeros(n, dtype=np.int64)
        cursor = 1
        for i in range(n):
            head = lines[cursor].split()
            if len(head) != 2 or head[0] != "label":
                raise DataError(f"line {cursor + 1}: expected 'label <int>'")
            try:
                labels[i] = int(head[1])
            except ValueError as exc:
                raise DataError(f"line {cursor + 1}: bad label") from exc
            cursor += 1
            for row in range(t):
                instances[i, row] = _parse_floats(lines[cursor], c, cursor + 1)
                cursor += 1
        return DatasetBundle(
            "classification", instances=instances, labels=labels, ratios=ratios, seed=seed
        )
    if header[:2] == [SER_MAGIC, "1"]:
        if task == "classification":
            raise DataError("file holds a series, task is 'classification'")
        if len(header) != 5:
            raise DataError("line 1: series header needs T, c, has_labels")
        t, c, has_labels = (int(v) for v in header[2:])
        if has_labels not in (0, 1):
            raise DataError("line 1: has_labels must be 0 or 1")
        if len(lines) != 1 + t:
            raise DataError(f"expected {1 + t} lines for T={t}, found {len(lines)}")
        values = np.zeros((t, c))
        labels = np.zeros(t, dtype=np.int64) if has_labels else None
        for i in range(t):
            row = _parse_floats(lines[1 + i], c + has_labels, i + 2)
            values[i] = row[:c]
            if has_labels:
                flag = row[c]
                if flag not in (0.0, 1.0):
                    raise DataError(f"line {i + 2}: label column must be 0 or 1")
                labels[i] = int(flag)
        return DatasetBundle(
            task, series=values, series_labels=labels, ratios=ratios, seed=seed
        )
    raise DataError(f"line 1: unrecognized header {lines[0]!r}")


# --- synthetic generators -----------------------------------------------------


def synth_classification(
    n_per_class: int = 50,
    t: int = 128,
    n_classes: int = 3,
    noise: float = 0.5,
    seed: int = 0,
    ratios=DEFAULT_RATIOS,
) -> DatasetBundle:
    """Class k is a sine completing 8(k+1) cycles over T, random phase, plus
    Gaussian noise; labels are exactly balanced."""
    if n_classes < 2:
        raise ConfigError("need at least two classes")
    rng = np.random.default_rng(seed)
    steps = np.arange(t)
    instances = np.zeros((n_per_class * n_classes, t, 1))
    labels = np.zeros(n_per_class * n_classes, dtype=np.int64)
    row = 0
    for k in range(n_classes):
        cycles = 8 * (k + 1)
        for _ in range(n_per_class):
            phase = rng.uniform(0, 2 * np.pi)
            wave = np.sin(2 * np.pi * cycles * steps / t + phase)
            instances[row, :, 0] = wave + rng.normal(scale=noise, size=t) if noise > 0 else wave
            labels[row] = k
            row += 1
    return DatasetBundle(
        "classification", instances=instances, labels=labels, ratios=ratios, seed=seed
    )


def synth_forecast(
    t_total: int = 2000, seed: int = 0, noise: float = 1.0, ratios=DEFAULT_RATIOS
) -> DatasetBundle:
    """Univariate trend + two seasonal components + AR(1) noise."""
    if t_total < 1000:
        raise ConfigError("forecast series needs T >= 1000")
    rng = np.random.default_rng(seed)
    steps = np.arange(t_total)
    trend = 0.001 * steps
    seasonal = 1.0 * np.sin(2 * np.pi * steps / 97.0) + 0.5 * np.sin(2 * np.pi * steps / 23.0)
    ar = np.zeros(t_total)
    if noise > 0:
        eps = rng.normal(scale=0.1 * noise, size=t_total)
        for i in range(1, t_total):
            ar[i] = 0.8 * ar[i - 1] + eps[i]
    values = (trend + seasonal + ar)[:, None]
    return DatasetBundle("forecast", series=values, ratios=ratios, seed=seed)


def synth_anomaly(
    t_total: int = 2000,
    anomaly_rate: float = 0.02,
    seed: int = 0,
    noise: float = 1.0,
    ratios=DEFAULT_RATIOS,
    amplitude_sigma: float = 12.0,
) -> DatasetBundle:
    """Smooth base signal with injected spikes and short level shifts.

    Injected points carry labels; amplitudes sit at ``amplitude_sigma`` times
    the base signal's standard deviation. The floor of 6 keeps every anomaly
    above the z-score detectability threshold; the default of 12 makes them
    unmistakable.
    """
    if not 0 < anomaly_rate <= 0.05:
        raise ConfigError("anomaly_rate must lie in (0, 0.05]")
    if amplitude_sigma < 6.0:
        raise ConfigError("amplitude_sigma must be at least 6")
    rng = np.random.default_rng(seed)
    steps = np.arange(t_total)
    base = np.sin(2 * np.pi * steps / 151.0) + 0.3 * np.sin(2 * np.pi * steps / 41.0)
    if noise > 0:
        base = base + rng.normal(scale=0.05 * noise, size=t_total)
    sigma = float(base.std())
    values = base.copy()
    labels = np.zeros(t_total, dtype=np.int64)

    n_anom = int(round(anomaly_rate * t_total))
    budget = n_anom
    guard = 0
    while budget > 0 and guard < 10_000:
        guard += 1
        if budget >= 3 and rng.random() < 0.3:
            length = int(rng.integers(3, min(7, budget + 1)))
        else:
            length = 1
        start = int(rng.integers(0, t_total - length))
        region = slice(max(0, start - 1), min(t_total, start + length + 1))
        if labels[region].any():
            continue
        sign = -1.0 if rng.random() < 0.5 else 1.0
        amplitude = amplitude_sigma * sigma
        values[start : start + length] += sign * amplitude
        labels[start : start + length] = 1
        budget -= length
    if budget != 0:  # pragma: no cover - placement loop exhausts the budget at rate <= 0.05
        raise DataError("could not place the requested anomaly budget")
    return DatasetBundle(
        "anomaly", series=values[:, None], series_labels=labels, ratios=ratios, seed=seed
    )


def synth_bundle(name: str, seed: int = 0) -> DatasetBundle:
    """Named generator presets for the CLI's synth:<name> data argument."""
    if name == "classification":
        return synth_classification(seed=seed)
    if name == "forecast":
        return synth_forecast(seed=seed)
    if name == "anomaly":
        return synth_anomaly(seed=seed)
    raise ConfigError(f"unknown synthetic dataset {name!r}")
