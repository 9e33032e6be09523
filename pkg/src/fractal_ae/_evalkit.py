"""The two downstream metrics of a feature selection, and their reports.

Linear reconstruction: an unregularized least-squares map from the selected
columns to every column, fitted on the training split and scored on the test
split. Classification: extremely randomized trees on the selected columns.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, fields
from itertools import groupby
from pathlib import Path
from typing import (
    TYPE_CHECKING,
    Iterable,
    Sequence,
)

import numpy as np
from scipy import stats

from fractal_ae._extra_trees import fit_extra_trees, predict
from fractal_ae._matrix import DEFAULT_RIDGE, lstsq, mean_sq
from fractal_ae._models import reconstruct
from fractal_ae._types import ContractViolationError, NumericalError

if TYPE_CHECKING:
    from fractal_ae._models import EncoderDecoder, SelectionResult
    from fractal_ae._numeric import FloatArray, IntArray

METRICS_HEADER = (
    "dataset",
    "method",
    "k",
    "seed",
    "recon_mse",
    "accuracy",
    "group",
    "subnet_mse",
)
SUMMARY_HEADER = (
    "dataset",
    "method",
    "k",
    "group",
    "runs",
    "recon_mean",
    "recon_stderr",
    "accuracy_mean",
    "accuracy_stderr",
)


@dataclass(frozen=True)
class LinearDecoder:
    """Maps the k selected columns to all m columns."""

    coef: FloatArray
    indices: IntArray

    def __post_init__(self) -> None:
        if self.coef.ndim != 2 or self.coef.shape[0] != len(self.indices):
            msg = (
                f"decoder coefficients {self.coef.shape} do not match "
                f"{len(self.indices)} selected features"
            )
            raise ContractViolationError(msg)
        if not np.isfinite(self.coef).all():
            msg = "decoder coefficients contain NaN or Inf"
            raise NumericalError(msg)

    def predict(self, x: FloatArray) -> FloatArray:
        if x.shape[1] != self.coef.shape[1]:
            msg = f"decoder expects {self.coef.shape[1]} features, got {x.shape[1]}"
            raise ContractViolationError(msg)
        return x[:, self.indices] @ self.coef


def fit_linear_decoder(
    train: FloatArray, sel: SelectionResult, ridge: float = DEFAULT_RIDGE
) -> LinearDecoder:
    """Least-squares fit of every column of `train` from the selected columns.

    Raises:
        ContractViolationError: empty selection, or fewer rows than selected
            features.
        NumericalError: every selected column is constant, or the normal
            equations cannot be factored.
    """

    k = len(sel)
    if k < 1:
        msg = "cannot fit a decoder on an empty selection"
        raise ContractViolationError(msg)
    if train.shape[0] < k:
        msg = f"{train.shape[0]} training rows for {k} selected features"
        raise ContractViolationError(msg)
    a = train[:, sel.indices]
    if np.all(np.ptp(a, axis=0) == 0):
        msg = "every selected feature is constant on the training split"
        raise NumericalError(msg)
    return LinearDecoder(lstsq(a, train, ridge), sel.indices.copy())


def recon_error(test: FloatArray, sel: SelectionResult, dec: LinearDecoder) -> float:
    """Mean squared error over all n*m entries of the decoded test split."""

    if not np.array_equal(sel.indices, dec.indices):
        msg = "decoder was fitted on a different selection"
        raise ContractViolationError(msg)
    return mean_sq(test - dec.predict(test))


def subnet_recon_error(
    test: FloatArray, w: FloatArray, ed: EncoderDecoder, sel: SelectionResult
) -> float:
    """Mean squared error of the trained sub-network's own reconstruction."""

    return mean_sq(test - reconstruct(test, w, ed, sel))


def accuracy(pred: IntArray, truth: IntArray) -> float:
    if len(pred) != len(truth):
        msg = f"{len(pred)} predictions for {len(truth)} labels"
        raise ContractViolationError(msg)
    if len(truth) == 0:
        msg = "accuracy of an empty prediction is undefined"
        raise ContractViolationError(msg)
    return float(np.mean(np.asarray(pred) == np.asarray(truth)))


def classify_selection(
    train: FloatArray,
    train_labels: IntArray,
    test: FloatArray,
    test_labels: IntArray,
    sel: SelectionResult,
    *,
    n_trees: int = 100,
    seed: int = 0,
    n_jobs: int = 1,
) -> float:
    """Test accuracy of extra-trees trained on the selected training columns."""

    model = fit_extra_trees(
        train[:, sel.indices], train_labels, n_trees, seed, n_jobs=n_jobs
    )
    return accuracy(predict(model, test[:, sel.indices]), test_labels)


@dataclass(frozen=True)
class MetricsRow:
    dataset: str
    method: str
    k: int
    seed: int
    recon_mse: float
    accuracy: float | None = None
    group: str = "all"
    subnet_mse: float | None = None

    def cells(self) -> list[str]:
        out = []
        for value in asdict(self).values():
            if value is None:
                out.append("")
            elif isinstance(value, float):
                out.append(repr(value))
            else:
                out.append(str(value))
        return out

    @classmethod
    def from_cells(cls, cells: dict[str, str]) -> MetricsRow:
        def opt(name: str) -> float | None:
            raw = cells.get(name, "")
            return float(raw) if raw else None

        return cls(
            dataset=cells["dataset"],
            method=cells["method"],
            k=int(cells["k"]),
            seed=int(cells["seed"]),
            recon_mse=float(cells["recon_mse"]),
            accuracy=opt("accuracy"),
            group=cells.get("group") or "all",
            subnet_mse=opt("subnet_mse"),
        )


def append_metrics(path: str | Path, rows: Iterable[MetricsRow]) -> None:
    """Append rows, writing the header first when the file is new or empty."""

    path = Path(path)
    fresh = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        if fresh:
            writer.writerow(METRICS_HEADER)
        for row in rows:
            writer.writerow(row.cells())


def read_metrics(path: str | Path) -> list[MetricsRow]:
    with open(path, newline="", encoding="utf-8") as f:
        return [MetricsRow.from_cells(r) for r in csv.DictReader(f)]


@dataclass(frozen=True)
class Summary:
    dataset: str
    method: str
    k: int
    group: str
    runs: int
    recon_mean: float
    recon_stderr: float
    accuracy_mean: float | None
    accuracy_stderr: float | None


def _mean_stderr(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    if len(arr) == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(stats.sem(arr, ddof=1))


def summarize(rows: Iterable[MetricsRow]) -> list[Summary]:
    """Mean and standard error across seeds for each (dataset, method, k, group).

    Accuracy is summarized only when every run in the group reported one.
    """

    def key(r: MetricsRow) -> tuple[str, str, int, str]:
        return (r.dataset, r.method, r.k, r.group)

    out = []
    for (dataset, method, k, group), grouped in groupby(sorted(rows, key=key), key):
        runs = list(grouped)
        recon = _mean_stderr([r.recon_mse for r in runs])
        accs = [r.accuracy for r in runs]
        acc: tuple[float | None, float | None] = (None, None)
        if all(a is not None for a in accs):
            acc = _mean_stderr([a for a in accs if a is not None])
        out.append(Summary(dataset, method, k, group, len(runs), *recon, *acc))
    return out


def write_summary(path: str | Path, summaries: Iterable[Summary]) -> None:
    names = [f.name for f in fields(Summary)]
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(SUMMARY_HEADER)
        for s in summaries:
            values = [getattr(s, n) for n in names]
            writer.writerow(["" if v is None else v for v in values])
