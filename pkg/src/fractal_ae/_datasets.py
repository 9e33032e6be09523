"""Dataset ingestion, train-fitted scaling, seeded splits and a synthetic generator
with a known best selection."""

from __future__ import annotations

import csv
import gzip
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import (
    TYPE_CHECKING,
    Any,
    BinaryIO,
    Sequence,
)

import numpy as np

from fractal_ae._matrix import SeededRng
from fractal_ae._types import ContractViolationError, DataFormatError

if TYPE_CHECKING:
    from fractal_ae._numeric import FloatArray, IntArray

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
PIXEL_SCALE = 255.0

NORMALIZATIONS = ("minmax", "zscore", "none")

# (Opt1 k, Opt2 k) per dataset.
PROFILES: dict[str, tuple[int, int]] = {
    "mice": (10, 8),
    **dict.fromkeys(
        ("coil20", "activity", "isolet", "mnist", "fashion", "usps"), (50, 36)
    ),
    **dict.fromkeys(
        (
            "glioma",
            "leukemia",
            "pixraw10p",
            "prostate",
            "warpar10p",
            "smk",
            "arcene",
        ),
        (64, 50),
    ),
}


def profile_k(family: str, profile: str) -> int:
    """The number of selected features for `profile` ("opt1" or "opt2")."""

    if family not in PROFILES:
        msg = f"unknown dataset family {family!r}; known: {sorted(PROFILES)}"
        raise ContractViolationError(msg)
    if profile not in ("opt1", "opt2"):
        msg = f"profile must be opt1 or opt2, got {profile!r}"
        raise ContractViolationError(msg)
    return PROFILES[family][0 if profile == "opt1" else 1]


@dataclass(frozen=True)
class Dataset:
    """Samples as rows, features as columns.

    `x` may hold NaN for missing cells until `impute_mean` runs. `provenance` is a
    JSON-serializable record of the source file and every transformation applied.
    """

    x: FloatArray
    labels: IntArray | None = None
    feature_names: tuple[str, ...] | None = None
    provenance: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.x.ndim != 2:
            msg = f"dataset matrix must be 2-D, got shape {self.x.shape}"
            raise ContractViolationError(msg)
        if self.labels is not None and len(self.labels) != self.x.shape[0]:
            msg = f"{len(self.labels)} labels for {self.x.shape[0]} samples"
            raise ContractViolationError(msg)
        if self.feature_names is not None and len(self.feature_names) != self.m:
            msg = f"{len(self.feature_names)} feature names for {self.m} features"
            raise ContractViolationError(msg)

    @property
    def n(self) -> int:
        return int(self.x.shape[0])

    @property
    def m(self) -> int:
        return int(self.x.shape[1])

    @property
    def has_missing(self) -> bool:
        return bool(np.isnan(self.x).any())

    def take(self, rows: IntArray, **provenance: Any) -> Dataset:
        return Dataset(
            self.x[rows],
            None if self.labels is None else self.labels[rows],
            self.feature_names,
            {**self.provenance, **provenance},
        )


@dataclass(frozen=True)
class Scaler:
    """Per-feature affine map (v - offset) / scale fitted on one split.

    Features with zero scale map to 0.
    """

    mode: str
    offset: FloatArray
    scale: FloatArray

    @classmethod
    def fit(cls, x: FloatArray, mode: str) -> Scaler:
        if mode not in NORMALIZATIONS:
            msg = f"normalization must be one of {NORMALIZATIONS}, got {mode!r}"
            raise ContractViolationError(msg)
        m = x.shape[1]
        if mode == "none":
            return cls(mode, np.zeros(m), np.ones(m))
        if mode == "minmax":
            lo = np.nanmin(x, axis=0)
            return cls(mode, lo, np.nanmax(x, axis=0) - lo)
        return cls(mode, np.nanmean(x, axis=0), np.nanstd(x, axis=0))

    def apply(self, x: FloatArray) -> FloatArray:
        if x.shape[1] != self.offset.shape[0]:
            msg = f"scaler fitted on {self.offset.shape[0]} features, got {x.shape[1]}"
            raise ContractViolationError(msg)
        constant = self.scale == 0
        safe = np.where(constant, 1.0, self.scale)
        out = (x - self.offset) / safe
        out[:, constant] = 0.0
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode,
            "offset": self.offset.tolist(),
            "scale": self.scale.tolist(),
        }


def normalize(d: Dataset, mode: str, fit_on: Dataset | None = None) -> Dataset:
    """Scale `d` with a scaler fitted on `fit_on` (default: `d` itself)."""

    source = d if fit_on is None else fit_on
    scaler = Scaler.fit(source.x, mode)
    return replace(
        d,
        x=scaler.apply(d.x),
        provenance={**d.provenance, "normalization": scaler.to_dict()},
    )


def normalize_minmax(d: Dataset, fit_on: Dataset | None = None) -> Dataset:
    """Map every feature to [0, 1] using the min and max of `fit_on`.

    Constant features map to 0.
    """

    return normalize(d, "minmax", fit_on)


def normalize_zscore(d: Dataset, fit_on: Dataset | None = None) -> Dataset:
    return normalize(d, "zscore", fit_on)


def impute_mean(d: Dataset, fit_on: Dataset | None = None) -> Dataset:
    """Replace NaN cells with the per-feature mean of `fit_on` (default `d`).

    Features that are entirely missing in `fit_on` are filled with 0.
    """

    source = d if fit_on is None else fit_on
    with np.errstate(invalid="ignore"):
        counts = np.sum(~np.isnan(source.x), axis=0)
        sums = np.nansum(source.x, axis=0)
        means = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    missing = np.isnan(d.x)
    x = np.where(missing, means, d.x)
    return replace(
        d,
        x=x,
        provenance={
            **d.provenance,
            "imputation": {"mode": "mean", "cells": int(missing.sum())},
        },
    )


def prepare_splits(
    train: Dataset, others: Sequence[Dataset], normalization: str
) -> list[Dataset]:
    """Impute and scale `train` and `others` with statistics of `train` only."""

    parts = [train, *others]
    if any(d.has_missing for d in parts):
        parts = [impute_mean(d, fit_on=train) for d in parts]
    return [normalize(d, normalization, fit_on=parts[0]) for d in parts]


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.72
    val: float = 0.08
    test: float = 0.20
    seed: int = 0

    def __post_init__(self) -> None:
        ratios = (self.train, self.val, self.test)
        if any(r <= 0 for r in ratios):
            msg = f"split ratios must be > 0, got {ratios}"
            raise ContractViolationError(msg)
        if not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
            msg = f"split ratios must sum to 1, got {sum(ratios)}"
            raise ContractViolationError(msg)


def split_indices(n: int, spec: SplitSpec) -> tuple[IntArray, IntArray, IntArray]:
    """Seeded shuffle, then contiguous train/val/test blocks.

    Validation and test sizes are floor(n * ratio); the remainder goes to train.
    """

    n_val = math.floor(n * spec.val + 1e-9)
    n_test = math.floor(n * spec.test + 1e-9)
    n_train = n - n_val - n_test
    if min(n_train, n_val, n_test) < 1:
        msg = f"{n} samples are too few for non-empty splits at {spec}"
        raise ContractViolationError(msg)
    order = SeededRng(spec.seed).permutation(n)
    return (
        order[:n_train],
        order[n_train : n_train + n_val],
        order[n_train + n_val :],
    )


def split(d: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    train_idx, val_idx, test_idx = split_indices(d.n, spec)
    record = {
        "split": {
            "mode": "ratio",
            "ratios": [spec.train, spec.val, spec.test],
            "seed": spec.seed,
        }
    }
    return (
        d.take(train_idx, **record, part="train"),
        d.take(val_idx, **record, part="val"),
        d.take(test_idx, **record, part="test"),
    )


def split_holdout(
    d: Dataset,
    test: Dataset,
    *,
    n_trainval: int = 6000,
    n_test: int = 4000,
    val_fraction: float = 0.1,
    seed: int = 0,
) -> tuple[Dataset, Dataset, Dataset]:
    """Subsample a training file and a separate test file.

    Draws `n_trainval` rows of `d` (split train:val by `val_fraction`) and `n_test`
    rows of `test`. This is the protocol for datasets shipped with their own test
    set, such as MNIST.
    """

    if d.m != test.m:
        msg = f"train file has {d.m} features, test file {test.m}"
        raise ContractViolationError(msg)
    if not 0 < val_fraction < 1:
        msg = f"val_fraction must be in (0, 1), got {val_fraction}"
        raise ContractViolationError(msg)
    if n_trainval > d.n or n_test > test.n:
        msg = (
            f"requested {n_trainval}/{n_test} samples from files with "
            f"{d.n}/{test.n} rows"
        )
        raise ContractViolationError(msg)
    n_val = math.floor(n_trainval * val_fraction)
    if n_val < 1 or n_val >= n_trainval or n_test < 1:
        msg = f"{n_trainval} train+val samples cannot hold a validation split"
        raise ContractViolationError(msg)

    rng = SeededRng(seed)
    chosen = rng.child(0).choice(d.n, n_trainval)
    test_rows = rng.child(1).choice(test.n, n_test)
    record = {
        "split": {
            "mode": "holdout",
            "n_trainval": n_trainval,
            "n_test": n_test,
            "val_fraction": val_fraction,
            "seed": seed,
        }
    }
    return (
        d.take(chosen[n_val:], **record, part="train"),
        d.take(chosen[:n_val], **record, part="val"),
        test.take(test_rows, **record, part="test"),
    )


def synth_blocks(
    n: int, blocks: int, per_block: int, noise_std: float, seed: int = 0
) -> Dataset:
    """Block-structured data whose best diverse selection is one feature per block.

    Each block draws a latent U[0, 1) signal; its `per_block` features are that
    signal plus independent N(0, noise_std) noise. Feature j belongs to block
    j // per_block. Labels are the index of the largest latent signal.
    """

    if n < 1 or blocks < 1 or per_block < 1:
        msg = f"synth_blocks needs positive sizes, got n={n} {blocks}x{per_block}"
        raise ContractViolationError(msg)
    if noise_std < 0:
        msg = f"noise_std must be >= 0, got {noise_std}"
        raise ContractViolationError(msg)
    rng = SeededRng(seed)
    latent = rng.child(0).uniform(0.0, 1.0, n * blocks).reshape(n, blocks)
    x = np.repeat(latent, per_block, axis=1)
    if noise_std > 0:
        x = x + rng.child(1).normal(x.shape, noise_std)
    names = tuple(f"b{b}_f{f}" for b in range(blocks) for f in range(per_block))
    return Dataset(
        x,
        np.argmax(latent, axis=1).astype(np.int64),
        names,
        {
            "source": "synth_blocks",
            "blocks": blocks,
            "per_block": per_block,
            "noise_std": noise_std,
            "seed": seed,
        },
    )


def _parse_labels(raw: list[str]) -> tuple[IntArray, list[str] | None]:
    try:
        return np.asarray([int(float(v)) for v in raw], dtype=np.int64), None
    except ValueError:
        classes = sorted(set(raw))
        lookup = {c: i for i, c in enumerate(classes)}
        return np.asarray([lookup[v] for v in raw], dtype=np.int64), classes


def load_csv(
    path: str | Path,
    *,
    has_header: bool = False,
    label_column: int | str | None = None,
    delimiter: str = ",",
) -> Dataset:
    """Read a delimited numeric file, one sample per row.

    Empty cells become NaN (see `impute_mean`); any other cell must parse to a
    finite float. `label_column` is a 0-based index or, with a header, a column
    name; negative indices count from the end. Labels that are not integers are
    mapped to class ids in sorted order.

    Raises:
        DataFormatError: the file is empty, a row is ragged or a cell is not
            a finite number. The message carries the 1-based line number.
    """

    source = str(path)
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f, delimiter=delimiter)
        rows = [(i + 1, row) for i, row in enumerate(reader) if row]

    header: list[str] | None = None
    if has_header:
        if not rows:
            raise DataFormatError(source, "empty file")
        header = [h.strip() for h in rows[0][1]]
        rows = rows[1:]
    if not rows:
        raise DataFormatError(source, "no data rows")

    width = len(header) if header is not None else len(rows[0][1])
    label_idx: int | None = None
    if label_column is not None:
        if isinstance(label_column, str):
            if header is None or label_column not in header:
                msg = f"label column {label_column!r} not in header"
                raise DataFormatError(source, msg)
            label_idx = header.index(label_column)
        elif -width <= label_column < width:
            label_idx = label_column % width
        else:
            msg = f"label column {label_column} out of range for {width} columns"
            raise DataFormatError(source, msg)

    values: list[list[float]] = []
    raw_labels: list[str] = []
    for lineno, row in rows:
        if len(row) != width:
            msg = f"expected {width} fields, got {len(row)}"
            raise DataFormatError(source, msg, lineno)
        parsed = []
        for col, cell in enumerate(row):
            cell = cell.strip()
            if col == label_idx:
                raw_labels.append(cell)
                continue
            if not cell:
                parsed.append(math.nan)
                continue
            try:
                value = float(cell)
            except ValueError:
                msg = f"non-numeric value {cell!r} in column {col + 1}"
                raise DataFormatError(source, msg, lineno) from None
            if not math.isfinite(value):
                msg = f"non-finite value {cell!r} in column {col + 1}"
                raise DataFormatError(source, msg, lineno)
            parsed.append(value)
        values.append(parsed)

    x = np.asarray(values, dtype=np.float64)
    if x.shape[1] == 0:
        raise DataFormatError(source, "no feature columns")
    provenance: dict[str, Any] = {"source": source, "format": "csv"}
    labels = None
    if label_idx is not None:
        labels, classes = _parse_labels(raw_labels)
        provenance["label_column"] = label_idx
        if classes is not None:
            provenance["classes"] = classes
    names = None
    if header is not None:
        names = tuple(h for i, h in enumerate(header) if i != label_idx)
    return Dataset(x, labels, names, provenance)


def write_csv(path: str | Path, d: Dataset, *, header: bool = True) -> None:
    """Write `d` with full float precision; labels go in a trailing column."""

    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        if header:
            names = d.feature_names or tuple(f"f{j}" for j in range(d.m))
            writer.writerow([*names, *(("label",) if d.labels is not None else ())])
        for i, row in enumerate(d.x):
            cells = ["" if math.isnan(v) else repr(float(v)) for v in row]
            if d.labels is not None:
                cells.append(str(int(d.labels[i])))
            writer.writerow(cells)


def _open_binary(path: Path) -> BinaryIO:
    if path.suffix == ".gz":
        return gzip.open(path, "rb")  # type: ignore[return-value]
    return open(path, "rb")


def _read_idx(path: Path, magic: int, n_dims: int) -> tuple[tuple[int, ...], bytes]:
    header_size = 4 * (1 + n_dims)
    with _open_binary(path) as f:
        header = f.read(header_size)
        if len(header) < header_size:
            msg = f"truncated header ({len(header)} of {header_size} bytes)"
            raise DataFormatError(str(path), msg, 0)
        found, *dims = struct.unpack(f">{1 + n_dims}I", header)
        if found != magic:
            msg = f"bad magic number 0x{found:08x}, expected 0x{magic:08x}"
            raise DataFormatError(str(path), msg, 0)
        payload = f.read()
    expected = int(np.prod(dims))
    if len(payload) < expected:
        msg = f"truncated data: {len(payload)} of {expected} bytes after header"
        raise DataFormatError(str(path), msg, header_size + len(payload))
    return tuple(dims), payload[:expected]


def load_idx(images: str | Path, labels: str | Path | None = None) -> Dataset:
    """Read an IDX image file (and optionally its label file).

    Images are flattened row by row, so pixel (r, c) becomes feature r * cols + c,
    and scaled to [0, 1] by dividing by 255. Gzipped files are read transparently.

    Raises:
        DataFormatError: bad magic number, truncated file, or image and label
            counts differ. `line` holds the byte offset of the problem.
    """

    images = Path(images)
    (n, rows, cols), payload = _read_idx(images, IDX_IMAGE_MAGIC, 3)
    x = np.frombuffer(payload, dtype=np.uint8).reshape(n, rows * cols)
    x = x.astype(np.float64) / PIXEL_SCALE

    y = None
    provenance: dict[str, Any] = {
        "source": str(images),
        "format": "idx",
        "image_shape": [rows, cols],
        "pixel_scale": PIXEL_SCALE,
    }
    if labels is not None:
        labels = Path(labels)
        (n_labels,), label_bytes = _read_idx(labels, IDX_LABEL_MAGIC, 1)
        if n_labels != n:
            msg = f"{n_labels} labels for {n} images in {images}"
            raise DataFormatError(str(labels), msg, 4)
        y = np.frombuffer(label_bytes, dtype=np.uint8).astype(np.int64)
        provenance["labels"] = str(labels)
    return Dataset(x, y, None, provenance)


def load_dataset(
    path: str | Path,
    fmt: str,
    *,
    labels: str | Path | None = None,
    has_header: bool = False,
    label_column: int | str | None = None,
) -> Dataset:
    """Dispatch to `load_csv` or `load_idx` by format name."""

    if fmt == "csv":
        return load_csv(path, has_header=has_header, label_column=label_column)
    if fmt == "idx":
        return load_idx(path, labels)
    msg = f"unknown dataset format {fmt!r}; expected csv or idx"
    raise ContractViolationError(msg)
