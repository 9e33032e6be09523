"""The Adam training loop shared by the AE, IAE, FAE and h-HFAE objectives."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from logging import getLogger
from time import perf_counter
from typing import (
    TYPE_CHECKING,
    Any,
    Iterator,
    NamedTuple,
)

import numpy as np

from fractal_ae._adam import AdamState, adam_step
from fractal_ae._matrix import SeededRng, uniform_init, xavier_normal
from fractal_ae._models import (
    AEObjective,
    EncoderDecoder,
    FAEObjective,
    IAEObjective,
)
from fractal_ae._types import ContractViolationError, DivergenceError

if TYPE_CHECKING:
    from pathlib import Path

    from fractal_ae._abstract_model import AbstractObjective
    from fractal_ae._models import Hyperparams, ObjectiveBreakdown
    from fractal_ae._numeric import FloatArray, IntArray

LOGGER = getLogger(__name__)

DIVERGENCE_FACTOR = 1e6
CSV_HEADER = ("epoch", "term1", "term2", "l1", "total", "val_total")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train: ObjectiveBreakdown
    val_total: float

    def row(self) -> list[float | int]:
        return [
            self.epoch,
            *self.train.terms(),
            self.val_total,
            *self.train.group_recon,
        ]


@dataclass
class TrainReport:
    """Per-epoch loss curve plus everything needed to replay the run."""

    method: str
    config: dict[str, Any]
    rng: dict[str, Any]
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None
    wall_time: float = 0.0

    @property
    def epochs_run(self) -> int:
        return len(self.records)

    @property
    def best_val_total(self) -> float | None:
        if self.best_epoch is None:
            return None
        return self.records[self.best_epoch].val_total

    def to_csv(self, path: str | Path) -> None:
        """Write the loss curve; hierarchical runs append one column per group."""

        n_groups = len(self.records[0].train.group_recon) if self.records else 0
        header = [*CSV_HEADER, *(f"group{i + 1}" for i in range(n_groups))]
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for rec in self.records:
                writer.writerow(
                    [repr(v) if isinstance(v, float) else v for v in rec.row()]
                )

    def summary(self) -> dict[str, Any]:
        last = self.records[-1] if self.records else None
        return {
            "method": self.method,
            "epochs_run": self.epochs_run,
            "best_epoch": self.best_epoch,
            "best_val_total": self.best_val_total,
            "final_train_total": last.train.total if last else None,
            "wall_time_sec": self.wall_time,
            "config": self.config,
            "rng": self.rng,
        }


class TrainResult(NamedTuple):
    w: FloatArray
    ed: EncoderDecoder
    report: TrainReport


def init_parameters(
    m: int, hp: Hyperparams, rng: SeededRng
) -> tuple[FloatArray, EncoderDecoder]:
    """Draw w ~ U[init_lo, init_hi), then W_E and W_D from the Xavier normal."""

    d = hp.latent_dim
    w = uniform_init(m, hp.init_lo, hp.init_hi, rng)
    enc = xavier_normal(m, d, rng)
    dec = xavier_normal(d, m, rng)
    return w, EncoderDecoder(enc, dec)


def _batches(
    n: int, batch: int | None, rng: SeededRng
) -> Iterator[slice | IntArray]:
    if batch is None or batch >= n:
        yield slice(None)
        return
    order = rng.permutation(n)
    for start in range(0, n, batch):
        yield order[start : start + batch]


def train(
    objective: AbstractObjective, train_x: FloatArray, val_x: FloatArray
) -> TrainResult:
    """Minimize `objective` with Adam, tracking the validation objective.

    Returns the parameters of the best validation epoch (or the last epoch when
    `hp.use_best` is false) and the report.

    Raises:
        ContractViolationError: train and validation feature counts differ or
            k exceeds the feature count.
        DivergenceError: the training total exceeded 1e6 times its initial value.
        NumericalError: a gradient or update became non-finite.
    """

    hp = objective.hp
    if train_x.shape[1] != val_x.shape[1]:
        msg = f"train has {train_x.shape[1]} features, validation {val_x.shape[1]}"
        raise ContractViolationError(msg)
    n, m = train_x.shape
    if hp.k > m:
        msg = f"k={hp.k} exceeds the feature count {m}"
        raise ContractViolationError(msg)

    rng = SeededRng(hp.seed)
    w, ed = init_parameters(m, hp, rng.child(0))
    if not objective.trains_weights:
        w = np.ones(m)
    batch_rng = rng.child(1)

    report = TrainReport(
        method=objective.method.value,
        config=hp.to_dict(),
        rng={**rng.metadata(), "init_key": [0], "batch_key": [1]},
    )
    if hp.epochs == 0:
        return TrainResult(w, ed, report)

    start = perf_counter()
    initial = objective.evaluate(train_x, w, ed).total
    state = AdamState()
    best: tuple[FloatArray, EncoderDecoder] = (w, ed)
    best_val = np.inf

    LOGGER.info(
        "training %s: n=%d m=%d k=%d d=%d epochs=%d initial total %.6g",
        report.method,
        n,
        m,
        hp.k,
        hp.latent_dim,
        hp.epochs,
        initial,
    )

    for epoch in range(hp.epochs):
        for rows in _batches(n, hp.batch, batch_rng):
            xb = train_x[rows]
            grads = objective.gradients(xb, w, ed)
            params = {"enc": ed.enc, "dec": ed.dec}
            grad_map = {"enc": grads.enc, "dec": grads.dec}
            if objective.trains_weights:
                params["w"] = w
                grad_map["w"] = grads.w
            params = adam_step(params, grad_map, state, hp.lr)
            w = params.get("w", w)
            ed = EncoderDecoder(params["enc"], params["dec"])

        train_terms = objective.evaluate(train_x, w, ed)
        val_total = objective.evaluate(val_x, w, ed).total
        report.records.append(EpochRecord(epoch, train_terms, val_total))
        LOGGER.debug("epoch %d: %s val %.6g", epoch, train_terms, val_total)

        if initial > 0 and train_terms.total > DIVERGENCE_FACTOR * initial:
            report.wall_time = perf_counter() - start
            raise DivergenceError(epoch, train_terms.total, initial, report)

        if val_total < best_val:
            best_val = val_total
            report.best_epoch = epoch
            best = (w.copy(), ed.copy())

        if hp.log_every and (epoch + 1) % hp.log_every == 0:
            LOGGER.info(
                "epoch %d/%d: recon %.6g selected %.6g l1 %.6g total %.6g val %.6g",
                epoch + 1,
                hp.epochs,
                *train_terms.terms(),
                val_total,
            )

    report.wall_time = perf_counter() - start
    if hp.use_best:
        w, ed = best
    return TrainResult(w, ed, report)


def train_fae(train_x: FloatArray, val_x: FloatArray, hp: Hyperparams) -> TrainResult:
    return train(FAEObjective(hp), train_x, val_x)


def train_iae(train_x: FloatArray, val_x: FloatArray, hp: Hyperparams) -> TrainResult:
    return train(IAEObjective(hp), train_x, val_x)


def train_ae(train_x: FloatArray, val_x: FloatArray, hp: Hyperparams) -> TrainResult:
    return train(AEObjective(hp), train_x, val_x)
