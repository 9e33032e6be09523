"""h-Hierarchy FAE: h disjoint top-k groups trained jointly.

Group 1 is the usual top-k set; group i is the top-k of w after removing groups
1..i-1, so the groups partition the top h*k features in descending importance.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from typing import (
    TYPE_CHECKING,
    Any,
    NamedTuple,
)

import numpy as np

from fractal_ae._abstract_model import AbstractObjective
from fractal_ae._models import (
    EncoderDecoder,
    Gradients,
    Method,
    ObjectiveBreakdown,
    ReconTerm,
    SelectionResult,
    evaluate_terms,
)
from fractal_ae._trainer import TrainReport, train
from fractal_ae._types import ContractViolationError

if TYPE_CHECKING:
    from pathlib import Path

    from fractal_ae._models import Hyperparams
    from fractal_ae._numeric import FloatArray

DEFAULT_LAMBDA0 = 0.05
DEFAULT_LAMBDAS_H3 = (1.5, 2.0, 3.0)


def default_lambdas(h: int) -> tuple[float, ...]:
    """The reference 3-group weights for h=3; FAE's lambda1=2 per group
    otherwise."""

    return DEFAULT_LAMBDAS_H3 if h == len(DEFAULT_LAMBDAS_H3) else (2.0,) * h


@dataclass(frozen=True)
class HierarchyParams:
    """Group structure and weights of the hierarchical objective.

    Attributes:
        h: number of groups.
        k: features per group.
        lambda0: L1 coefficient.
        lambdas: reconstruction weight of each group, lambda_1..lambda_h. None
            resolves to `default_lambdas(h)`.
    """

    h: int
    k: int
    lambda0: float = DEFAULT_LAMBDA0
    lambdas: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.h < 1 or self.k < 1:
            msg = f"h and k must be >= 1, got h={self.h} k={self.k}"
            raise ContractViolationError(msg)
        lambdas = (
            default_lambdas(self.h)
            if self.lambdas is None
            else tuple(float(v) for v in self.lambdas)
        )
        object.__setattr__(self, "lambdas", lambdas)
        if len(lambdas) != self.h:
            msg = f"expected {self.h} group lambdas, got {len(lambdas)}"
            raise ContractViolationError(msg)
        if self.lambda0 < 0 or any(lam < 0 for lam in lambdas):
            msg = "hierarchy lambdas must be >= 0"
            raise ContractViolationError(msg)

    @property
    def group_lambdas(self) -> tuple[float, ...]:
        assert self.lambdas is not None
        return self.lambdas

    @classmethod
    def default(cls, h: int, k: int) -> HierarchyParams:
        return cls(h=h, k=k)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> HierarchyParams:
        return cls(
            h=int(data["h"]),
            k=int(data["k"]),
            lambda0=float(data["lambda0"]),
            lambdas=tuple(float(v) for v in data["lambdas"]),
        )


@dataclass(frozen=True)
class HierarchicalSelection:
    groups: list[SelectionResult]

    @property
    def h(self) -> int:
        return len(self.groups)

    def union(self) -> SelectionResult:
        return SelectionResult(
            np.concatenate([g.indices for g in self.groups]),
            np.concatenate([g.weights for g in self.groups]),
        )

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["group", "feature", "weight"])
            for gi, group in enumerate(self.groups):
                for idx, weight in zip(group.indices, group.weights):
                    writer.writerow([gi + 1, int(idx), repr(float(weight))])


def hierarchical_masks(w: FloatArray, hp: HierarchyParams) -> HierarchicalSelection:
    """Split the top h*k entries of `w` into h consecutive groups of k.

    Equivalent to repeatedly taking the top k after removing earlier groups, with
    ties broken by lower index first.
    """

    m = w.shape[0]
    if hp.h * hp.k > m:
        msg = f"h*k = {hp.h * hp.k} exceeds the feature count {m}"
        raise ContractViolationError(msg)
    order = np.argsort(-w, kind="stable")[: hp.h * hp.k].astype(np.int64)
    groups = []
    for i in range(hp.h):
        idx = order[i * hp.k : (i + 1) * hp.k]
        groups.append(SelectionResult(idx, w[idx].copy()))
    return HierarchicalSelection(groups)


def _terms(hier: HierarchyParams, sel: HierarchicalSelection) -> list[ReconTerm]:
    groups = zip(hier.group_lambdas, sel.groups)
    return [ReconTerm(1.0), *(ReconTerm(lam, g.indices) for lam, g in groups)]


def hfae_objective(
    x: FloatArray,
    w: FloatArray,
    ed: EncoderDecoder,
    hier: HierarchyParams,
    hp: Hyperparams,
    *,
    selection: HierarchicalSelection | None = None,
) -> ObjectiveBreakdown:
    """Global reconstruction + sum_i lambda_i * group-i reconstruction
    + lambda0 * L1(w).

    `selected_recon` reports group 1; all groups are in `group_recon`.
    """

    sel = hierarchical_masks(w, hier) if selection is None else selection
    recon, l1, _ = evaluate_terms(
        x, w, ed, _terms(hier, sel), hier.lambda0, hp, with_grad=False
    )
    full, groups = recon[0], tuple(recon[1:])
    total = full
    for lam, g in zip(hier.group_lambdas, groups):
        total += lam * g
    total += hier.lambda0 * l1
    return ObjectiveBreakdown(full, groups[0], l1, total, group_recon=groups)


def hfae_gradients(
    x: FloatArray,
    w: FloatArray,
    ed: EncoderDecoder,
    hier: HierarchyParams,
    hp: Hyperparams,
    *,
    selection: HierarchicalSelection | None = None,
) -> Gradients:
    """Exact gradients of `hfae_objective`; each group term reaches only the
    weights of its own group."""

    sel = hierarchical_masks(w, hier) if selection is None else selection
    _, _, grads = evaluate_terms(
        x, w, ed, _terms(hier, sel), hier.lambda0, hp, with_grad=True
    )
    assert grads is not None
    return grads


class HFAEObjective(AbstractObjective):
    def __init__(self, hp: Hyperparams, hier: HierarchyParams):
        if hp.k != hier.k:
            msg = f"hyperparameter k={hp.k} != hierarchy k={hier.k}"
            raise ContractViolationError(msg)
        super().__init__(hp)
        self.hier = hier

    @property
    def method(self) -> Method:
        return Method.HFAE

    def evaluate(
        self, x: FloatArray, w: FloatArray, ed: EncoderDecoder
    ) -> ObjectiveBreakdown:
        return hfae_objective(x, w, ed, self.hier, self.hp)

    def gradients(self, x: FloatArray, w: FloatArray, ed: EncoderDecoder) -> Gradients:
        return hfae_gradients(x, w, ed, self.hier, self.hp)

    def select(self, w: FloatArray, ed: EncoderDecoder) -> SelectionResult:
        del ed
        return hierarchical_masks(w, self.hier).union()


class HFAETrainResult(NamedTuple):
    w: FloatArray
    ed: EncoderDecoder
    groups: HierarchicalSelection
    report: TrainReport


def train_hfae(
    train_x: FloatArray,
    val_x: FloatArray,
    hp: Hyperparams,
    hier: HierarchyParams,
) -> HFAETrainResult:
    """Train the hierarchical objective with the shared Adam loop.

    Raises:
        ContractViolationError: h*k exceeds the feature count or k disagrees
            between `hp` and `hier`.
    """

    if hier.h * hier.k > train_x.shape[1]:
        msg = f"h*k = {hier.h * hier.k} exceeds the feature count {train_x.shape[1]}"
        raise ContractViolationError(msg)
    objective = HFAEObjective(hp, hier)
    w, ed, report = train(objective, train_x, val_x)
    report.config["hierarchy"] = hier.to_dict()
    return HFAETrainResult(w, ed, hierarchical_masks(w, hier), report)
