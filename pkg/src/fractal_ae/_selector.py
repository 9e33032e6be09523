from __future__ import annotations

from typing import (
    TYPE_CHECKING,
)

from fractal_ae._checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from fractal_ae._hfae import HFAEObjective, hierarchical_masks
from fractal_ae._matrix import as_matrix
from fractal_ae._models import (
    AEObjective,
    FAEObjective,
    IAEObjective,
    Method,
    reconstruct,
)
from fractal_ae._trainer import train
from fractal_ae._types import ContractViolationError, FractalAEBaseException

if TYPE_CHECKING:
    from pathlib import Path

    from typing_extensions import Self

    from fractal_ae._abstract_model import AbstractObjective
    from fractal_ae._hfae import HierarchicalSelection, HierarchyParams
    from fractal_ae._models import EncoderDecoder, Hyperparams, SelectionResult
    from fractal_ae._numeric import FloatArray
    from fractal_ae._trainer import TrainReport


class NotFittedError(FractalAEBaseException, RuntimeError):
    """The selector was used before `fit` or `load`."""

    def __init__(self, what: str):
        super().__init__(f"FeatureSelector.{what} needs a fitted model")


def make_objective(
    method: Method, hp: Hyperparams, hierarchy: HierarchyParams | None = None
) -> AbstractObjective:
    if method is Method.HFAE:
        if hierarchy is None:
            msg = "the hfae method needs HierarchyParams"
            raise ContractViolationError(msg)
        return HFAEObjective(hp, hierarchy)
    if hierarchy is not None:
        msg = f"HierarchyParams only apply to hfae, not {method.value}"
        raise ContractViolationError(msg)
    if method is Method.FAE:
        return FAEObjective(hp)
    if method is Method.IAE:
        return IAEObjective(hp)
    return AEObjective(hp)


class FeatureSelector:
    """
    FeatureSelector trains one of the linear selector models and exposes the
    features it picks.

        selector = FeatureSelector(Hyperparams(k=50)).fit(train, val)
        reduced = selector.transform(test)

    Attributes:
        method: which objective is trained (fae, iae, ae or hfae).
        hp: training hyperparameters.
        hierarchy: group structure, for hfae only.
    """

    def __init__(
        self,
        hp: Hyperparams,
        method: Method | str = Method.FAE,
        hierarchy: HierarchyParams | None = None,
    ) -> None:
        self.method = Method(method)
        self.hp = hp
        self.hierarchy = hierarchy
        self._objective = make_objective(self.method, hp, hierarchy)
        self._w: FloatArray | None = None
        self._ed: EncoderDecoder | None = None
        self._rng: dict[str, object] = {}
        self.report: TrainReport | None = None

    def fit(self, train_x: FloatArray, val_x: FloatArray | None = None) -> Self:
        """Train on `train_x`, keeping the parameters that score best on `val_x`.

        Without a validation split, the training data doubles as validation data.
        """

        train_x = as_matrix(train_x, name="train")
        val_x = train_x if val_x is None else as_matrix(val_x, name="validation")
        self._w, self._ed, self.report = train(self._objective, train_x, val_x)
        self._rng = dict(self.report.rng)
        return self

    def _fitted(self, what: str) -> tuple[FloatArray, EncoderDecoder]:
        if self._w is None or self._ed is None:
            raise NotFittedError(what)
        return self._w, self._ed

    @property
    def weights(self) -> FloatArray:
        """The one-to-one layer w (all ones for the plain AE)."""
        return self._fitted("weights")[0]

    @property
    def encoder_decoder(self) -> EncoderDecoder:
        return self._fitted("encoder_decoder")[1]

    def select(self) -> SelectionResult:
        """Selected features, most important first.

        For hfae this is the union of all groups in group order.
        """

        w, ed = self._fitted("select")
        return self._objective.select(w, ed)

    def groups(self) -> HierarchicalSelection:
        w, _ = self._fitted("groups")
        if self.hierarchy is None:
            msg = f"{self.method.value} selectors have no hierarchical groups"
            raise ContractViolationError(msg)
        return hierarchical_masks(w, self.hierarchy)

    def transform(self, x: FloatArray) -> FloatArray:
        sel = self.select()
        x = as_matrix(x)
        if x.shape[1] != self.encoder_decoder.n_features:
            msg = (
                f"selector was fitted on {self.encoder_decoder.n_features} "
                f"features, got {x.shape[1]}"
            )
            raise ContractViolationError(msg)
        return x[:, sel.indices]

    def reconstruct(self, x: FloatArray) -> FloatArray:
        """Reconstruction of every feature through the selected-feature path."""

        w, ed = self._fitted("reconstruct")
        return reconstruct(as_matrix(x), w, ed, self.select())

    def checkpoint(self) -> Checkpoint:
        w, ed = self._fitted("checkpoint")
        return Checkpoint(self.method, self.hp, w, ed, self.hierarchy, self._rng)

    def save(self, path: str | Path) -> None:
        save_checkpoint(path, self.checkpoint())

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint) -> FeatureSelector:
        selector = cls(ckpt.hp, ckpt.method, ckpt.hierarchy)
        selector._w = ckpt.w
        selector._ed = ckpt.ed
        selector._rng = dict(ckpt.rng)
        return selector

    @classmethod
    def load(cls, path: str | Path) -> FeatureSelector:
        return cls.from_checkpoint(load_checkpoint(path))
