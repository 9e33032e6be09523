"""Extremely randomized trees classifier.

The forest is scikit-learn's `ExtraTreesClassifier` without bootstrap: every tree
sees every sample, splits draw one uniform threshold per candidate feature and keep
the best Gini decrease, and trees grow until nodes are pure or smaller than
`min_samples_split`. Prediction sums the per-leaf class counts over all trees.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import (
    TYPE_CHECKING,
)

import numpy as np
from sklearn.ensemble import ExtraTreesClassifier

from fractal_ae._types import ContractViolationError

if TYPE_CHECKING:
    from sklearn.tree import ExtraTreeClassifier

    from fractal_ae._numeric import FloatArray, IntArray

MAX_FEATURES = ("sqrt", "all")


@dataclass(frozen=True)
class ExtraTreesModel:
    """A fitted forest together with the settings it was fitted with."""

    forest: ExtraTreesClassifier
    n_features: int
    seed: int

    @property
    def n_trees(self) -> int:
        return len(self.forest.estimators_)

    @property
    def classes(self) -> IntArray:
        return np.asarray(self.forest.classes_, dtype=np.int64)

    def leaf_counts(self, tree: ExtraTreeClassifier, x: FloatArray) -> FloatArray:
        """Training class counts of the leaf each row of `x` reaches in `tree`."""

        leaves = tree.apply(x)
        value = np.asarray(tree.tree_.value[:, 0, :], dtype=np.float64)
        # Recent scikit-learn stores class fractions, older releases raw counts.
        fractions = value / value.sum(axis=1, keepdims=True)
        samples = np.asarray(tree.tree_.n_node_samples, dtype=np.float64)
        return (fractions * samples[:, None])[leaves]


def _max_features(max_features: int | str, m: int) -> int | str | None:
    if max_features == "sqrt":
        return "sqrt"
    if max_features == "all":
        return None
    if isinstance(max_features, int) and max_features >= 1:
        return min(max_features, m)
    msg = f"max_features must be one of {MAX_FEATURES} or an int >= 1, "
    msg += f"got {max_features!r}"
    raise ContractViolationError(msg)


def fit_extra_trees(
    x: FloatArray,
    labels: IntArray,
    n_trees: int = 100,
    seed: int = 0,
    *,
    max_features: int | str = "sqrt",
    min_samples_split: int = 2,
    n_jobs: int = 1,
) -> ExtraTreesModel:
    """Fit `n_trees` extremely randomized trees.

    Per-tree seeds are drawn from `seed` before fitting, so the forest does not
    depend on `n_jobs`.

    Raises:
        ContractViolationError: fewer than two samples, label count differs from
            the row count, `n_trees` < 1 or `min_samples_split` < 2.
    """

    if x.ndim != 2:
        msg = f"features must be 2-D, got shape {x.shape}"
        raise ContractViolationError(msg)
    if x.shape[0] < 2:
        msg = f"extra-trees needs at least 2 samples, got {x.shape[0]}"
        raise ContractViolationError(msg)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (x.shape[0],):
        msg = f"{labels.shape[0]} labels for {x.shape[0]} samples"
        raise ContractViolationError(msg)
    if n_trees < 1:
        msg = f"n_trees must be >= 1, got {n_trees}"
        raise ContractViolationError(msg)
    if min_samples_split < 2:
        msg = f"min_samples_split must be >= 2, got {min_samples_split}"
        raise ContractViolationError(msg)

    forest = ExtraTreesClassifier(
        n_estimators=n_trees,
        criterion="gini",
        max_features=_max_features(max_features, x.shape[1]),
        min_samples_split=min_samples_split,
        bootstrap=False,
        random_state=seed,
        n_jobs=n_jobs,
    )
    forest.fit(x, labels)
    return ExtraTreesModel(forest, x.shape[1], seed)


def predict(model: ExtraTreesModel, x: FloatArray) -> IntArray:
    """Per-sample argmax of the leaf class counts summed over all trees.

    Ties go to the lower class id.
    """

    if x.ndim != 2 or x.shape[1] != model.n_features:
        msg = f"model expects {model.n_features} features, got shape {x.shape}"
        raise ContractViolationError(msg)
    votes = np.zeros((x.shape[0], len(model.classes)))
    for tree in model.forest.estimators_:
        votes += model.leaf_counts(tree, x)
    return model.classes[np.argmax(votes, axis=1)]
