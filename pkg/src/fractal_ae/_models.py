"""Linear AE, IAE and FAE models: types, the top-k mask, objectives and their exact
gradients."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from typing import (
    TYPE_CHECKING,
    Any,
    NamedTuple,
    Sequence,
)

import numpy as np

from fractal_ae._abstract_model import AbstractObjective
from fractal_ae._matrix import mean_sq
from fractal_ae._types import ContractViolationError, NumericalError

if TYPE_CHECKING:
    from fractal_ae._numeric import FloatArray, IntArray

INIT_LO = 0.999999
INIT_HI = 0.9999999

L1_MODES = ("mean", "sum")
RECON_NORMS = ("mean", "frobenius")
DEFAULT_BATCH = 32


class Method(str, Enum):
    FAE = "fae"
    IAE = "iae"
    AE = "ae"
    HFAE = "hfae"


@dataclass(frozen=True)
class Hyperparams:
    """Training hyperparameters.

    Defaults are the standard training protocol: lambda1=2, lambda2=0.1,
    Adam at lr=0.001 for 1000 epochs of mini-batches of 32, latent dimension d=k.

    Attributes:
        k: number of selected features.
        d: latent dimension; None means d=k.
        lambda1: FAE weight of the selected-feature reconstruction term. For IAE
            this is the L1 coefficient instead.
        lambda2: FAE L1 coefficient.
        batch: mini-batch size; None, or a size of at least n, trains full-batch.
        l1_mode: "mean" divides the L1 term by m, "sum" does not.
        recon_norm: "mean" divides reconstruction terms by n*m, "frobenius" uses
            the raw squared Frobenius norm.
        use_best: return best-validation parameters rather than the final ones.
    """

    k: int
    d: int | None = None
    lambda1: float = 2.0
    lambda2: float = 0.1
    lr: float = 0.001
    epochs: int = 1000
    batch: int | None = DEFAULT_BATCH
    seed: int = 0
    l1_mode: str = "mean"
    recon_norm: str = "mean"
    init_lo: float = INIT_LO
    init_hi: float = INIT_HI
    log_every: int = 100
    use_best: bool = True

    def __post_init__(self) -> None:
        problems = []
        if self.k < 1:
            problems.append(f"k must be >= 1, got {self.k}")
        if self.d is not None and self.d < 1:
            problems.append(f"d must be >= 1, got {self.d}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            problems.append("lambdas must be >= 0")
        if self.lr <= 0:
            problems.append(f"lr must be > 0, got {self.lr}")
        if self.epochs < 0:
            problems.append(f"epochs must be >= 0, got {self.epochs}")
        if self.batch is not None and self.batch < 1:
            problems.append(f"batch must be >= 1 or None, got {self.batch}")
        if self.l1_mode not in L1_MODES:
            problems.append(f"l1_mode must be one of {L1_MODES}")
        if self.recon_norm not in RECON_NORMS:
            problems.append(f"recon_norm must be one of {RECON_NORMS}")
        if not self.init_lo < self.init_hi:
            problems.append("init_lo must be < init_hi")
        if problems:
            msg = "; ".join(problems)
            raise ContractViolationError(msg)

    @property
    def latent_dim(self) -> int:
        return self.k if self.d is None else self.d

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Hyperparams:
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class EncoderDecoder:
    """The bias-free linear pair f(g(X)) = X W_E W_D."""

    enc: FloatArray
    dec: FloatArray

    def __post_init__(self) -> None:
        if self.enc.ndim != 2 or self.dec.ndim != 2:
            msg = "encoder and decoder must be 2-D"
            raise ContractViolationError(msg)
        if self.enc.shape[1] != self.dec.shape[0]:
            msg = (
                f"latent dimension mismatch: encoder {self.enc.shape}, "
                f"decoder {self.dec.shape}"
            )
            raise ContractViolationError(msg)

    @property
    def n_features(self) -> int:
        return int(self.enc.shape[0])

    @property
    def latent_dim(self) -> int:
        return int(self.enc.shape[1])

    def copy(self) -> EncoderDecoder:
        return EncoderDecoder(self.enc.copy(), self.dec.copy())


@dataclass(frozen=True)
class SelectionResult:
    """Selected feature indices in descending weight order, with their weights."""

    indices: IntArray
    weights: FloatArray

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def k(self) -> int:
        return len(self.indices)

    def mask(self, m: int) -> FloatArray:
        out = np.zeros(m)
        out[self.indices] = 1.0
        return out

    def rank_groups(self, parts: int) -> list[SelectionResult]:
        """Split into `parts` consecutive importance-ranked groups."""

        if not 1 <= parts <= self.k:
            msg = f"cannot split {self.k} features into {parts} groups"
            raise ContractViolationError(msg)
        bounds = np.linspace(0, self.k, parts + 1).round().astype(int)
        return [
            SelectionResult(self.indices[lo:hi], self.weights[lo:hi])
            for lo, hi in zip(bounds[:-1], bounds[1:])
        ]


@dataclass(frozen=True)
class ObjectiveBreakdown:
    """Objective terms before weighting, plus the weighted total."""

    full_recon: float
    selected_recon: float
    l1: float
    total: float
    group_recon: tuple[float, ...] = field(default=())

    def terms(self) -> tuple[float, float, float, float]:
        return (self.full_recon, self.selected_recon, self.l1, self.total)


class Gradients(NamedTuple):
    w: FloatArray
    enc: FloatArray
    dec: FloatArray


@dataclass(frozen=True)
class ReconTerm:
    """One weighted reconstruction term through the features in `support`.

    A None support keeps every feature (the global path).
    """

    coef: float
    support: IntArray | None = None


def check_weights(w: FloatArray, m: int) -> None:
    if w.ndim != 1 or w.shape[0] != m:
        msg = f"feature weights must have shape ({m},), got {w.shape}"
        raise ContractViolationError(msg)
    if not np.isfinite(w).all():
        msg = "feature weights contain NaN or Inf"
        raise NumericalError(msg)


def _check_shapes(x: FloatArray, w: FloatArray, ed: EncoderDecoder) -> None:
    m = x.shape[1]
    check_weights(w, m)
    if ed.n_features != m or ed.dec.shape[1] != m:
        msg = (
            f"model expects {ed.n_features} features, data has {m} "
            f"(decoder {ed.dec.shape})"
        )
        raise ContractViolationError(msg)


def topk_mask(w: FloatArray, k: int) -> SelectionResult:
    """Indices of the `k` largest entries of `w`, largest first.

    Ties are broken by lower index first.
    """

    m = w.shape[0]
    if not 1 <= k <= m:
        msg = f"k must be in [1, {m}], got {k}"
        raise ContractViolationError(msg)
    # A stable sort on -w keeps equal weights in index order:
    order = np.argsort(-w, kind="stable")[:k].astype(np.int64)
    return SelectionResult(order, w[order].copy())


def project_nonneg(w: FloatArray) -> FloatArray:
    return np.maximum(w, 0.0)


def forward(
    x: FloatArray, w: FloatArray, ed: EncoderDecoder, mask: FloatArray | None = None
) -> FloatArray:
    """X Diag(w * mask) W_E W_D; without a mask this is the global path."""

    _check_shapes(x, w, ed)
    scale = w if mask is None else w * mask
    return ((x * scale) @ ed.enc) @ ed.dec


def reconstruct(
    x: FloatArray, w: FloatArray, ed: EncoderDecoder, sel: SelectionResult
) -> FloatArray:
    """Sub-network reconstruction from the selected features only."""

    return forward(x, w, ed, sel.mask(x.shape[1]))


def _l1(w: FloatArray, l1_mode: str) -> float:
    total = float(np.sum(np.abs(w)))
    return total / w.shape[0] if l1_mode == "mean" else total


def evaluate_terms(
    x: FloatArray,
    w: FloatArray,
    ed: EncoderDecoder,
    terms: Sequence[ReconTerm],
    l1_coef: float,
    hp: Hyperparams,
    *,
    with_grad: bool,
) -> tuple[list[float], float, Gradients | None]:
    """Evaluate sum_t coef_t * recon_t + l1_coef * l1(w) and, optionally, its
    exact gradient.

    Returns the unweighted reconstruction terms, the unweighted L1 value and the
    gradients (None when `with_grad` is false).
    """

    _check_shapes(x, w, ed)
    n, m = x.shape
    c = 2.0 / (n * m) if hp.recon_norm == "mean" else 2.0

    recon: list[float] = []
    g_w = np.zeros(m)
    g_enc = np.zeros_like(ed.enc)
    g_dec = np.zeros_like(ed.dec)

    for term in terms:
        cols = slice(None) if term.support is None else term.support
        xs = x[:, cols]
        a = xs * w[cols]
        z = a @ ed.enc[cols]
        r = z @ ed.dec - x
        recon.append(mean_sq(r, norm=hp.recon_norm))
        if not with_grad or term.coef == 0:
            continue
        cc = c * term.coef
        g = r @ ed.dec.T
        g_dec += cc * (z.T @ r)
        g_enc[cols] += cc * (a.T @ g)
        g_w[cols] += cc * np.einsum("ij,ij->j", xs, g @ ed.enc[cols].T)

    l1 = _l1(w, hp.l1_mode)
    if not np.isfinite(recon).all():
        msg = f"non-finite reconstruction terms {recon}"
        raise NumericalError(msg)
    if not with_grad:
        return recon, l1, None

    if l1_coef:
        scale = 1.0 / m if hp.l1_mode == "mean" else 1.0
        # Subgradient 0 at w_j = 0 keeps projected-out features dead:
        g_w += l1_coef * scale * np.sign(w)

    grads = Gradients(g_w, g_enc, g_dec)
    if not all(np.isfinite(g).all() for g in grads):
        msg = "non-finite gradient"
        raise NumericalError(msg)
    return recon, l1, grads


def _resolve_selection(
    w: FloatArray, k: int, selection: SelectionResult | None
) -> SelectionResult:
    return topk_mask(w, k) if selection is None else selection


def _fae_terms(hp: Hyperparams, sel: SelectionResult) -> list[ReconTerm]:
    return [ReconTerm(1.0), ReconTerm(hp.lambda1, sel.indices)]


def fae_objective(
    x: FloatArray,
    w: FloatArray,
    ed: EncoderDecoder,
    hp: Hyperparams,
    *,
    selection: SelectionResult | None = None,
) -> ObjectiveBreakdown:
    """The FAE objective: global reconstruction + lambda1 * top-k reconstruction
    + lambda2 * L1(w).

    `selection` freezes the top-k set; by default it is recomputed from `w`.
    """

    sel = _resolve_selection(w, hp.k, selection)
    (full, selected), l1, _ = evaluate_terms(
        x, w, ed, _fae_terms(hp, sel), hp.lambda2, hp, with_grad=False
    )
    total = full + hp.lambda1 * selected + hp.lambda2 * l1
    return ObjectiveBreakdown(full, selected, l1, total)


def fae_gradients(
    x: FloatArray,
    w: FloatArray,
    ed: EncoderDecoder,
    hp: Hyperparams,
    *,
    selection: SelectionResult | None = None,
) -> Gradients:
    """Exact gradients of `fae_objective`.

    The top-k set is a function of `w` and is recomputed on every call, so
    unselected entries get no gradient from the selected-feature term.
    """

    sel = _resolve_selection(w, hp.k, selection)
    _, _, grads = evaluate_terms(
        x, w, ed, _fae_terms(hp, sel), hp.lambda2, hp, with_grad=True
    )
    assert grads is not None
    return grads


def iae_objective(
    x: FloatArray, w: FloatArray, ed: EncoderDecoder, hp: Hyperparams
) -> ObjectiveBreakdown:
    """Global reconstruction + lambda1 * L1(w), without the top-k sub-network."""

    (full,), l1, _ = evaluate_terms(
        x, w, ed, [ReconTerm(1.0)], hp.lambda1, hp, with_grad=False
    )
    return ObjectiveBreakdown(full, 0.0, l1, full + hp.lambda1 * l1)


def iae_gradients(
    x: FloatArray, w: FloatArray, ed: EncoderDecoder, hp: Hyperparams
) -> Gradients:
    _, _, grads = evaluate_terms(
        x, w, ed, [ReconTerm(1.0)], hp.lambda1, hp, with_grad=True
    )
    assert grads is not None
    return grads


def ae_objective(
    x: FloatArray, ed: EncoderDecoder, hp: Hyperparams
) -> ObjectiveBreakdown:
    """Plain linear autoencoder reconstruction ||X - X W_E W_D||^2."""

    ones = np.ones(x.shape[1])
    (full,), _, _ = evaluate_terms(
        x, ones, ed, [ReconTerm(1.0)], 0.0, hp, with_grad=False
    )
    return ObjectiveBreakdown(full, 0.0, 0.0, full)


def ae_gradients(x: FloatArray, ed: EncoderDecoder, hp: Hyperparams) -> Gradients:
    ones = np.ones(x.shape[1])
    _, _, grads = evaluate_terms(
        x, ones, ed, [ReconTerm(1.0)], 0.0, hp, with_grad=True
    )
    assert grads is not None
    return Gradients(np.zeros_like(grads.w), grads.enc, grads.dec)


class FAEObjective(AbstractObjective):
    @property
    def method(self) -> Method:
        return Method.FAE

    def evaluate(
        self, x: FloatArray, w: FloatArray, ed: EncoderDecoder
    ) -> ObjectiveBreakdown:
        return fae_objective(x, w, ed, self.hp)

    def gradients(self, x: FloatArray, w: FloatArray, ed: EncoderDecoder) -> Gradients:
        return fae_gradients(x, w, ed, self.hp)

    def select(self, w: FloatArray, ed: EncoderDecoder) -> SelectionResult:
        del ed
        return topk_mask(w, self.hp.k)


class IAEObjective(FAEObjective):
    @property
    def method(self) -> Method:
        return Method.IAE

    def evaluate(
        self, x: FloatArray, w: FloatArray, ed: EncoderDecoder
    ) -> ObjectiveBreakdown:
        return iae_objective(x, w, ed, self.hp)

    def gradients(self, x: FloatArray, w: FloatArray, ed: EncoderDecoder) -> Gradients:
        return iae_gradients(x, w, ed, self.hp)


class AEObjective(AbstractObjective):
    """Linear AE baseline.

    w stays fixed at 1. Features are ranked by the L2 norm of their encoder row,
    the only per-feature signal a plain AE carries.
    """

    @property
    def method(self) -> Method:
        return Method.AE

    @property
    def trains_weights(self) -> bool:
        return False

    def evaluate(
        self, x: FloatArray, w: FloatArray, ed: EncoderDecoder
    ) -> ObjectiveBreakdown:
        del w
        return ae_objective(x, ed, self.hp)

    def gradients(self, x: FloatArray, w: FloatArray, ed: EncoderDecoder) -> Gradients:
        del w
        return ae_gradients(x, ed, self.hp)

    def select(self, w: FloatArray, ed: EncoderDecoder) -> SelectionResult:
        del w
        return topk_mask(np.linalg.norm(ed.enc, axis=1), self.hp.k)
