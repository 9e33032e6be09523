from __future__ import annotations

from dataclasses import dataclass, field
from typing import (
    TYPE_CHECKING,
    Collection,
    Mapping,
)

import numpy as np

from fractal_ae._models import project_nonneg
from fractal_ae._types import ContractViolationError, NumericalError

if TYPE_CHECKING:
    from fractal_ae._numeric import FloatArray

Params = Mapping[str, "FloatArray"]


@dataclass
class AdamState:
    """Adam moment accumulators, keyed like the parameters they track.

    epsilon defaults to 1e-7, as in Keras.
    """

    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    t: int = 0
    m: dict[str, FloatArray] = field(default_factory=dict)
    v: dict[str, FloatArray] = field(default_factory=dict)


def adam_step(
    params: Params,
    grads: Params,
    state: AdamState,
    lr: float,
    *,
    nonneg: Collection[str] = ("w",),
) -> dict[str, FloatArray]:
    """One bias-corrected Adam update.

    Uses the Keras form: step size lr * sqrt(1 - beta2^t) / (1 - beta1^t) applied
    to m / (sqrt(v) + epsilon). Parameters named in `nonneg` are projected onto
    the non-negative orthant afterwards. The input arrays are not modified; the
    state is updated in place.

    Raises:
        ContractViolationError: parameter and gradient shapes differ.
        NumericalError: the update is non-finite. The state is left unchanged.
    """

    if params.keys() != grads.keys():
        msg = f"parameter keys {sorted(params)} != gradient keys {sorted(grads)}"
        raise ContractViolationError(msg)

    t = state.t + 1
    step = lr * np.sqrt(1.0 - state.beta2**t) / (1.0 - state.beta1**t)

    new_params: dict[str, FloatArray] = {}
    new_m: dict[str, FloatArray] = {}
    new_v: dict[str, FloatArray] = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            msg = f"gradient shape {g.shape} != parameter shape {p.shape} for {name}"
            raise ContractViolationError(msg)
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        updated = p - step * m / (np.sqrt(v) + state.epsilon)
        if not np.isfinite(updated).all():
            bad = int(np.count_nonzero(~np.isfinite(updated)))
            msg = (
                f"Adam step {t} produced {bad} non-finite entries in {name} "
                f"(max |grad| {float(np.max(np.abs(g))):.3e})"
            )
            raise NumericalError(msg)
        if name in nonneg:
            updated = project_nonneg(updated)
        new_params[name] = updated
        new_m[name] = m
        new_v[name] = v

    state.t = t
    state.m.update(new_m)
    state.v.update(new_v)
    return new_params
