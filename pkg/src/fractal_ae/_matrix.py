"""Dense matrix kernels and the seeded random stream used by every other module.

Matrices are plain row-major ``float64`` NumPy arrays; the helpers here validate
the shape and finiteness invariants at module boundaries and report violations
with package exceptions instead of NumPy's broadcasting errors.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Any

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from fractal_ae._types import ContractViolationError, NumericalError

if TYPE_CHECKING:
    from fractal_ae._numeric import FloatArray, IntArray

RNG_ALGORITHM = "numpy.Philox-4x64-10"
DEFAULT_RIDGE = 1e-8


def as_matrix(values: Any, *, name: str = "matrix") -> FloatArray:
    """Coerce `values` to a finite 2-D float64 array with at least one row and
    column."""

    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 2:
        msg = f"{name} must be 2-D, got shape {arr.shape}"
        raise ContractViolationError(msg)
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        msg = f"{name} must have at least one row and column, got {arr.shape}"
        raise ContractViolationError(msg)
    if not np.isfinite(arr).all():
        msg = f"{name} contains NaN or Inf"
        raise ContractViolationError(msg)
    return arr


class SeededRng:
    """A reproducible random stream.

    The bit generator is Philox (counter-based), so a given seed produces the same
    stream on every platform. Child streams derived with `child()` are independent
    of how many values the parent has consumed.
    """

    algorithm = RNG_ALGORITHM

    def __init__(self, seed: int, spawn_key: tuple[int, ...] = ()):
        if not 0 <= seed < 2**64:
            msg = f"seed must be a 64-bit unsigned integer, got {seed}"
            raise ContractViolationError(msg)
        self.seed = seed
        self.spawn_key = spawn_key
        seq = np.random.SeedSequence(entropy=seed, spawn_key=spawn_key)
        self._gen = np.random.Generator(np.random.Philox(seq))

    def child(self, *key: int) -> SeededRng:
        return SeededRng(self.seed, (*self.spawn_key, *key))

    def normal(self, shape: tuple[int, ...], scale: float) -> FloatArray:
        return self._gen.normal(0.0, scale, size=shape)

    def uniform(self, lo: float, hi: float, size: int) -> FloatArray:
        return self._gen.uniform(lo, hi, size=size)

    def permutation(self, n: int) -> IntArray:
        return self._gen.permutation(n).astype(np.int64)

    def choice(self, n: int, size: int) -> IntArray:
        """`size` distinct integers from [0, n)."""
        return self._gen.choice(n, size=size, replace=False).astype(np.int64)

    def metadata(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "spawn_key": list(self.spawn_key),
            "algorithm": self.algorithm,
        }


def matmul(a: FloatArray, b: FloatArray) -> FloatArray:
    """Standard matrix product of `a` (r x t) and `b` (t x c)."""

    if a.ndim != 2 or b.ndim != 2:
        msg = f"matmul expects 2-D operands, got {a.shape} and {b.shape}"
        raise ContractViolationError(msg)
    if a.shape[1] != b.shape[0]:
        msg = f"matmul dimension mismatch: {a.shape} x {b.shape}"
        raise ContractViolationError(msg)
    return np.matmul(a, b)


def lstsq(a: FloatArray, b: FloatArray, ridge: float = DEFAULT_RIDGE) -> FloatArray:
    """Minimize ||aW - b||_F^2 + ridge ||W||_F^2 through the normal equations.

    The Gram matrix is factored with a Cholesky decomposition. The default ridge
    of 1e-8 only guards conditioning; pass 0 for the unregularized solution.

    Raises:
        ContractViolationError: row counts differ or ridge is negative.
        NumericalError: the Gram matrix is not positive definite even with the
            ridge. The message carries its condition number.
    """

    if a.ndim != 2 or b.ndim != 2:
        msg = f"lstsq expects 2-D operands, got {a.shape} and {b.shape}"
        raise ContractViolationError(msg)
    if a.shape[0] != b.shape[0]:
        msg = f"lstsq row mismatch: {a.shape[0]} != {b.shape[0]}"
        raise ContractViolationError(msg)
    if ridge < 0:
        msg = f"ridge must be >= 0, got {ridge}"
        raise ContractViolationError(msg)

    gram = a.T @ a
    if ridge:
        gram[np.diag_indices_from(gram)] += ridge
    rhs = a.T @ b
    try:
        factor = cho_factor(gram, lower=True, check_finite=False)
        coef = cho_solve(factor, rhs, check_finite=False)
    except LinAlgError as e:
        cond = np.linalg.cond(gram)
        msg = (
            f"normal equations are singular (size {gram.shape[0]}, "
            f"ridge {ridge:g}, condition number {cond:.3e})"
        )
        raise NumericalError(msg) from e
    if not np.isfinite(coef).all():
        msg = f"lstsq produced non-finite coefficients (ridge {ridge:g})"
        raise NumericalError(msg)
    return np.asarray(coef, dtype=np.float64)


def xavier_normal(rows: int, cols: int, rng: SeededRng) -> FloatArray:
    """Glorot normal initialization: N(0, 2 / (rows + cols))."""

    if rows < 1 or cols < 1:
        msg = f"xavier_normal needs positive dimensions, got ({rows}, {cols})"
        raise ContractViolationError(msg)
    return rng.normal((rows, cols), float(np.sqrt(2.0 / (rows + cols))))


def uniform_init(length: int, lo: float, hi: float, rng: SeededRng) -> FloatArray:
    """I.i.d. draws from U[lo, hi)."""

    if not lo < hi:
        msg = f"uniform_init needs lo < hi, got [{lo}, {hi})"
        raise ContractViolationError(msg)
    out = rng.uniform(lo, hi, length)
    # Rounding can land exactly on hi for very narrow intervals:
    return np.minimum(out, np.nextafter(hi, lo))


def mean_sq(residual: FloatArray, *, norm: str = "mean") -> float:
    """Squared Frobenius norm, divided by the entry count in ``mean`` mode."""

    total = float(np.einsum("ij,ij->", residual, residual))
    if norm == "mean":
        return total / residual.size
    if norm == "frobenius":
        return total
    msg = f"unknown reconstruction norm {norm!r}"
    raise ContractViolationError(msg)
