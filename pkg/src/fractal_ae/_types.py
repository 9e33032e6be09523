"""Exception hierarchy shared by every fractal_ae module."""

from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from fractal_ae._trainer import TrainReport


class FractalAEBaseException(Exception):  # noqa: N818
    """Base fractal_ae exception."""


class ContractViolationError(FractalAEBaseException, ValueError):
    """An operation was called with arguments violating its preconditions."""


class NumericalError(FractalAEBaseException, ArithmeticError):
    """A computation produced non-finite values or a factorization failed."""


class DivergenceError(NumericalError):
    """Training loss exploded past the divergence guard."""

    def __init__(self, epoch: int, total: float, initial: float, report: TrainReport):
        super().__init__(
            f"Training diverged at epoch {epoch}: total {total:.6g} exceeds "
            f"1e6 x initial {initial:.6g}"
        )
        self.epoch = epoch
        self.report = report


class DataFormatError(FractalAEBaseException, ValueError):
    """An input file could not be parsed."""

    def __init__(self, path: str, msg: str, line: int | None = None):
        where = f"{path}:{line}" if line is not None else path
        super().__init__(f"{where}: {msg}")
        self.path = path
        self.line = line


class CheckpointFormatError(DataFormatError):
    """A checkpoint file is malformed or written by an unknown format version."""
