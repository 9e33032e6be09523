from __future__ import annotations

from abc import ABC, abstractmethod
from typing import (
    TYPE_CHECKING,
)

if TYPE_CHECKING:
    from fractal_ae._models import (
        EncoderDecoder,
        Gradients,
        Hyperparams,
        Method,
        ObjectiveBreakdown,
        SelectionResult,
    )
    from fractal_ae._numeric import FloatArray


class AbstractObjective(ABC):
    """An objective the trainer can minimize over (w, W_E, W_D).

    This is intended for internal usage by the trainer. Concrete objectives are
    the linear AE, IAE, FAE and h-HFAE.
    """

    def __init__(self, hp: Hyperparams):
        self.hp = hp

    @property
    @abstractmethod
    def method(self) -> Method:
        pass

    @property
    def trains_weights(self) -> bool:
        """Whether the one-to-one layer w is a trainable parameter."""
        return True

    @abstractmethod
    def evaluate(
        self, x: FloatArray, w: FloatArray, ed: EncoderDecoder
    ) -> ObjectiveBreakdown:
        pass

    @abstractmethod
    def gradients(
        self, x: FloatArray, w: FloatArray, ed: EncoderDecoder
    ) -> Gradients:
        pass

    @abstractmethod
    def select(self, w: FloatArray, ed: EncoderDecoder) -> SelectionResult:
        """The features this objective reports for parameters (w, ed)."""
