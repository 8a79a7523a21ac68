from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Iterator, Optional, Protocol, runtime_checkable

import numpy as np

from ..core.exceptions import ShapeMismatchException, ValidationException
from .denoiser import Condition
from .estimator import Estimator

if TYPE_CHECKING:
    from ..schemas.edit_log import EditLogRecord
    from ..schemas.guidance import GuidanceWeights


@runtime_checkable
class Generator(Protocol):
    """Generador paramétrico diferenciable x = g(θ)"""

    def render(self, theta: np.ndarray) -> np.ndarray:
        ...

    def apply_grad(self, theta: np.ndarray, pixel_grad: np.ndarray, step_size: float) -> np.ndarray:
        """Aplica un gradiente en espacio de píxeles; la regla de la cadena ∂x/∂θ es interna"""
        ...


@dataclass(frozen=True)
class EditState:
    theta: np.ndarray
    source_image: np.ndarray
    source_prompt: Condition
    target_prompt: Condition
    weights: "GuidanceWeights"
    estimator: Estimator
    iter: int = 0
    velocity: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=np.float64))
        object.__setattr__(self, "source_image", np.asarray(self.source_image, dtype=np.float64))
        object.__setattr__(self, "estimator", Estimator(self.estimator))
        if self.iter < 0:
            raise ValidationException(f"iter debe ser no negativo: {self.iter}")

    def check_generator(self, generator: Generator) -> None:
        rendered = generator.render(self.theta)
        if rendered.shape != self.source_image.shape:
            raise ShapeMismatchException("render(θ) vs imagen fuente", [rendered.shape, self.source_image.shape])

    def advance(self, theta: np.ndarray, velocity: Optional[np.ndarray]) -> "EditState":
        return replace(self, theta=theta, velocity=velocity, iter=self.iter + 1)


@dataclass
class EditLog:
    """Registros por iteración completada, con iter monótono"""
    records: list["EditLogRecord"] = field(default_factory=list)

    def append(self, record: "EditLogRecord") -> None:
        if self.records and record.iter <= self.records[-1].iter:
            raise ValidationException(
                f"Registro fuera de orden: iter {record.iter} tras {self.records[-1].iter}"
            )
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator["EditLogRecord"]:
        return iter(self.records)

    def last(self) -> Optional["EditLogRecord"]:
        return self.records[-1] if self.records else None
