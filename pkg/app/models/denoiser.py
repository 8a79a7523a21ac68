from dataclasses import dataclass
from enum import Enum
from typing import Hashable, Optional, Protocol, runtime_checkable

import numpy as np

from ..core.exceptions import InvalidRangeException, NonFinitePredictionException, ValidationException


class ConditionKind(str, Enum):
    PROMPT = "prompt"
    NULL = "null"


@dataclass(frozen=True)
class Condition:
    """Condición de texto: un prompt (y, ŷ) o la condición nula ∅"""
    kind: ConditionKind
    prompt_id: Optional[Hashable] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ConditionKind(self.kind))
        if self.kind == ConditionKind.NULL and self.prompt_id is not None:
            raise ValidationException("La condición nula no lleva prompt_id")
        if self.kind == ConditionKind.PROMPT and self.prompt_id is None:
            raise ValidationException("Una condición de prompt requiere prompt_id")

    @classmethod
    def prompt(cls, prompt_id: Hashable) -> "Condition":
        return cls(ConditionKind.PROMPT, prompt_id)

    @classmethod
    def null(cls) -> "Condition":
        return cls(ConditionKind.NULL)

    @property
    def is_null(self) -> bool:
        return self.kind == ConditionKind.NULL

    def __str__(self) -> str:
        return "∅" if self.is_null else str(self.prompt_id)


NULL_CONDITION = Condition.null()


@dataclass(frozen=True)
class NoisePrediction:
    """Salida ε̂ del denoiser para una consulta (latente, condición, t)"""
    eps_hat: np.ndarray
    t: int
    condition: Condition

    def __post_init__(self):
        eps = np.asarray(self.eps_hat, dtype=np.float64)
        if not np.all(np.isfinite(eps)):
            raise NonFinitePredictionException(self.t, self.condition)
        object.__setattr__(self, "eps_hat", eps)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.eps_hat.shape


@dataclass(frozen=True)
class GmmComponent:
    mean: np.ndarray
    weight: float


@dataclass(frozen=True)
class GmmCondition:
    """
    Mezcla gaussiana isotrópica que define p(x₀ | condición) en el oráculo.

    Todas las componentes comparten la desviación data_sigma (σ₀); σ₀ = 0
    corresponde a masas puntuales.
    """
    means: np.ndarray    # (K, D)
    weights: np.ndarray  # (K,)
    data_sigma: float = 0.0

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if means.shape[0] == 0:
            raise ValidationException("La mezcla necesita al menos una componente")
        if weights.shape[0] != means.shape[0]:
            raise ValidationException(
                f"{weights.shape[0]} pesos para {means.shape[0]} componentes"
            )
        if np.any(weights <= 0) or not np.all(np.isfinite(weights)):
            raise InvalidRangeException("weights", weights.tolist(), "reales positivos")
        if abs(weights.sum() - 1.0) > 1e-9:
            raise InvalidRangeException("weights", float(weights.sum()), "suma 1 (±1e-9)")
        if self.data_sigma < 0 or not np.isfinite(self.data_sigma):
            raise InvalidRangeException("data_sigma", self.data_sigma, ">= 0")
        means.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "data_sigma", float(self.data_sigma))

    @classmethod
    def from_components(cls, components: list[GmmComponent], data_sigma: float = 0.0) -> "GmmCondition":
        dims = {np.asarray(c.mean).size for c in components}
        if len(dims) > 1:
            raise ValidationException(f"Las medias no comparten dimensión: {sorted(dims)}")
        return cls(
            means=np.stack([np.asarray(c.mean, dtype=np.float64).reshape(-1) for c in components]),
            weights=np.array([c.weight for c in components], dtype=np.float64),
            data_sigma=data_sigma,
        )

    @classmethod
    def single(cls, mean, data_sigma: float = 0.0) -> "GmmCondition":
        return cls(means=np.asarray(mean, dtype=np.float64).reshape(1, -1), weights=np.ones(1), data_sigma=data_sigma)

    @property
    def dim(self) -> int:
        return int(self.means.shape[1])

    @property
    def num_components(self) -> int:
        return int(self.means.shape[0])

    @property
    def components(self) -> list[GmmComponent]:
        return [GmmComponent(m, float(w)) for m, w in zip(self.means, self.weights)]

    def mean(self) -> np.ndarray:
        return self.weights @ self.means


@runtime_checkable
class DenoiserBackend(Protocol):
    """
    Contrato de un backend de predicción de ruido (ε-prediction).

    - predict(latent, condition, t) devuelve la predicción CRUDA condicional o
      incondicional; la composición CFG la hace el toolkit, nunca el adaptador.
    - predict2(latent, image_cond, text_cond, t) es la variante de doble
      condición (imagen + texto) de backends estilo InstructPix2Pix;
      image_cond=None significa sin condición de imagen.
    - Ambas son deterministas para entradas fijas; cualquier muestreo interno
      debe estar sembrado.

    Un adaptador para un modelo text-to-image de difusión latente codifica el
    prompt con su text encoder, evalúa el UNet en (latente, embedding, t) y
    devuelve ε sin mezclar ramas. El batching de llamadas queda en el adaptador.
    """

    def predict(self, latent: np.ndarray, condition: Condition, t: int) -> NoisePrediction:
        ...

    def predict2(
        self,
        latent: np.ndarray,
        image_cond: Optional[np.ndarray],
        text_cond: Condition,
        t: int,
    ) -> NoisePrediction:
        ...
