import math
from enum import Enum
from typing import Optional
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..core.config import settings


class IdWeightKind(str, Enum):
    OFF = "off"
    CONSTANT = "constant"
    LINEAR_DECAY = "linear_decay"


class IdWeightSchedule(BaseModel):
    """Peso w(iter) de la regularización ID; no creciente en iteraciones"""
    kind: IdWeightKind = IdWeightKind.LINEAR_DECAY
    start: float = Field(default=1.0, ge=0)
    end: float = Field(default=0.0, ge=0)
    total_iters: Optional[int] = Field(default=None, ge=1)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def check_non_increasing(self):
        if not (math.isfinite(self.start) and math.isfinite(self.end)):
            raise ValueError("Los pesos de ID deben ser finitos")
        if self.kind == IdWeightKind.LINEAR_DECAY and self.end > self.start:
            raise ValueError(f"w(t) debe ser no creciente: end ({self.end}) > start ({self.start})")
        return self

    def weight(self, iteration: int) -> float:
        if self.kind == IdWeightKind.OFF:
            return 0.0
        if self.kind == IdWeightKind.CONSTANT:
            return self.start
        if not self.total_iters or self.total_iters <= 1:
            return self.start
        frac = min(max(iteration, 0) / (self.total_iters - 1), 1.0)
        return self.start + (self.end - self.start) * frac


class GuidanceWeights(BaseModel):
    """
    Escalas de guidance de todos los estimadores.

    s     escala CFG / de edición (SDS, DDS, SSD)
    w_p   término cross-prompt
    w_t   término cross-trajectory
    w_e   rama de realce del prompt objetivo
    w_a   clasificador del prompt objetivo (CSD)
    w_b   clasificador del prompt fuente (CSD)
    s_I   escala de imagen (InstructPix2Pix)
    s_T   escala de texto (InstructPix2Pix)
    """
    s: float = settings.default_guidance_scale
    w_p: float = settings.default_guidance_scale
    w_t: float = 1.0
    w_e: float = 0.0
    w_a: float = settings.default_guidance_scale
    w_b: float = settings.default_guidance_scale
    s_I: float = 1.5
    s_T: float = settings.default_guidance_scale
    id_weight: IdWeightSchedule = Field(default_factory=IdWeightSchedule)

    model_config = ConfigDict(frozen=True)

    @field_validator("s", "w_p", "w_t", "w_e", "w_a", "w_b", "s_I", "s_T")
    @classmethod
    def check_finite(cls, v, info):
        if not math.isfinite(v):
            raise ValueError(f"{info.field_name} debe ser finito")
        return v

    def id_weight_fn(self, iteration: int) -> float:
        return self.id_weight.weight(iteration)

    def with_budget(self, total_iters: int) -> "GuidanceWeights":
        """Completa el horizonte de w(t) con el presupuesto de la corrida"""
        if self.id_weight.total_iters is not None or total_iters < 1:
            return self
        return self.model_copy(
            update={"id_weight": self.id_weight.model_copy(update={"total_iters": total_iters})}
        )
