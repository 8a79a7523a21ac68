from dataclasses import dataclass, fields
from enum import Enum
from typing import Optional

import numpy as np

from ..core.exceptions import MissingPredictionException, ShapeMismatchException


class Estimator(str, Enum):
    SDS = "sds"
    DDS = "dds"
    CSD = "csd"
    SSD = "ssd"
    SSD_FULL = "ssd_full"
    IP2P_EDIT = "ip2p_edit"


PREDICTION_FIELDS = (
    "eps_tgt_y",
    "eps_tgt_src_prompt",
    "eps_tgt_null",
    "eps_src_prompt",
    "eps_src_null",
    "true_noise",
)


@dataclass(frozen=True)
class EstimatorInputs:
    """
    Predicciones ε_φ que consumen los estimadores.

    z_t es el latente ruidoso de la imagen ACTUAL y ẑ_t el de la imagen FUENTE:
        eps_tgt_y          = ε_φ(z_t, y)
        eps_tgt_src_prompt = ε_φ(z_t, ŷ)
        eps_tgt_null       = ε_φ(z_t, ∅)
        eps_src_prompt     = ε_φ(ẑ_t, ŷ)
        eps_src_null       = ε_φ(ẑ_t, ∅)
        true_noise         = ε inyectado por add_noise

    El loop de edición solo consulta los términos que el estimador usa; los
    demás quedan en None y pedirlos levanta MissingPredictionException.
    """
    t: int
    eps_tgt_y: Optional[np.ndarray] = None
    eps_tgt_src_prompt: Optional[np.ndarray] = None
    eps_tgt_null: Optional[np.ndarray] = None
    eps_src_prompt: Optional[np.ndarray] = None
    eps_src_null: Optional[np.ndarray] = None
    true_noise: Optional[np.ndarray] = None

    def __post_init__(self):
        shapes = {}
        for f in fields(self):
            if f.name == "t":
                continue
            value = getattr(self, f.name)
            if value is None:
                continue
            arr = np.asarray(value, dtype=np.float64)
            object.__setattr__(self, f.name, arr)
            shapes[f.name] = arr.shape
        if len(set(shapes.values())) > 1:
            raise ShapeMismatchException("EstimatorInputs", list(shapes.values()))

    def require(self, *names: str, estimator: Optional[str] = None) -> tuple[np.ndarray, ...]:
        arrays = []
        for name in names:
            value = getattr(self, name)
            if value is None:
                raise MissingPredictionException(name, estimator)
            arrays.append(value)
        return tuple(arrays)

    @property
    def shape(self) -> Optional[tuple[int, ...]]:
        for name in PREDICTION_FIELDS:
            value = getattr(self, name)
            if value is not None:
                return value.shape
        return None

    def scaled(self, c: float) -> "EstimatorInputs":
        """Copia con todas las predicciones multiplicadas por c"""
        kwargs = {
            name: (None if getattr(self, name) is None else c * getattr(self, name))
            for name in PREDICTION_FIELDS
        }
        return EstimatorInputs(t=self.t, **kwargs)
