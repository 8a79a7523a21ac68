from typing import Dict, List
from pydantic import BaseModel, ConfigDict, Field

from ..models.estimator import Estimator

CSV_SCHEMA_VERSION = "1"

# Normas por término; las ausentes para un estimador quedan vacías en el CSV
TERM_NAMES = ("cross_prompt", "cross_trajectory", "align", "id")

EDIT_LOG_COLUMNS: List[str] = [
    "iter",
    "t",
    "estimator",
    "grad_norm",
    "mse_to_source",
    "n_queries",
    *[f"norm_{name}" for name in TERM_NAMES],
]


class EditLogRecord(BaseModel):
    """Registro de una iteración completada"""
    iter: int = Field(..., ge=0)
    t: int = Field(..., ge=1)
    estimator: Estimator
    grad_norm: float
    mse_to_source: float = Field(..., ge=0)
    n_queries: int = Field(default=0, ge=0)
    term_norms: Dict[str, float] = Field(default_factory=dict)
    metrics: Dict[str, float] = Field(default_factory=dict)

    model_config = ConfigDict(frozen=True)

    def to_row(self) -> Dict[str, object]:
        row: Dict[str, object] = {
            "iter": self.iter,
            "t": self.t,
            "estimator": self.estimator.value,
            "grad_norm": repr(self.grad_norm),
            "mse_to_source": repr(self.mse_to_source),
            "n_queries": self.n_queries,
        }
        for name in TERM_NAMES:
            value = self.term_norms.get(name)
            row[f"norm_{name}"] = "" if value is None else repr(value)
        for name, value in sorted(self.metrics.items()):
            row[name] = repr(value)
        return row
