from typing import Any, Dict, List, Optional
from pydantic import BaseModel, Field

from .edit_log import CSV_SCHEMA_VERSION, EDIT_LOG_COLUMNS


class MetricRow(BaseModel):
    """Fila del CSV de métricas"""
    run_id: str
    metric_name: str
    value: float


class RunManifest(BaseModel):
    """Manifiesto JSON de una corrida: eco del config, semillas y versión"""
    run_id: str
    toolkit_version: str
    csv_schema_version: str = CSV_SCHEMA_VERSION
    edit_log_columns: List[str] = Field(default_factory=lambda: list(EDIT_LOG_COLUMNS))
    metric_columns: List[str] = Field(default_factory=list)
    seeds: Dict[str, int]
    status: str  # completed | aborted
    iterations_completed: int
    artifacts: List[str] = Field(default_factory=list)
    config: Dict[str, Any]


class RunSummary(BaseModel):
    """Resultado de una corrida dentro de compare"""
    run_id: str
    status: str  # completed | aborted | failed
    exit_code: int
    sweep: Dict[str, Any] = Field(default_factory=dict)
    metrics: Dict[str, float] = Field(default_factory=dict)
    error: Optional[str] = None


class CompareReport(BaseModel):
    sweep_keys: List[str]
    runs: List[RunSummary]
    failures: List[RunSummary] = Field(default_factory=list)
    rows_written: int
