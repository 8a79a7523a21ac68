import contextvars
import logging
from typing import Optional

# Variables de contexto de la sesión de edición en curso.
# Permiten que los logs de servicios profundos (backend, estimadores)
# lleven run_id e iteración sin pasarlos explícitamente.

current_run_id: contextvars.ContextVar[Optional[str]] = contextvars.ContextVar(
    "current_run_id", default=None
)

current_iteration: contextvars.ContextVar[Optional[int]] = contextvars.ContextVar(
    "current_iteration", default=None
)


def get_current_run_id() -> Optional[str]:
    return current_run_id.get()


def get_current_iteration() -> Optional[int]:
    return current_iteration.get()


class RunContextFilter(logging.Filter):
    """Inyecta run_id e iteración en cada LogRecord"""

    def filter(self, record: logging.LogRecord) -> bool:
        record.run_id = current_run_id.get()
        record.iteration = current_iteration.get()
        return True
