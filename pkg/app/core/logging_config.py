import logging
import sys
from pathlib import Path
from logging.handlers import RotatingFileHandler
from typing import Optional
from pythonjsonlogger import jsonlogger

from .context import RunContextFilter


def setup_logging(
    log_level: str = "INFO",
    environment: str = "development",
    log_dir: Optional[str] = "logs",
):
    """
    Configura el sistema de logging con formato estructurado

    Args:
        log_level: Nivel de logging (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        environment: Ambiente de ejecución (development, staging, production)
        log_dir: Directorio del log rotativo en JSON; None desactiva el archivo
    """
    log_format = "%(asctime)s %(name)s %(levelname)s %(run_id)s %(iteration)s %(message)s"
    json_formatter = jsonlogger.JsonFormatter(log_format)
    context_filter = RunContextFilter()

    root_logger = logging.getLogger()
    root_logger.setLevel(getattr(logging, log_level.upper()))

    # Evitar handlers duplicados si se invoca más de una vez (tests, compare)
    for handler in list(root_logger.handlers):
        if getattr(handler, "_score_distill", False):
            root_logger.removeHandler(handler)

    if log_dir:
        path = Path(log_dir)
        path.mkdir(parents=True, exist_ok=True)
        file_handler = RotatingFileHandler(
            path / "score_distill.log",
            maxBytes=10 * 1024 * 1024,  # 10MB
            backupCount=5
        )
        file_handler.setFormatter(json_formatter)
        file_handler.addFilter(context_filter)
        file_handler._score_distill = True
        root_logger.addHandler(file_handler)

    # Consola a stderr: stdout queda para la tabla del selftest
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.addFilter(context_filter)

    if environment == "development":
        console_formatter = logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - [%(run_id)s] %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )
        console_handler.setFormatter(console_formatter)
    else:
        console_handler.setFormatter(json_formatter)
    console_handler._score_distill = True
    root_logger.addHandler(console_handler)

    # Reducir verbosidad de librerías externas
    logging.getLogger("matplotlib").setLevel(logging.WARNING)
    logging.getLogger("PIL").setLevel(logging.WARNING)

    return root_logger


def get_logger(name: str) -> logging.Logger:
    """
    Obtiene un logger con el nombre especificado

    Args:
        name: Nombre del logger (generalmente __name__)

    Returns:
        Logger configurado
    """
    return logging.getLogger(name)
