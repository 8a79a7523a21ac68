import json
from pathlib import Path
from typing import Any, Dict, Union

from pydantic import ValidationError

from ..core.exceptions import ConfigException
from ..core.logging_config import get_logger
from ..schemas.config import EditConfig

logger = get_logger(__name__)


def _format_validation_error(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        location = ".".join(str(p) for p in item.get("loc", ())) or "<raíz>"
        parts.append(f"{location}: {item.get('msg')}")
    return "; ".join(parts)


class ConfigRepository:
    """Lectura de configs de edición y de manifiestos emitidos"""

    @staticmethod
    def read_document(path: Union[str, Path]) -> Dict[str, Any]:
        path = Path(path)
        try:
            with path.open("r", encoding="utf-8") as fh:
                document = json.load(fh)
        except FileNotFoundError:
            raise ConfigException(f"no existe el archivo '{path}'")
        except json.JSONDecodeError as e:
            raise ConfigException(f"'{path}' no es JSON válido (línea {e.lineno}): {e.msg}")
        except OSError as e:
            raise ConfigException(f"no se pudo leer '{path}': {e}")
        if not isinstance(document, dict):
            raise ConfigException(f"'{path}' debe contener un objeto JSON")
        return document

    @staticmethod
    def parse(document: Dict[str, Any], origin: str = "<memoria>") -> EditConfig:
        """Valida un documento; un manifiesto se reconoce por su clave 'config'"""
        if "config" in document and "run_id" in document and "toolkit_version" in document:
            document = document["config"]
        try:
            return EditConfig.model_validate(document)
        except ValidationError as e:
            raise ConfigException(f"{origin}: {_format_validation_error(e)}")
        except ValueError as e:
            raise ConfigException(f"{origin}: {e}")

    @classmethod
    def load(cls, path: Union[str, Path]) -> EditConfig:
        """
        Carga un EditConfig desde un config JSON o un manifest.json.

        Raises:
            ConfigException: archivo ilegible, JSON inválido o config que no valida
        """
        config = cls.parse(cls.read_document(path), origin=str(path))
        logger.debug(f"Config '{config.run_id}' cargado desde {path}")
        return config
