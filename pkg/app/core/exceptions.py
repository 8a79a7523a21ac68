from typing import Any, Optional, Sequence


EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_RUNTIME_ABORT = 3


class ScoreDistillBaseException(Exception):
    """Excepción base del toolkit de score distillation"""

    exit_code: int = EXIT_RUNTIME_ABORT

    def __init__(self, detail: str = "Error en el toolkit de score distillation"):
        super().__init__(detail)
        self.detail = detail
        # Lo completa el loop de edición con las iteraciones previas al aborto
        self.partial_log = None

    def to_dict(self) -> dict[str, Any]:
        return {"error": type(self).__name__, "detail": self.detail, "exit_code": self.exit_code}


class InvalidRangeException(ScoreDistillBaseException):
    """Parámetro fuera de su rango válido"""

    def __init__(self, name: str, value: Any, expected: str):
        super().__init__(f"Valor inválido para '{name}': {value} (se esperaba {expected})")


class ShapeMismatchException(ScoreDistillBaseException):
    """Arreglos con formas incompatibles"""

    def __init__(self, what: str, shapes: Sequence[Any]):
        pretty = ", ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"Formas incompatibles en {what}: {pretty}")


class TimestepMismatchException(ScoreDistillBaseException):
    """Predicciones de ruido evaluadas en timesteps distintos"""

    def __init__(self, t_a: int, t_b: int):
        super().__init__(f"Las predicciones no comparten timestep: {t_a} != {t_b}")


class DimensionMismatchException(ScoreDistillBaseException):
    """Dimensión del latente incompatible con la mezcla"""

    def __init__(self, latent_dim: int, mixture_dim: int):
        super().__init__(
            f"Dimensión del latente ({latent_dim}) distinta a la de las medias de la mezcla ({mixture_dim})"
        )


class MissingPredictionException(ScoreDistillBaseException):
    """El estimador requiere un término que no fue consultado"""

    def __init__(self, term: str, estimator: Optional[str] = None):
        where = f" para '{estimator}'" if estimator else ""
        super().__init__(f"Falta la predicción '{term}'{where}")


class UnknownPromptException(ScoreDistillBaseException):
    """Prompt no registrado en el backend"""

    def __init__(self, prompt_id: Any):
        super().__init__(f"Prompt con identificador '{prompt_id}' no registrado en el backend")


class BackendQueryException(ScoreDistillBaseException):
    """Fallo del backend al predecir ruido"""

    def __init__(self, reason: str):
        super().__init__(f"Fallo consultando el backend: {reason}")


class NonFinitePredictionException(ScoreDistillBaseException):
    """El backend devolvió una predicción con valores no finitos"""

    def __init__(self, t: int, condition: Any):
        super().__init__(f"Predicción no finita en t={t} para la condición {condition}")


class NonFiniteGradientException(ScoreDistillBaseException):
    """Gradiente no finito: la sesión se aborta conservando el log parcial"""

    def __init__(self, iteration: int, t: int, term_norms: Optional[dict[str, float]] = None):
        detail = f"Gradiente no finito en iteración {iteration} (t={t})"
        if term_norms:
            parts = ", ".join(f"{k}={v:.3g}" for k, v in term_norms.items())
            detail += f"; normas por término: {parts}"
        super().__init__(detail)
        self.iteration = iteration
        self.t = t
        self.term_norms = term_norms or {}


class EmbedderException(ScoreDistillBaseException):
    """Fallo del embedder de métricas"""

    def __init__(self, reason: str):
        super().__init__(f"Fallo del embedder: {reason}")


class ConfigException(ScoreDistillBaseException):
    """Configuración inválida o ilegible"""

    exit_code = EXIT_CONFIG_ERROR

    def __init__(self, message: str):
        super().__init__(f"Configuración inválida: {message}")


class ValidationException(ScoreDistillBaseException):
    """Error de validación de datos"""

    exit_code = EXIT_CONFIG_ERROR

    def __init__(self, message: str):
        super().__init__(message)


class UsageException(ScoreDistillBaseException):
    """Uso incorrecto de la línea de comandos"""

    exit_code = EXIT_CONFIG_ERROR

    def __init__(self, message: str):
        super().__init__(f"Uso incorrecto: {message}")


class BackendLoadException(ConfigException):
    """La factory del backend plugin falló al construirlo"""

    exit_code = EXIT_RUNTIME_ABORT

    def __init__(self, target: str, reason: str):
        super().__init__(f"La factory '{target}' falló al construir el backend: {reason}")
