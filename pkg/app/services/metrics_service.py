from typing import Hashable, Mapping, Protocol, runtime_checkable

import numpy as np

from ..core.exceptions import EmbedderException, ShapeMismatchException
from ..core.logging_config import get_logger
from ..schemas.config import BackendSpec
from ..schemas.report import MetricRow

logger = get_logger(__name__)

# Guardia para direcciones degeneradas en directional_similarity
DIRECTION_EPS = 1e-9


@runtime_checkable
class Embedder(Protocol):
    """Embeddings de imagen y texto normalizados en L2 (tolerancia 1e-6)"""

    def embed_image(self, image: np.ndarray) -> np.ndarray:
        ...

    def embed_text(self, prompt: str) -> np.ndarray:
        ...


@runtime_checkable
class PerceptualDistance(Protocol):
    """Adaptador de distancia perceptual (p.ej. LPIPS)"""

    def distance(self, a: np.ndarray, b: np.ndarray) -> float:
        ...


@runtime_checkable
class StructureDistance(Protocol):
    """Adaptador de distancia de estructura (p.ej. self-similarity de DINO)"""

    def distance(self, a: np.ndarray, b: np.ndarray) -> float:
        ...


def _pair(what: str, a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchException(what, [a.shape, b.shape])
    return a, b


def mse(a: np.ndarray, b: np.ndarray) -> float:
    """Error cuadrático medio elemento a elemento"""
    a, b = _pair("mse", a, b)
    return float(np.mean((a - b) ** 2))


def region_mse(a: np.ndarray, b: np.ndarray, indices) -> float:
    """MSE restringido a los píxeles `indices` (índices planos)"""
    a, b = _pair("region_mse", a, b)
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    if idx.size == 0:
        return 0.0
    diff = a.reshape(-1)[idx] - b.reshape(-1)[idx]
    return float(np.mean(diff ** 2))


def _unit(vector: np.ndarray, what: str) -> np.ndarray:
    vector = np.asarray(vector, dtype=np.float64).reshape(-1)
    norm = np.linalg.norm(vector)
    if not np.isfinite(norm) or norm == 0:
        raise EmbedderException(f"embedding de {what} nulo o no finito")
    return vector / norm


def _checked_embedding(vector, what: str) -> np.ndarray:
    try:
        vector = np.asarray(vector, dtype=np.float64).reshape(-1)
    except (TypeError, ValueError) as e:
        raise EmbedderException(f"embedding de {what} inválido: {e}")
    if not np.all(np.isfinite(vector)):
        raise EmbedderException(f"embedding de {what} no finito")
    # Los embedders externos no siempre normalizan su salida
    return _unit(vector, what)


def _embed_image(embedder: Embedder, image: np.ndarray) -> np.ndarray:
    try:
        return _checked_embedding(embedder.embed_image(image), "imagen")
    except EmbedderException:
        raise
    except Exception as e:
        raise EmbedderException(str(e)) from e


def _embed_text(embedder: Embedder, prompt: str) -> np.ndarray:
    try:
        return _checked_embedding(embedder.embed_text(prompt), f"texto '{prompt}'")
    except EmbedderException:
        raise
    except Exception as e:
        raise EmbedderException(str(e)) from e


def clip_similarity(image: np.ndarray, prompt: str, embedder: Embedder) -> float:
    """Coseno entre los embeddings de imagen y de texto"""
    image_vec = _embed_image(embedder, image)
    text_vec = _embed_text(embedder, prompt)
    if image_vec.shape != text_vec.shape:
        raise EmbedderException(f"dimensiones de embedding distintas: {image_vec.shape} vs {text_vec.shape}")
    value = float(np.dot(image_vec, text_vec))
    return float(np.clip(value, -1.0, 1.0))


def directional_similarity(
    src_image: np.ndarray,
    edited_image: np.ndarray,
    src_prompt: str,
    tgt_prompt: str,
    embedder: Embedder,
) -> float:
    """
    Coseno entre la dirección de edición en imagen y la dirección en texto.

    Devuelve 0 si alguna de las dos diferencias tiene norma < 1e-9.
    """
    image_dir = _embed_image(embedder, edited_image) - _embed_image(embedder, src_image)
    text_dir = _embed_text(embedder, tgt_prompt) - _embed_text(embedder, src_prompt)
    if image_dir.shape != text_dir.shape:
        raise EmbedderException(f"dimensiones de embedding distintas: {image_dir.shape} vs {text_dir.shape}")
    image_norm = np.linalg.norm(image_dir)
    text_norm = np.linalg.norm(text_dir)
    if image_norm < DIRECTION_EPS or text_norm < DIRECTION_EPS:
        return 0.0
    value = float(np.dot(image_dir, text_dir) / (image_norm * text_norm))
    return float(np.clip(value, -1.0, 1.0))


class PromptMeanEmbedder:
    """
    Embedder de juguete para el oráculo analítico: el texto se embebe como la
    media normalizada de su sub-mezcla y la imagen como sus píxeles normalizados.
    """

    def __init__(self, prompt_means: Mapping[Hashable, np.ndarray]):
        self.prompt_means = {k: np.asarray(v, dtype=np.float64).reshape(-1) for k, v in prompt_means.items()}

    @classmethod
    def from_backend_spec(cls, spec: BackendSpec) -> "PromptMeanEmbedder":
        means = {}
        for prompt_id, prompt in spec.prompts.items():
            weights = np.array([c.weight for c in prompt.components], dtype=np.float64)
            stacked = np.array([c.mean for c in prompt.components], dtype=np.float64)
            means[prompt_id] = (weights / weights.sum()) @ stacked
        return cls(means)

    def embed_image(self, image: np.ndarray) -> np.ndarray:
        return _unit(image, "imagen")

    def embed_text(self, prompt: str) -> np.ndarray:
        if prompt not in self.prompt_means:
            raise EmbedderException(f"prompt desconocido '{prompt}'")
        return _unit(self.prompt_means[prompt], f"texto '{prompt}'")


def _adapter_distance(adapter, what: str, a: np.ndarray, b: np.ndarray) -> float:
    a, b = _pair(what, a, b)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise EmbedderException(f"{what}: imágenes con valores no finitos")
    try:
        value = float(adapter.distance(a, b))
    except Exception as e:
        raise EmbedderException(f"{what}: {e}") from e
    if not np.isfinite(value):
        raise EmbedderException(f"{what}: el adaptador devolvió un valor no finito")
    return value


def perceptual_distance(a: np.ndarray, b: np.ndarray, adapter: PerceptualDistance) -> float:
    return _adapter_distance(adapter, "perceptual_distance", a, b)


def structure_distance(a: np.ndarray, b: np.ndarray, adapter: StructureDistance) -> float:
    return _adapter_distance(adapter, "structure_distance", a, b)


def compute_metrics(
    names,
    source: np.ndarray,
    edited: np.ndarray,
    regions: Mapping[str, list[int]],
    source_prompt: str | None,
    target_prompt: str,
    embedder: Embedder | None = None,
) -> dict[str, float]:
    """Evalúa las métricas pedidas por un config; las de región se nombran region_mse:<región>"""
    values: dict[str, float] = {}
    for name in names:
        if name == "mse":
            values["mse"] = mse(edited, source)
        elif name == "region_mse":
            for region, indices in sorted(regions.items()):
                values[f"region_mse:{region}"] = region_mse(edited, source, indices)
        elif name == "clip_similarity":
            values["clip_similarity"] = clip_similarity(edited, target_prompt, embedder)
        elif name == "directional_similarity":
            if source_prompt is None:
                logger.warning("directional_similarity requiere prompt fuente; se omite con ŷ = ∅")
                continue
            values["directional_similarity"] = directional_similarity(
                source, edited, source_prompt, target_prompt, embedder
            )
    return values


def metric_rows(run_id: str, values: Mapping[str, float]) -> list[MetricRow]:
    return [MetricRow(run_id=run_id, metric_name=name, value=value) for name, value in values.items()]
