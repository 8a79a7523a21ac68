import importlib
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Optional

import numpy as np
from scipy.special import logsumexp, softmax

from ..core.exceptions import (
    BackendLoadException,
    ConfigException,
    DimensionMismatchException,
    ShapeMismatchException,
    TimestepMismatchException,
    UnknownPromptException,
    ValidationException,
)
from ..core.logging_config import get_logger
from ..models.denoiser import (
    Condition,
    DenoiserBackend,
    GmmComponent,
    GmmCondition,
    NoisePrediction,
)
from ..models.schedule import DiffusionSchedule
from ..schemas.config import BackendKind, BackendSpec

logger = get_logger(__name__)


def compose_guidance(eps_cond: np.ndarray, eps_uncond: np.ndarray, scale: float) -> np.ndarray:
    """eps_uncond + scale·(eps_cond - eps_uncond) sobre arreglos crudos"""
    eps_cond = np.asarray(eps_cond, dtype=np.float64)
    eps_uncond = np.asarray(eps_uncond, dtype=np.float64)
    if eps_cond.shape != eps_uncond.shape:
        raise ShapeMismatchException("cfg_compose", [eps_cond.shape, eps_uncond.shape])
    return eps_uncond + scale * (eps_cond - eps_uncond)


def cfg_compose(eps_cond: NoisePrediction, eps_uncond: NoisePrediction, scale: float) -> np.ndarray:
    """
    Composición classifier-free guidance de dos predicciones crudas.

    Raises:
        ShapeMismatchException: si las formas difieren
        TimestepMismatchException: si las predicciones no comparten t
    """
    if eps_cond.t != eps_uncond.t:
        raise TimestepMismatchException(eps_cond.t, eps_uncond.t)
    return compose_guidance(eps_cond.eps_hat, eps_uncond.eps_hat, scale)


# Oráculo analítico de mezcla gaussiana

def gmm_marginal_params(
    cond: GmmCondition, t: int, sched: DiffusionSchedule
) -> list[tuple[np.ndarray, float, float]]:
    """
    Marginal de la mezcla tras el ruido VP: cada componente μ_i pasa a media
    sqrt(ᾱ_t)·μ_i con varianza isotrópica ᾱ_t·σ₀² + (1 - ᾱ_t); pesos sin cambio.
    """
    alpha_bar = float(sched.alpha_bar[_checked_t(t, sched)])
    variance = alpha_bar * cond.data_sigma ** 2 + (1.0 - alpha_bar)
    scale = np.sqrt(alpha_bar)
    return [(scale * mean, variance, float(w)) for mean, w in zip(cond.means, cond.weights)]


def _checked_t(t: int, sched: DiffusionSchedule) -> int:
    # t = 0 con σ₀ = 0 dejaría varianza nula
    return sched.validate_timestep(t)


def _flatten_latent(latent: np.ndarray, cond: GmmCondition) -> np.ndarray:
    z = np.asarray(latent, dtype=np.float64).reshape(-1)
    if z.size != cond.dim:
        raise DimensionMismatchException(z.size, cond.dim)
    return z


def _component_log_terms(z: np.ndarray, cond: GmmCondition, t: int, sched: DiffusionSchedule):
    """log w_i + log N(z; sqrt(ᾱ)μ_i, v·I) por componente, junto con medias y v"""
    alpha_bar = float(sched.alpha_bar[_checked_t(t, sched)])
    variance = alpha_bar * cond.data_sigma ** 2 + (1.0 - alpha_bar)
    means_t = np.sqrt(alpha_bar) * cond.means
    sq_dist = np.sum((z[None, :] - means_t) ** 2, axis=1)
    dim = z.size
    log_terms = (
        np.log(cond.weights)
        - 0.5 * sq_dist / variance
        - 0.5 * dim * np.log(2.0 * np.pi * variance)
    )
    return log_terms, means_t, variance


def gmm_log_density(latent: np.ndarray, cond: GmmCondition, t: int, sched: DiffusionSchedule) -> float:
    """log p_t(z) exacto de la mezcla ruidosa"""
    z = _flatten_latent(latent, cond)
    log_terms, _, _ = _component_log_terms(z, cond, t, sched)
    return float(logsumexp(log_terms))


def gmm_predict(latent: np.ndarray, cond: GmmCondition, t: int, sched: DiffusionSchedule) -> NoisePrediction:
    """
    ε̂ = -sqrt(1-ᾱ_t)·∇ log p_t(z) con el score exacto de la mezcla.

    Con responsabilidades r_i (softmax en log-espacio):
        ∇ log p_t(z) = (Σ_i r_i·sqrt(ᾱ_t)μ_i - z) / v
    """
    z = _flatten_latent(latent, cond)
    log_terms, means_t, variance = _component_log_terms(z, cond, t, sched)
    resp = softmax(log_terms)
    score = (resp @ means_t - z) / variance
    sigma = float(sched.sigma[t])
    eps_hat = (-sigma * score).reshape(np.shape(latent))
    return NoisePrediction(eps_hat=eps_hat, t=int(t), condition=Condition.null())


def gmm_posterior_mean(latent: np.ndarray, cond: GmmCondition, t: int, sched: DiffusionSchedule) -> np.ndarray:
    """E[x₀ | z_t] vía Tweedie; diagnóstico"""
    eps = gmm_predict(latent, cond, t, sched).eps_hat
    a, s = sched.coefficients(t)
    return (np.asarray(latent, dtype=np.float64) - s * eps) / a


def marginal_condition(
    prompt_table: Mapping[Hashable, GmmCondition],
    priors: Optional[Mapping[Hashable, float]] = None,
) -> GmmCondition:
    """
    Condición nula como unión de las sub-mezclas de cada prompt,
    ponderadas por su prior (uniforme si no se indica).
    """
    if not prompt_table:
        raise ValidationException("La tabla de prompts está vacía")
    sigmas = {cond.data_sigma for cond in prompt_table.values()}
    if len(sigmas) > 1:
        raise ValidationException(f"Los prompts no comparten data_sigma: {sorted(sigmas)}")
    priors = priors or {key: 1.0 for key in prompt_table}
    total = sum(priors[key] for key in prompt_table)
    components = [
        GmmComponent(mean, priors[key] / total * float(w))
        for key, cond in sorted(prompt_table.items(), key=lambda kv: str(kv[0]))
        for mean, w in zip(cond.means, cond.weights)
    ]
    joined = GmmCondition.from_components(components, data_sigma=sigmas.pop())
    # Renormalizar para absorber el redondeo de la suma
    return GmmCondition(joined.means, joined.weights / joined.weights.sum(), joined.data_sigma)


def prompt_responsibilities(
    latent: np.ndarray,
    prompt_table: Mapping[Hashable, GmmCondition],
    t: int,
    sched: DiffusionSchedule,
    priors: Optional[Mapping[Hashable, float]] = None,
) -> dict[Hashable, float]:
    """P(prompt | z_t) bajo la mezcla de prompts"""
    priors = priors or {key: 1.0 for key in prompt_table}
    keys = sorted(prompt_table, key=str)
    log_post = np.array([
        np.log(priors[k]) + gmm_log_density(latent, prompt_table[k], t, sched) for k in keys
    ])
    probs = softmax(log_post)
    return {k: float(p) for k, p in zip(keys, probs)}


def _restrict(cond: GmmCondition, mask: np.ndarray) -> GmmCondition:
    weights = cond.weights[mask]
    return GmmCondition(cond.means[mask], weights / weights.sum(), cond.data_sigma)


def _contains(haystack: np.ndarray, needle: np.ndarray) -> np.ndarray:
    """Máscara de filas de haystack que coinciden con alguna fila de needle"""
    return np.array([np.any(np.all(np.isclose(row, needle), axis=1)) for row in haystack])


class AnalyticGmmBackend:
    """
    Backend exacto sobre mezclas gaussianas.

    Un prompt selecciona una sub-mezcla de componentes; la condición nula es
    la marginal completa. predict2 modela la condición de imagen como una
    restricción a las componentes dentro de `image_radius` de la componente
    más cercana a la imagen, y luego la condición de texto como intersección
    con las componentes del prompt.
    """

    def __init__(
        self,
        prompt_table: Mapping[Hashable, GmmCondition],
        null_cond: GmmCondition,
        sched: DiffusionSchedule,
        image_radius: float = 0.5,
    ):
        self.prompt_table = dict(prompt_table)
        self.null_cond = null_cond
        self.sched = sched
        self.image_radius = float(image_radius)

    def resolve(self, condition: Condition) -> GmmCondition:
        if condition.is_null:
            return self.null_cond
        try:
            return self.prompt_table[condition.prompt_id]
        except KeyError:
            raise UnknownPromptException(condition.prompt_id)

    def predict(self, latent: np.ndarray, condition: Condition, t: int) -> NoisePrediction:
        cond = self.resolve(condition)
        eps = gmm_predict(latent, cond, t, self.sched).eps_hat
        return NoisePrediction(eps_hat=eps, t=int(t), condition=condition)

    def image_restriction(self, image_cond: np.ndarray) -> GmmCondition:
        image = np.asarray(image_cond, dtype=np.float64).reshape(-1)
        if image.size != self.null_cond.dim:
            raise DimensionMismatchException(image.size, self.null_cond.dim)
        means = self.null_cond.means
        nearest = means[np.argmin(np.sum((means - image) ** 2, axis=1))]
        mask = np.linalg.norm(means - nearest, axis=1) <= self.image_radius
        return _restrict(self.null_cond, mask)

    def predict2(
        self,
        latent: np.ndarray,
        image_cond: Optional[np.ndarray],
        text_cond: Condition,
        t: int,
    ) -> NoisePrediction:
        cond = self.null_cond if image_cond is None else self.image_restriction(image_cond)
        if not text_cond.is_null:
            text = self.resolve(text_cond)
            mask = _contains(cond.means, text.means)
            if mask.any():
                cond = _restrict(cond, mask)
            else:
                logger.warning(
                    f"Condición de imagen y prompt '{text_cond}' sin componentes en común; se usa solo el texto"
                )
                cond = text
        eps = gmm_predict(latent, cond, t, self.sched).eps_hat
        return NoisePrediction(eps_hat=eps, t=int(t), condition=text_cond)


def analytic_backend(
    prompt_table: Mapping[Hashable, GmmCondition],
    null_cond: GmmCondition,
    sched: DiffusionSchedule,
    image_radius: float = 0.5,
) -> AnalyticGmmBackend:
    """
    Crea el backend analítico.

    Raises:
        ValidationException: si alguna componente de un prompt no pertenece a la
            condición nula (que debe ser la marginal de todos los prompts)
    """
    for key, cond in prompt_table.items():
        if cond.dim != null_cond.dim:
            raise DimensionMismatchException(cond.dim, null_cond.dim)
        if not _contains(cond.means, null_cond.means).all():
            raise ValidationException(f"El prompt '{key}' tiene componentes fuera de la condición nula")
    return AnalyticGmmBackend(prompt_table, null_cond, sched, image_radius)


@dataclass
class BackendCall:
    method: str
    condition: str
    t: int
    has_image: bool = False
    latent: Optional[np.ndarray] = None


@dataclass
class CountingBackend:
    """Envoltorio que cuenta (y opcionalmente registra) cada consulta al backend"""
    inner: DenoiserBackend
    record_latents: bool = False
    calls: list[BackendCall] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.calls)

    def predict(self, latent: np.ndarray, condition: Condition, t: int) -> NoisePrediction:
        self.calls.append(BackendCall(
            "predict", str(condition), int(t),
            latent=np.array(latent, dtype=np.float64) if self.record_latents else None,
        ))
        return self.inner.predict(latent, condition, t)

    def predict2(self, latent, image_cond, text_cond, t) -> NoisePrediction:
        self.calls.append(BackendCall(
            "predict2", str(text_cond), int(t), has_image=image_cond is not None,
            latent=np.array(latent, dtype=np.float64) if self.record_latents else None,
        ))
        return self.inner.predict2(latent, image_cond, text_cond, t)

    def reset(self) -> None:
        self.calls.clear()


def build_prompt_table(spec: BackendSpec) -> tuple[dict[str, GmmCondition], dict[str, float]]:
    """Tabla de prompts (pesos relativos normalizados) y priors desde el BackendSpec"""
    table: dict[str, GmmCondition] = {}
    priors: dict[str, float] = {}
    for prompt_id, prompt in sorted(spec.prompts.items()):
        total = sum(c.weight for c in prompt.components)
        table[prompt_id] = GmmCondition.from_components(
            [GmmComponent(np.asarray(c.mean, dtype=np.float64), c.weight / total) for c in prompt.components],
            data_sigma=spec.data_sigma,
        )
        priors[prompt_id] = prompt.prior
    return table, priors


def load_backend(spec: BackendSpec, sched: DiffusionSchedule) -> DenoiserBackend:
    """
    Construye el backend descrito en el config.

    Raises:
        ConfigException: si el plugin no se puede importar o no cumple el protocolo
        BackendLoadException: si la factory del plugin lanza una excepción (código 3)
    """
    if spec.kind == BackendKind.ANALYTIC_GMM:
        table, priors = build_prompt_table(spec)
        null_cond = marginal_condition(table, priors)
        logger.info(
            f"Backend analítico: {len(table)} prompts, {null_cond.num_components} componentes, dim={null_cond.dim}"
        )
        return analytic_backend(table, null_cond, sched, spec.image_radius)

    module_name, _, factory_name = spec.target.partition(":")
    try:
        factory = getattr(importlib.import_module(module_name), factory_name)
    except (ImportError, AttributeError) as e:
        raise ConfigException(f"No se pudo cargar el backend '{spec.target}': {e}")
    try:
        backend = factory(schedule=sched, **spec.options)
    except Exception as e:
        raise BackendLoadException(spec.target, f"{type(e).__name__}: {e}") from e
    if not isinstance(backend, DenoiserBackend):
        raise ConfigException(f"'{spec.target}' no devuelve un objeto con predict/predict2")
    logger.info(f"Backend plugin cargado: {spec.target}")
    return backend
