from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..core.config import settings
from ..core.context import current_iteration, current_run_id
from ..core.exceptions import (
    BackendQueryException,
    NonFiniteGradientException,
    NonFinitePredictionException,
    ScoreDistillBaseException,
)
from ..core.logging_config import get_logger
from ..models.denoiser import Condition, DenoiserBackend
from ..models.edit import EditLog, EditState, Generator
from ..models.estimator import Estimator, EstimatorInputs
from ..models.schedule import DiffusionSchedule, TimestepSampler
from ..schemas.config import (
    EditConfig,
    GeneratorKind,
    IdAnchor,
    NoisePolicy,
    OptimizerKind,
    SdsWeighting,
)
from ..schemas.edit_log import EditLogRecord
from . import distill_service as distill
from .denoiser_service import CountingBackend, load_backend
from .metrics_service import mse, region_mse
from .schedule_service import add_noise, make_schedule, sample_timestep

logger = get_logger(__name__)


class IdentityGenerator:
    """θ es directamente la grilla de píxeles"""

    def render(self, theta: np.ndarray) -> np.ndarray:
        return np.array(theta, dtype=np.float64)

    def apply_grad(self, theta: np.ndarray, pixel_grad: np.ndarray, step_size: float) -> np.ndarray:
        return theta - step_size * pixel_grad


class LinearBasisGenerator:
    """x = B·θ con B de forma (num_pixels, num_params); ∂x/∂θ = B"""

    def __init__(self, basis: np.ndarray, image_shape: tuple[int, ...]):
        self.basis = np.asarray(basis, dtype=np.float64)
        self.image_shape = tuple(image_shape)

    def render(self, theta: np.ndarray) -> np.ndarray:
        return (self.basis @ theta).reshape(self.image_shape)

    def apply_grad(self, theta: np.ndarray, pixel_grad: np.ndarray, step_size: float) -> np.ndarray:
        return theta - step_size * (self.basis.T @ np.reshape(pixel_grad, -1))

    def project(self, image: np.ndarray) -> np.ndarray:
        """θ de mínimos cuadrados que mejor reproduce `image`"""
        theta, *_ = np.linalg.lstsq(self.basis, np.reshape(image, -1), rcond=None)
        return theta


@dataclass(frozen=True)
class NoiseSource:
    """Ruido (ε, ε′) por iteración, sembrado por (seed, iter)"""
    seed: int
    policy: NoisePolicy = NoisePolicy.SHARED

    def draw(self, iteration: int, shape: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
        rng = np.random.default_rng([self.seed, iteration])
        eps = rng.standard_normal(shape)
        if self.policy == NoisePolicy.SHARED:
            return eps, eps
        return eps, rng.standard_normal(shape)


@dataclass(frozen=True)
class EditOptions:
    step_size: float = 0.05
    noise_policy: NoisePolicy = NoisePolicy.SHARED
    noise_seed: int = 0
    id_anchor: IdAnchor = IdAnchor.NOISY
    sds_weighting: SdsWeighting = SdsWeighting.UNIT
    optimizer: OptimizerKind = OptimizerKind.SGD
    momentum: float = 0.9
    regions: Dict[str, List[int]] = field(default_factory=dict)
    nonfinite_abort: bool = True

    @classmethod
    def from_config(cls, config: EditConfig) -> "EditOptions":
        return cls(
            step_size=config.step_size,
            noise_policy=config.noise_policy,
            noise_seed=config.seeds.noise_seed,
            id_anchor=config.id_anchor,
            sds_weighting=config.sds_weighting,
            optimizer=config.optimizer.kind,
            momentum=config.optimizer.momentum,
            regions=dict(config.metrics.regions) if config.metrics.per_iteration else {},
            nonfinite_abort=settings.nonfinite_abort,
        )


def _norm(array: np.ndarray) -> float:
    return float(np.linalg.norm(np.reshape(array, -1)))


class EditService:
    """
    Loop de optimización: renderiza, agrega ruido, consulta el backend,
    arma el gradiente del estimador elegido y actualiza θ.
    """

    def __init__(
        self,
        backend: DenoiserBackend,
        schedule: DiffusionSchedule,
        sampler: TimestepSampler,
        generator: Generator,
        options: Optional[EditOptions] = None,
        noise_source: Optional[NoiseSource] = None,
    ):
        self.backend = backend if isinstance(backend, CountingBackend) else CountingBackend(backend)
        self.schedule = schedule
        self.sampler = sampler
        self.generator = generator
        self.options = options or EditOptions()
        self.noise_source = noise_source or NoiseSource(self.options.noise_seed, self.options.noise_policy)
        sampler.check_against(schedule)

    # Consultas al backend

    def _predict(self, latent: np.ndarray, condition: Condition, t: int) -> np.ndarray:
        return self.backend.predict(latent, condition, t).eps_hat

    def _gather(self, state: EditState, z_t: np.ndarray, z_hat_t: np.ndarray, eps: np.ndarray, t: int) -> EstimatorInputs:
        """Consulta solo las predicciones que usa el estimador del estado"""
        y, y_hat, null = state.target_prompt, state.source_prompt, Condition.null()
        estimator = state.estimator
        if estimator == Estimator.SDS:
            return EstimatorInputs(
                t=t,
                eps_tgt_y=self._predict(z_t, y, t),
                eps_tgt_null=self._predict(z_t, null, t),
                true_noise=eps,
            )
        if estimator == Estimator.DDS:
            return EstimatorInputs(
                t=t,
                eps_tgt_y=self._predict(z_t, y, t),
                eps_tgt_null=self._predict(z_t, null, t),
                eps_src_prompt=self._predict(z_hat_t, y_hat, t),
                eps_src_null=self._predict(z_hat_t, null, t),
            )
        if estimator == Estimator.CSD:
            return EstimatorInputs(
                t=t,
                eps_tgt_y=self._predict(z_t, y, t),
                eps_tgt_src_prompt=self._predict(z_t, y_hat, t),
                eps_tgt_null=self._predict(z_t, null, t),
            )
        # ssd y ssd_full
        eps_tgt_null = None
        if estimator == Estimator.SSD_FULL and state.weights.w_e != 0:
            eps_tgt_null = self._predict(z_t, null, t)
        return EstimatorInputs(
            t=t,
            eps_tgt_y=self._predict(z_t, y, t),
            eps_tgt_src_prompt=self._predict(z_t, y_hat, t),
            eps_tgt_null=eps_tgt_null,
            eps_src_null=self._predict(z_hat_t, null, t),
        )

    def _gradient(
        self, state: EditState, x: np.ndarray, z_t: np.ndarray, z_hat_t: np.ndarray, eps: np.ndarray, t: int
    ) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        """Gradiente en píxeles y sus términos con nombre (para logging)"""
        w = state.weights
        if state.estimator == Estimator.IP2P_EDIT:
            null = Condition.null()
            eps_nn = self.backend.predict2(z_t, None, null, t).eps_hat
            eps_In = self.backend.predict2(z_t, state.source_image, null, t).eps_hat
            eps_IT = self.backend.predict2(z_t, state.source_image, state.target_prompt, t).eps_hat
            image_term, text_term = distill.ip2p_edit_terms(eps_nn, eps_In, eps_IT, w.s_I, w.s_T)
            return image_term + text_term, {"cross_trajectory": image_term, "cross_prompt": text_term}

        inputs = self._gather(state, z_t, z_hat_t, eps, t)

        if state.estimator == Estimator.SDS:
            wt = 1.0 if self.options.sds_weighting == SdsWeighting.UNIT else float(1.0 - self.schedule.alpha_bar[t])
            return distill.sds_grad(inputs, w.s, wt), {}
        if state.estimator == Estimator.DDS:
            return distill.dds_grad(inputs, w.s), {}
        if state.estimator == Estimator.CSD:
            return distill.csd_grad(inputs, w.w_a, w.w_b), {}
        if state.estimator == Estimator.SSD:
            terms = {
                "cross_prompt": distill.cross_prompt_term(inputs, w.s),
                "cross_trajectory": distill.cross_trajectory_term(inputs, 1.0),
            }
            return distill.ssd_grad(inputs, w.s), terms

        # ssd_full
        if self.options.id_anchor == IdAnchor.NOISY:
            x_t, x_hat_t = z_t, z_hat_t
        else:
            x_t, x_hat_t = x, state.source_image
        terms = distill.ssd_terms(inputs, x_t, x_hat_t, w, state.iter)
        return distill.final_grad(inputs, x_t, x_hat_t, w, state.iter), terms

    def _optimizer_direction(self, grad: np.ndarray, velocity: Optional[np.ndarray]):
        if self.options.optimizer == OptimizerKind.MOMENTUM:
            velocity = grad if velocity is None else self.options.momentum * velocity + grad
            return velocity, velocity
        return grad, None

    def _region_metrics(self, image: np.ndarray, source: np.ndarray) -> dict[str, float]:
        return {
            f"region_mse:{name}": region_mse(image, source, indices)
            for name, indices in sorted(self.options.regions.items())
        }

    def step(self, state: EditState) -> tuple[EditState, EditLogRecord]:
        """
        Una iteración de edición.

        Raises:
            NonFiniteGradientException: si el gradiente (o una predicción) no es finito
            BackendQueryException: si el backend falla
        """
        iteration = state.iter
        token = current_iteration.set(iteration)
        try:
            t = sample_timestep(self.sampler, iteration)
            x = self.generator.render(state.theta)
            eps, eps_src = self.noise_source.draw(iteration, x.shape)
            z_t = add_noise(x, t, eps, self.schedule)
            z_hat_t = add_noise(state.source_image, t, eps_src, self.schedule)

            queries_before = self.backend.count
            with np.errstate(over="ignore", invalid="ignore"):
                try:
                    grad, terms = self._gradient(state, x, z_t, z_hat_t, eps, t)
                except NonFinitePredictionException as e:
                    logger.error(f"Predicción no finita en iteración {iteration}: {e.detail}")
                    raise NonFiniteGradientException(iteration, t) from e
                except ScoreDistillBaseException:
                    raise
                except Exception as e:
                    raise BackendQueryException(str(e)) from e
                n_queries = self.backend.count - queries_before

                term_norms = {name: _norm(value) for name, value in terms.items()}
                if not np.all(np.isfinite(grad)):
                    if self.options.nonfinite_abort:
                        raise NonFiniteGradientException(iteration, t, term_norms)
                    grad = np.nan_to_num(grad, nan=0.0, posinf=0.0, neginf=0.0)
                    logger.warning(f"Gradiente no finito anulado en iteración {iteration}")

                direction, velocity = self._optimizer_direction(grad, state.velocity)
                theta = self.generator.apply_grad(state.theta, direction, self.options.step_size)
                image = self.generator.render(theta)
                mse_to_source = mse(image, state.source_image)

            record = EditLogRecord(
                iter=iteration,
                t=t,
                estimator=state.estimator,
                grad_norm=_norm(grad),
                mse_to_source=mse_to_source if np.isfinite(mse_to_source) else float("inf"),
                n_queries=n_queries,
                term_norms=term_norms,
                metrics=self._region_metrics(image, state.source_image),
            )
            logger.debug(
                f"iter={iteration} t={t} |g|={record.grad_norm:.4g} mse={record.mse_to_source:.4g} q={n_queries}"
            )
            return state.advance(theta, velocity), record
        finally:
            current_iteration.reset(token)

    def run(self, state: EditState, total_iters: int) -> tuple[EditState, EditLog]:
        """
        Ejecuta `total_iters` pasos desde `state`.

        Raises:
            ScoreDistillBaseException: con `partial_log` conteniendo las iteraciones completadas
        """
        state.check_generator(self.generator)
        log = EditLog()
        for _ in range(total_iters):
            try:
                state, record = self.step(state)
            except ScoreDistillBaseException as e:
                e.partial_log = log
                logger.error(f"Edición abortada tras {len(log)} iteraciones: {e.detail}")
                raise
            log.append(record)
        return state, log


def build_generator(config: EditConfig):
    source = config.source_array()
    if config.generator.kind == GeneratorKind.LINEAR_BASIS:
        generator = LinearBasisGenerator(np.asarray(config.generator.basis), source.shape)
        if config.generator.init_theta is not None:
            theta = np.asarray(config.generator.init_theta, dtype=np.float64)
        else:
            theta = generator.project(source)
        return generator, theta
    theta = source.copy() if config.generator.init_theta is None else np.asarray(
        config.generator.init_theta, dtype=np.float64
    ).reshape(source.shape)
    return IdentityGenerator(), theta


def build_session(config: EditConfig, backend: Optional[DenoiserBackend] = None) -> tuple[EditService, EditState]:
    """Arma el servicio y el estado inicial a partir de un EditConfig validado"""
    schedule = make_schedule(config.schedule.num_steps, config.schedule.beta_min, config.schedule.beta_max)
    sampler_config = config.effective_sampler()
    sampler = TimestepSampler(
        kind=sampler_config.kind,
        t_min=sampler_config.t_min,
        t_max=sampler_config.t_max,
        total_iters=max(config.total_iters, 1),
        rng_seed=config.seeds.sampler_seed,
    )
    if backend is None:
        backend = load_backend(config.backend, schedule)
    generator, theta = build_generator(config)
    service = EditService(backend, schedule, sampler, generator, EditOptions.from_config(config))
    state = EditState(
        theta=theta,
        source_image=config.source_array(),
        source_prompt=Condition.null() if config.source_prompt is None else Condition.prompt(config.source_prompt),
        target_prompt=Condition.prompt(config.target_prompt),
        weights=config.effective_weights(),
        estimator=config.estimator,
    )
    return service, state


def run_edit(config: EditConfig, backend: Optional[DenoiserBackend] = None) -> tuple[np.ndarray, EditLog]:
    """
    Corre una edición completa; determinista dado el config y sus semillas.

    Raises:
        ScoreDistillBaseException: con el log parcial en `partial_log` si falló dentro del loop
    """
    token = current_run_id.set(config.run_id)
    try:
        service, state = build_session(config, backend)
        logger.info(
            f"Iniciando edición '{config.run_id}': estimador={config.estimator.value}, "
            f"iteraciones={config.total_iters}, sampler={config.effective_sampler().kind.value}"
        )
        final_state, log = service.run(state, config.total_iters)
        image = service.generator.render(final_state.theta)
        logger.info(f"Edición '{config.run_id}' completada: mse a la fuente={mse(image, state.source_image):.6g}")
        return image, log
    finally:
        current_run_id.reset(token)
