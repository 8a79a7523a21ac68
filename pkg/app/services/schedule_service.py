import math

import numpy as np

from ..core.exceptions import InvalidRangeException, ShapeMismatchException
from ..core.logging_config import get_logger
from ..models.schedule import DiffusionSchedule, SamplerKind, TimestepSampler

logger = get_logger(__name__)


def make_schedule(num_steps: int, beta_min: float, beta_max: float) -> DiffusionSchedule:
    """
    Construye el schedule VP con β lineal.

    alpha_bar[0] = 1 y alpha_bar[t] = ∏_{i<=t} (1 - β_i).

    Raises:
        InvalidRangeException: si num_steps < 2 o no se cumple 0 < β_min < β_max < 1
    """
    if isinstance(num_steps, bool) or int(num_steps) != num_steps or num_steps < 2:
        raise InvalidRangeException("num_steps", num_steps, "entero >= 2")
    if not (0 < beta_min < beta_max < 1):
        raise InvalidRangeException("beta", (beta_min, beta_max), "0 < beta_min < beta_max < 1")

    betas = np.linspace(beta_min, beta_max, int(num_steps), dtype=np.float64)
    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    return DiffusionSchedule(num_steps=int(num_steps), alpha_bar=alpha_bar)


def add_noise(x: np.ndarray, t: int, eps: np.ndarray, sched: DiffusionSchedule) -> np.ndarray:
    """z_t = sqrt(ᾱ_t)·x + sqrt(1-ᾱ_t)·ε"""
    x = np.asarray(x, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x.shape != eps.shape:
        raise ShapeMismatchException("add_noise", [x.shape, eps.shape])
    a, s = sched.coefficients(t)
    return a * x + s * eps


def sample_timestep(sampler: TimestepSampler, iteration: int) -> int:
    """
    Timestep de la iteración `iteration`.

    uniform_random: entero uniforme en [t_min, t_max] sembrado por (rng_seed, iter).
    non_increasing_linear: round(t_max - (t_max - t_min)·iter/(total_iters-1)),
    redondeo al más cercano con empates hacia arriba.
    """
    if isinstance(iteration, bool) or int(iteration) != iteration or not 0 <= iteration < sampler.total_iters:
        raise InvalidRangeException("iter", iteration, f"entero en [0, {sampler.total_iters})")
    iteration = int(iteration)

    if sampler.kind == SamplerKind.UNIFORM_RANDOM:
        rng = np.random.default_rng([sampler.rng_seed, iteration])
        return int(rng.integers(sampler.t_min, sampler.t_max + 1))

    if sampler.total_iters == 1:
        return sampler.t_max
    value = sampler.t_max - (sampler.t_max - sampler.t_min) * iteration / (sampler.total_iters - 1)
    return int(math.floor(value + 0.5))


def timestep_sequence(sampler: TimestepSampler) -> list[int]:
    """Secuencia completa emitida por el sampler"""
    return [sample_timestep(sampler, i) for i in range(sampler.total_iters)]
