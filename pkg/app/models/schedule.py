from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..core.exceptions import InvalidRangeException


class SamplerKind(str, Enum):
    UNIFORM_RANDOM = "uniform_random"
    NON_INCREASING_LINEAR = "non_increasing_linear"


@dataclass(frozen=True)
class DiffusionSchedule:
    """
    Schedule variance-preserving: alpha_bar[t] para t en [0, T].

    alpha_bar[0] = 1 y sigma[t]^2 + alpha_bar[t] = 1 para todo t.
    """
    num_steps: int
    alpha_bar: np.ndarray
    sigma: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        alpha_bar = np.asarray(self.alpha_bar, dtype=np.float64)
        if alpha_bar.shape != (self.num_steps + 1,):
            raise InvalidRangeException(
                "alpha_bar", alpha_bar.shape, f"longitud {self.num_steps + 1}"
            )
        if alpha_bar[0] != 1.0:
            raise InvalidRangeException("alpha_bar[0]", alpha_bar[0], "exactamente 1")
        if not (np.all(np.diff(alpha_bar) < 0) and alpha_bar[-1] > 0):
            raise InvalidRangeException("alpha_bar", alpha_bar.tolist(), "estrictamente decreciente en (0, 1]")
        alpha_bar.setflags(write=False)
        sigma = np.sqrt(1.0 - alpha_bar)
        sigma.setflags(write=False)
        object.__setattr__(self, "alpha_bar", alpha_bar)
        object.__setattr__(self, "sigma", sigma)

    def validate_timestep(self, t: int) -> int:
        if isinstance(t, bool) or int(t) != t or not 1 <= int(t) <= self.num_steps:
            raise InvalidRangeException("t", t, f"entero en [1, {self.num_steps}]")
        return int(t)

    def sqrt_alpha_bar(self, t: int) -> float:
        return float(np.sqrt(self.alpha_bar[self.validate_timestep(t)]))

    def sigma_at(self, t: int) -> float:
        return float(self.sigma[self.validate_timestep(t)])

    def coefficients(self, t: int) -> tuple[float, float]:
        """(coeficiente de x, coeficiente de eps) de z_t"""
        t = self.validate_timestep(t)
        return float(np.sqrt(self.alpha_bar[t])), float(self.sigma[t])


@dataclass(frozen=True)
class TimestepSampler:
    """Muestreador de timesteps; su salida depende solo de (rng_seed, iter)"""
    kind: SamplerKind
    t_min: int
    t_max: int
    total_iters: int
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", SamplerKind(self.kind))
        if self.t_min < 1:
            raise InvalidRangeException("t_min", self.t_min, ">= 1")
        if self.t_min > self.t_max:
            raise InvalidRangeException("t_min", self.t_min, f"<= t_max ({self.t_max})")
        if self.total_iters < 1:
            raise InvalidRangeException("total_iters", self.total_iters, ">= 1")

    def check_against(self, schedule: DiffusionSchedule) -> None:
        if self.t_max > schedule.num_steps:
            raise InvalidRangeException("t_max", self.t_max, f"<= T ({schedule.num_steps})")
