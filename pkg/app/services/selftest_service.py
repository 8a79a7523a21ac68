"""
Suites de verificación numérica que corre `selftest`.

Cada suite devuelve un SuiteResult con la peor desviación observada y el
umbral contra el que se compara; el comando sale con 0 sólo si todas pasan.
"""
import sys
import time
from dataclasses import dataclass
from typing import Callable, List, Optional, TextIO

import numpy as np

from ..core.logging_config import get_logger
from ..models.denoiser import GmmCondition
from ..models.estimator import EstimatorInputs
from ..schemas.config import EditConfig
from ..seeds.data.scenarios import CONVERGENCE_1D
from . import distill_service as distill
from .denoiser_service import gmm_log_density, gmm_predict
from .edit_service import run_edit
from .schedule_service import add_noise, make_schedule

logger = get_logger(__name__)

IDENTITY_TOLERANCE = 1e-12
FD_TOLERANCE = 1e-4
FD_STEP = 1e-4
CONVERGENCE_TOLERANCE = 0.05


@dataclass
class SuiteResult:
    name: str
    cases: int
    max_deviation: float
    threshold: float
    seconds: float = 0.0
    detail: Optional[str] = None

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_deviation)) and self.max_deviation < self.threshold


def _random_inputs(rng: np.random.Generator, t: int = 500) -> EstimatorInputs:
    shape = (int(rng.integers(1, 9)),)
    draw = lambda: rng.standard_normal(shape)  # noqa: E731
    return EstimatorInputs(
        t=t,
        eps_tgt_y=draw(),
        eps_tgt_src_prompt=draw(),
        eps_tgt_null=draw(),
        eps_src_prompt=draw(),
        eps_src_null=draw(),
        true_noise=draw(),
    )


def random_mixture(rng: np.random.Generator, dim: int) -> GmmCondition:
    k = int(rng.integers(1, 5))
    weights = rng.uniform(0.2, 1.0, size=k)
    return GmmCondition(
        means=rng.uniform(-2.0, 2.0, size=(k, dim)),
        weights=weights / weights.sum(),
        data_sigma=float(rng.uniform(0.0, 0.5)),
    )


def identity_suite(draws: int = 1000, seed: int = 0) -> SuiteResult:
    """ssd_grad(s) contra ssd_decomposed(w_p=s, w_t=1)"""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        inputs = _random_inputs(rng)
        s = float(rng.uniform(-10.0, 10.0))
        diff = distill.ssd_grad(inputs, s) - distill.ssd_decomposed(inputs, s, 1.0)
        worst = max(worst, float(np.max(np.abs(diff))))
    return SuiteResult("ssd = ssd_decomposed", draws, worst, IDENTITY_TOLERANCE)


def csd_regime_suite(draws: int = 1000, seed: int = 1) -> SuiteResult:
    """ssd_decomposed(w_p=w, w_t=0) contra csd_grad(w_a=w_b=w)"""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        inputs = _random_inputs(rng)
        w = float(rng.uniform(-10.0, 10.0))
        diff = distill.ssd_decomposed(inputs, w, 0.0) - distill.csd_grad(inputs, w, w)
        worst = max(worst, float(np.max(np.abs(diff))))
    return SuiteResult("ssd(w_t=0) = csd", draws, worst, IDENTITY_TOLERANCE)


def id_closed_form_suite(draws: int = 1000, seed: int = 2) -> SuiteResult:
    """id_reg_grad con ruido compartido contra weight·sqrt(ᾱ_t)·(x₀ - x̂₀)"""
    rng = np.random.default_rng(seed)
    sched = make_schedule(1000, 1e-4, 0.02)
    worst = 0.0
    for _ in range(draws):
        shape = (int(rng.integers(1, 9)),)
        x0, x_hat0, eps = rng.uniform(-1, 1, shape), rng.uniform(-1, 1, shape), rng.standard_normal(shape)
        t = int(rng.integers(1, sched.num_steps + 1))
        weight = float(rng.uniform(0.0, 2.0))
        got = distill.id_reg_grad(add_noise(x0, t, eps, sched), add_noise(x_hat0, t, eps, sched), weight)
        expected = weight * sched.sqrt_alpha_bar(t) * (x0 - x_hat0)
        worst = max(worst, float(np.max(np.abs(got - expected))))
    return SuiteResult("id_reg forma cerrada", draws, worst, IDENTITY_TOLERANCE)


def ip2p_suite(draws: int = 1000, seed: int = 3) -> SuiteResult:
    """Telescopado con s_I = s_T = 1 (exacto) y reparto en dos términos"""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        shape = (int(rng.integers(1, 9)),)
        eps_nn, eps_In, eps_IT = (rng.standard_normal(shape) for _ in range(3))
        telescoped = distill.ip2p_compose(eps_nn, eps_In, eps_IT, 1.0, 1.0)
        if not np.array_equal(telescoped, eps_IT):
            worst = max(worst, float(np.max(np.abs(telescoped - eps_IT))) or np.inf)
        s_I, s_T = float(rng.uniform(0, 3)), float(rng.uniform(0, 10))
        image_term, text_term = distill.ip2p_edit_terms(eps_nn, eps_In, eps_IT, s_I, s_T)
        composed = distill.ip2p_compose(eps_nn, eps_In, eps_IT, s_I, s_T) - eps_nn
        worst = max(worst, float(np.max(np.abs(image_term + text_term - composed))))
    return SuiteResult("ip2p telescopado", draws, worst, IDENTITY_TOLERANCE)


def finite_difference_case(
    cond: GmmCondition, z: np.ndarray, t: int, sched, h: float = FD_STEP
) -> float:
    """Error relativo entre ε̂ y -sqrt(1-ᾱ_t)·∇log p_t por diferencias centrales"""
    grad = np.zeros_like(z)
    for i in range(z.size):
        step = np.zeros_like(z)
        step[i] = h
        grad[i] = (gmm_log_density(z + step, cond, t, sched) - gmm_log_density(z - step, cond, t, sched)) / (2 * h)
    reference = -sched.sigma_at(t) * grad
    eps = gmm_predict(z, cond, t, sched).eps_hat
    return float(np.linalg.norm(eps - reference) / max(np.linalg.norm(reference), 1.0))


def finite_difference_suite(cases: int = 200, seed: int = 4) -> SuiteResult:
    rng = np.random.default_rng(seed)
    sched = make_schedule(1000, 1e-4, 0.02)
    worst = 0.0
    for _ in range(cases):
        dim = int(rng.integers(1, 5))
        cond = random_mixture(rng, dim)
        t = int(rng.integers(50, sched.num_steps + 1))
        a, s = sched.coefficients(t)
        k = int(rng.integers(cond.num_components))
        spread = np.sqrt(a ** 2 * cond.data_sigma ** 2 + s ** 2)
        z = a * cond.means[k] + spread * rng.standard_normal(dim)
        worst = max(worst, finite_difference_case(cond, z, t, sched))
    return SuiteResult("diferencias finitas", cases, worst, FD_TOLERANCE)


def convergence_suite() -> SuiteResult:
    """Loop SSD 1-D de -1 a +1 en 300 iteraciones"""
    config = EditConfig.model_validate(CONVERGENCE_1D)
    image, log = run_edit(config)
    deviation = float(abs(image.reshape(-1)[0] - 1.0))
    return SuiteResult(
        "convergencia 1-D", len(log), deviation, CONVERGENCE_TOLERANCE, detail=f"θ final={image.reshape(-1)[0]:.6f}"
    )


SUITES: List[Callable[[], SuiteResult]] = [
    identity_suite,
    csd_regime_suite,
    id_closed_form_suite,
    ip2p_suite,
    finite_difference_suite,
    convergence_suite,
]


def run_suites(suites: Optional[List[Callable[[], SuiteResult]]] = None) -> List[SuiteResult]:
    results = []
    for suite in suites or SUITES:
        started = time.perf_counter()
        try:
            result = suite()
        except Exception as e:
            logger.exception(f"La suite {suite.__name__} falló con excepción")
            result = SuiteResult(suite.__name__, 0, float("inf"), 0.0, detail=f"{type(e).__name__}: {e}")
        result.seconds = time.perf_counter() - started
        results.append(result)
    return results


def format_table(results: List[SuiteResult]) -> str:
    header = f"{'suite':<26} {'casos':>6} {'desv. máx':>12} {'umbral':>10} {'seg':>7}  estado"
    lines = [header, "-" * len(header)]
    for r in results:
        status = "OK" if r.passed else "FALLA"
        line = f"{r.name:<26} {r.cases:>6} {r.max_deviation:>12.3e} {r.threshold:>10.1e} {r.seconds:>7.2f}  {status}"
        if r.detail:
            line += f"  ({r.detail})"
        lines.append(line)
    return "\n".join(lines)


def cmd_selftest(out: Optional[TextIO] = None) -> int:
    """Imprime la tabla de resultados; 0 si todas las suites pasan, 1 si no"""
    results = run_suites()
    print(format_table(results), file=out or sys.stdout)
    failed = [r.name for r in results if not r.passed]
    if failed:
        logger.error(f"selftest: fallaron {failed}")
        return 1
    logger.info("selftest: todas las suites pasaron")
    return 0
