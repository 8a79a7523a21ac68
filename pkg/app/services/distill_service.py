"""
Estimadores de gradiente de score distillation.

Todas las funciones son puras y devuelven el gradiente respecto de los píxeles
de la imagen renderizada; el factor ∂x/∂θ lo aplica el generador en el loop
de edición.
"""
from typing import Optional

import numpy as np

from ..core.exceptions import ShapeMismatchException
from ..models.estimator import EstimatorInputs
from ..schemas.guidance import GuidanceWeights
from .denoiser_service import compose_guidance


def _same_shape(what: str, *arrays) -> tuple[np.ndarray, ...]:
    arrays = tuple(np.asarray(a, dtype=np.float64) for a in arrays)
    if len({a.shape for a in arrays}) > 1:
        raise ShapeMismatchException(what, [a.shape for a in arrays])
    return arrays


def sds_grad(inputs: EstimatorInputs, scale: float, wt: float) -> np.ndarray:
    """wt·(ε̂_cfg(z_t, y) - ε)"""
    eps_y, eps_null, noise = inputs.require("eps_tgt_y", "eps_tgt_null", "true_noise", estimator="sds")
    return wt * (compose_guidance(eps_y, eps_null, scale) - noise)


def dds_grad(inputs: EstimatorInputs, scale: float) -> np.ndarray:
    """ε̂_cfg(z_t, y) - ε̂_cfg(ẑ_t, ŷ), ambas ramas con la misma escala"""
    eps_y, eps_null, eps_src, eps_src_null = inputs.require(
        "eps_tgt_y", "eps_tgt_null", "eps_src_prompt", "eps_src_null", estimator="dds"
    )
    return compose_guidance(eps_y, eps_null, scale) - compose_guidance(eps_src, eps_src_null, scale)


def delta_text_estimate(inputs: EstimatorInputs, scale: float) -> np.ndarray:
    """Aproximación diagnóstica de δ_text: la salida de DDS"""
    return dds_grad(inputs, scale)


def csd_grad(inputs: EstimatorInputs, w_a: float, w_b: float) -> np.ndarray:
    """
    w_a·(ε(z_t, y) - ε(z_t, ∅)) - w_b·(ε(z_t, ŷ) - ε(z_t, ∅)).

    Ambos clasificadores se evalúan sobre el latente ACTUAL z_t.
    """
    eps_y, eps_src, eps_null = inputs.require(
        "eps_tgt_y", "eps_tgt_src_prompt", "eps_tgt_null", estimator="csd"
    )
    return w_a * (eps_y - eps_null) - w_b * (eps_src - eps_null)


def ssd_grad(inputs: EstimatorInputs, s: float) -> np.ndarray:
    """ε(z_t, ŷ) + s·(ε(z_t, y) - ε(z_t, ŷ)) - ε(ẑ_t, ∅)"""
    eps_y, eps_src, eps_src_null = inputs.require(
        "eps_tgt_y", "eps_tgt_src_prompt", "eps_src_null", estimator="ssd"
    )
    return eps_src + s * (eps_y - eps_src) - eps_src_null


def cross_prompt_term(inputs: EstimatorInputs, w_p: float) -> np.ndarray:
    eps_y, eps_src = inputs.require("eps_tgt_y", "eps_tgt_src_prompt", estimator="ssd")
    return w_p * (eps_y - eps_src)


def cross_trajectory_term(inputs: EstimatorInputs, w_t: float) -> np.ndarray:
    eps_src, eps_src_null = inputs.require("eps_tgt_src_prompt", "eps_src_null", estimator="ssd")
    return w_t * (eps_src - eps_src_null)


def ssd_decomposed(inputs: EstimatorInputs, w_p: float, w_t: float) -> np.ndarray:
    """w_p·(ε(z_t, y) - ε(z_t, ŷ)) + w_t·(ε(z_t, ŷ) - ε(ẑ_t, ∅))"""
    return cross_prompt_term(inputs, w_p) + cross_trajectory_term(inputs, w_t)


def prompt_align_grad(inputs: EstimatorInputs, w_e: float) -> np.ndarray:
    """w_e·(ε(z_t, y) - ε(z_t, ∅))"""
    eps_y, eps_null = inputs.require("eps_tgt_y", "eps_tgt_null", estimator="align")
    return w_e * (eps_y - eps_null)


def id_reg_grad(x_t: np.ndarray, x_hat_t: np.ndarray, weight: float) -> np.ndarray:
    """
    weight·(x_t - x̂_t).

    Con ambos latentes ruidosos con el mismo ε y el mismo t esto es
    weight·sqrt(ᾱ_t)·(x₀ - x̂₀).
    """
    x_t, x_hat_t = _same_shape("id_reg_grad", x_t, x_hat_t)
    return weight * (x_t - x_hat_t)


def ip2p_compose(
    eps_nn: np.ndarray, eps_In: np.ndarray, eps_IT: np.ndarray, s_I: float, s_T: float
) -> np.ndarray:
    """
    Paso de InstructPix2Pix con doble guidance:
        ε(∅,∅) + s_I·(ε(c_I,∅) - ε(∅,∅)) + s_T·(ε(c_I,c_T) - ε(c_I,∅))

    Se evalúa agrupado por predicción, (1-s_I)·ε(∅,∅) + (s_I-s_T)·ε(c_I,∅) + s_T·ε(c_I,c_T),
    así con s_I = s_T = 1 el resultado es ε(c_I,c_T) exacto.
    """
    eps_nn, eps_In, eps_IT = _same_shape("ip2p_compose", eps_nn, eps_In, eps_IT)
    return (1.0 - s_I) * eps_nn + (s_I - s_T) * eps_In + s_T * eps_IT


def ip2p_edit_terms(
    eps_nn: np.ndarray, eps_In: np.ndarray, eps_IT: np.ndarray, s_I: float, s_T: float
) -> tuple[np.ndarray, np.ndarray]:
    """(término condicionado por imagen, término condicionado por texto)"""
    eps_nn, eps_In, eps_IT = _same_shape("ip2p_edit_grad", eps_nn, eps_In, eps_IT)
    return s_I * (eps_In - eps_nn), s_T * (eps_IT - eps_In)


def ip2p_edit_grad(
    eps_nn: np.ndarray, eps_In: np.ndarray, eps_IT: np.ndarray, s_I: float, s_T: float
) -> np.ndarray:
    """ip2p_compose(...) - ε(∅,∅)"""
    image_term, text_term = ip2p_edit_terms(eps_nn, eps_In, eps_IT, s_I, s_T)
    return image_term + text_term


def ssd_terms(
    inputs: EstimatorInputs,
    x_t: Optional[np.ndarray],
    x_hat_t: Optional[np.ndarray],
    weights: GuidanceWeights,
    iteration: int,
) -> dict[str, np.ndarray]:
    """
    Términos con nombre de la pérdida final: cross_prompt, cross_trajectory y,
    si están activos, align e id. Su suma es final_grad.
    """
    terms = {
        "cross_prompt": cross_prompt_term(inputs, weights.w_p),
        "cross_trajectory": cross_trajectory_term(inputs, weights.w_t),
    }
    if weights.w_e != 0:
        terms["align"] = prompt_align_grad(inputs, weights.w_e)
    id_weight = weights.id_weight_fn(iteration)
    if id_weight != 0:
        terms["id"] = id_reg_grad(x_t, x_hat_t, id_weight)
    return terms


def final_grad(
    inputs: EstimatorInputs,
    x_t: np.ndarray,
    x_hat_t: np.ndarray,
    weights: GuidanceWeights,
    iteration: int,
) -> np.ndarray:
    """
    ssd_decomposed(w_p, w_t) + prompt_align_grad(w_e) + id_reg_grad(w(iter)).

    Las ramas con peso cero se omiten, así que ε(z_t, ∅) solo se exige con w_e != 0.
    """
    terms = ssd_terms(inputs, x_t, x_hat_t, weights, iteration)
    total = terms["cross_prompt"] + terms["cross_trajectory"]
    for name in ("align", "id"):
        if name in terms:
            total = total + terms[name]
    return total
