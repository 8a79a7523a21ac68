"""
Escenarios de juguete sobre el oráculo analítico
"""

# 1-D: el prompt fuente es una masa puntual en -1 y el objetivo en +1.
# Con s = 1 el único atractor del loop SSD es la media condicional +1.
CONVERGENCE_1D = {
    "run_id": "convergence_1d",
    "profile": "image",
    "estimator": "ssd",
    "weights": {"s": 1.0, "w_p": 1.0, "w_t": 1.0, "w_e": 0.0, "id_weight": {"kind": "off"}},
    "sampler": {"kind": "non_increasing_linear", "t_min": 20, "t_max": 980},
    "total_iters": 300,
    "step_size": 0.05,
    "noise_policy": "shared",
    "seeds": {"noise_seed": 0, "sampler_seed": 0},
    "backend": {
        "kind": "analytic_gmm",
        "data_sigma": 0.0,
        "prompts": {
            "source": {"components": [{"mean": [-1.0]}]},
            "target": {"components": [{"mean": [1.0]}]},
        },
    },
    "source_image": [-1.0],
    "source_prompt": "source",
    "target_prompt": "target",
    "metrics": {"names": ["mse"]},
}

# 2-D con dos regiones (píxel A = índice 0, píxel B = índice 1).
# Fuente P=(-1,-1), objetivo Q=(+1,-1): difieren sólo en A. El prompt
# "other" R=(+1,+1) comparte A con el objetivo y atrae a B fuera de -1.
# Con prompts de igual varianza el término cross-prompt no depende de z:
# a s = 7.5 el píxel A sobrepasa +1 y sólo B queda anclado a la fuente.
REGION_TOY_2D = {
    "run_id": "region_toy_2d",
    "profile": "image",
    "estimator": "ssd",
    "weights": {"s": 7.5, "w_p": 7.5, "w_t": 1.0, "w_e": 0.0, "id_weight": {"kind": "off"}},
    "sampler": {"kind": "non_increasing_linear", "t_min": 250, "t_max": 600},
    "total_iters": 200,
    "step_size": 0.05,
    "noise_policy": "shared",
    "seeds": {"noise_seed": 7, "sampler_seed": 7},
    "backend": {
        "kind": "analytic_gmm",
        "data_sigma": 0.0,
        "prompts": {
            "source": {"components": [{"mean": [-1.0, -1.0]}]},
            "target": {"components": [{"mean": [1.0, -1.0]}]},
            "other": {"components": [{"mean": [1.0, 1.0]}]},
        },
    },
    "source_image": [-1.0, -1.0],
    "source_prompt": "source",
    "target_prompt": "target",
    "metrics": {"names": ["mse", "region_mse"], "regions": {"A": [0], "B": [1]}},
}

# Un único prompt gaussiano: la condición nula coincide con él y SDS
# desciende hacia su media para cualquier escala.
SINGLE_GAUSSIAN = {
    "run_id": "single_gaussian",
    "profile": "image",
    "estimator": "sds",
    "weights": {"s": 7.5},
    "sampler": {"kind": "non_increasing_linear", "t_min": 20, "t_max": 980},
    "total_iters": 200,
    "step_size": 0.05,
    "seeds": {"noise_seed": 3, "sampler_seed": 3},
    "backend": {
        "kind": "analytic_gmm",
        "data_sigma": 0.0,
        "prompts": {"mode": {"components": [{"mean": [0.5, -0.25, 0.75, 0.0]}]}},
    },
    "source_image": [[-1.0, 1.0], [0.0, 0.5]],
    "target_prompt": "mode",
    "metrics": {"names": ["mse"]},
}

SCENARIOS = {
    "convergence_1d": CONVERGENCE_1D,
    "region_toy_2d": REGION_TOY_2D,
    "single_gaussian": SINGLE_GAUSSIAN,
}
