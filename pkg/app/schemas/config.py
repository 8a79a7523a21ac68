import math
from enum import Enum
from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..core.config import settings
from ..models.estimator import Estimator
from ..models.schedule import SamplerKind
from .guidance import GuidanceWeights


class Profile(str, Enum):
    SCENE = "scene"   # NeRF-style: presupuesto largo, sin realce
    SPLAT = "splat"   # Gaussian splatting: presupuesto corto, sin realce
    IMAGE = "image"   # edición 2D: presupuesto corto, realce activo


PROFILE_DEFAULTS: Dict[Profile, Dict[str, Any]] = {
    Profile.SCENE: {"total_iters": settings.scene_total_iters, "w_e": 0.0},
    Profile.SPLAT: {"total_iters": settings.splat_total_iters, "w_e": 0.0},
    Profile.IMAGE: {"total_iters": settings.image_total_iters, "w_e": 1.5},
}


class NoisePolicy(str, Enum):
    SHARED = "shared"
    INDEPENDENT = "independent"


class IdAnchor(str, Enum):
    NOISY = "noisy"   # x̂_t, mismo ruido que x_t
    CLEAN = "clean"   # x̂₀, ancla sin ruido


class SdsWeighting(str, Enum):
    UNIT = "unit"
    SIGMA_SQUARED = "sigma_squared"  # w(t) = 1 - ᾱ_t


class OptimizerKind(str, Enum):
    SGD = "sgd"
    MOMENTUM = "momentum"


class GeneratorKind(str, Enum):
    IDENTITY = "identity"
    LINEAR_BASIS = "linear_basis"


class BackendKind(str, Enum):
    ANALYTIC_GMM = "analytic_gmm"
    PLUGIN = "plugin"


class ScheduleConfig(BaseModel):
    num_steps: int = Field(default=settings.default_num_steps, ge=2)
    beta_min: float = Field(default=settings.default_beta_min, gt=0, lt=1)
    beta_max: float = Field(default=settings.default_beta_max, gt=0, lt=1)

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def check_order(self):
        if self.beta_min >= self.beta_max:
            raise ValueError(f"beta_min ({self.beta_min}) debe ser menor que beta_max ({self.beta_max})")
        return self


class SamplerConfig(BaseModel):
    kind: SamplerKind = SamplerKind.NON_INCREASING_LINEAR
    t_min: int = Field(default=settings.default_t_min, ge=1)
    t_max: int = Field(default=settings.default_t_max, ge=1)

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def check_range(self):
        if self.t_min > self.t_max:
            raise ValueError(f"t_min ({self.t_min}) debe ser <= t_max ({self.t_max})")
        return self


class OptimizerConfig(BaseModel):
    kind: OptimizerKind = OptimizerKind.SGD
    momentum: float = Field(default=0.9, ge=0, lt=1)

    model_config = ConfigDict(extra="forbid")


class GeneratorConfig(BaseModel):
    kind: GeneratorKind = GeneratorKind.IDENTITY
    # Solo linear_basis: matriz (num_pixels, num_params)
    basis: Optional[List[List[float]]] = None
    # θ inicial; por defecto la imagen fuente (identity) o la proyección de la fuente (linear_basis)
    init_theta: Optional[List[float]] = None

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def check_basis(self):
        if self.kind == GeneratorKind.LINEAR_BASIS and not self.basis:
            raise ValueError("linear_basis requiere 'basis'")
        if self.basis is not None:
            widths = {len(row) for row in self.basis}
            if len(widths) != 1:
                raise ValueError("Todas las filas de 'basis' deben tener el mismo largo")
        return self


class ComponentSpec(BaseModel):
    mean: List[float] = Field(..., min_length=1)
    weight: float = Field(default=1.0, gt=0)

    model_config = ConfigDict(extra="forbid")


class PromptSpec(BaseModel):
    """Sub-mezcla de componentes que representa un prompt en el oráculo"""
    components: List[ComponentSpec] = Field(..., min_length=1)
    prior: float = Field(default=1.0, gt=0)

    model_config = ConfigDict(extra="forbid")


class BackendSpec(BaseModel):
    kind: BackendKind = BackendKind.ANALYTIC_GMM
    data_sigma: float = Field(default=0.0, ge=0)
    prompts: Dict[str, PromptSpec] = Field(default_factory=dict)
    # Radio de la restricción por imagen de predict2
    image_radius: float = Field(default=0.5, ge=0)
    # Solo plugin: "paquete.modulo:factory"
    target: Optional[str] = None
    options: Dict[str, Any] = Field(default_factory=dict)

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def check_kind(self):
        if self.kind == BackendKind.ANALYTIC_GMM:
            if not self.prompts:
                raise ValueError("analytic_gmm requiere al menos un prompt")
            dims = {len(c.mean) for p in self.prompts.values() for c in p.components}
            if len(dims) != 1:
                raise ValueError(f"Las medias de componentes no comparten dimensión: {sorted(dims)}")
        if self.kind == BackendKind.PLUGIN and (not self.target or ":" not in self.target):
            raise ValueError("plugin requiere 'target' con formato 'modulo:factory'")
        return self


class SeedsConfig(BaseModel):
    noise_seed: int = Field(default=settings.default_seed, ge=0)
    sampler_seed: int = Field(default=settings.default_seed, ge=0)

    model_config = ConfigDict(extra="forbid")


MetricName = Literal["mse", "region_mse", "clip_similarity", "directional_similarity"]


class MetricsConfig(BaseModel):
    names: List[MetricName] = Field(default_factory=lambda: ["mse", "region_mse"])
    # Regiones como índices planos de píxeles, p.ej. {"A": [0], "B": [1]}
    regions: Dict[str, List[int]] = Field(default_factory=dict)
    embedder: Optional[Literal["prompt_mean"]] = None
    # Registrar métricas en cada iteración además de al final
    per_iteration: bool = False

    model_config = ConfigDict(extra="forbid")


class EditConfig(BaseModel):
    """Documento JSON de una corrida de edición"""
    run_id: str = Field(..., min_length=1, max_length=100, pattern=r"^[A-Za-z0-9_.=+-]+$")
    profile: Profile = Profile.IMAGE
    estimator: Estimator = Estimator.SSD
    weights: GuidanceWeights = Field(default_factory=GuidanceWeights)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    # Sampler por estimador (p.ej. DDS con timesteps uniformes)
    sampler_overrides: Dict[Estimator, SamplerConfig] = Field(default_factory=dict)
    total_iters: int = Field(default=settings.image_total_iters, ge=0)
    step_size: float = Field(default=0.05, gt=0)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    noise_policy: NoisePolicy = NoisePolicy.SHARED
    id_anchor: IdAnchor = IdAnchor.NOISY
    sds_weighting: SdsWeighting = SdsWeighting.UNIT
    seeds: SeedsConfig = Field(default_factory=SeedsConfig)
    backend: BackendSpec
    source_image: List[Any] = Field(..., min_length=1)
    source_prompt: Optional[str] = None  # None = ∅
    target_prompt: str
    generator: GeneratorConfig = Field(default_factory=GeneratorConfig)
    metrics: MetricsConfig = Field(default_factory=MetricsConfig)

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="before")
    @classmethod
    def apply_profile_defaults(cls, data):
        if not isinstance(data, dict):
            return data
        data = dict(data)
        profile = Profile(data.get("profile", Profile.IMAGE))
        defaults = PROFILE_DEFAULTS[profile]
        data.setdefault("total_iters", defaults["total_iters"])
        weights = data.get("weights")
        if weights is None:
            data["weights"] = {"w_e": defaults["w_e"]}
        elif isinstance(weights, dict) and "w_e" not in weights:
            data["weights"] = {**weights, "w_e": defaults["w_e"]}
        return data

    @field_validator("source_image")
    @classmethod
    def check_source_image(cls, v):
        try:
            arr = np.asarray(v, dtype=np.float64)
        except (TypeError, ValueError) as e:
            raise ValueError(f"source_image no es un arreglo rectangular: {e}")
        if arr.size == 0 or not np.all(np.isfinite(arr)):
            raise ValueError("source_image debe ser no vacío y finito")
        return v

    @model_validator(mode="after")
    def check_consistency(self):
        size = self.source_array().size
        if self.backend.kind == BackendKind.ANALYTIC_GMM:
            dim = len(next(iter(self.backend.prompts.values())).components[0].mean)
            if dim != size:
                raise ValueError(f"La imagen fuente tiene {size} píxeles pero las medias tienen dimensión {dim}")
            for name in (self.source_prompt, self.target_prompt):
                if name is not None and name not in self.backend.prompts:
                    raise ValueError(f"Prompt '{name}' no está en la tabla del backend")
        for region, indices in self.metrics.regions.items():
            if any(i < 0 or i >= size for i in indices):
                raise ValueError(f"La región '{region}' tiene índices fuera de [0, {size})")
        if self.generator.kind == GeneratorKind.LINEAR_BASIS:
            basis = np.asarray(self.generator.basis, dtype=np.float64)
            if basis.shape[0] != size:
                raise ValueError(f"'basis' debe tener {size} filas, tiene {basis.shape[0]}")
        if self.generator.init_theta is not None and self.generator.kind == GeneratorKind.IDENTITY:
            if len(self.generator.init_theta) != size:
                raise ValueError("init_theta debe tener tantos valores como píxeles la imagen")
        if self.generator.init_theta is not None and self.generator.kind == GeneratorKind.LINEAR_BASIS:
            if len(self.generator.init_theta) != len(self.generator.basis[0]):
                raise ValueError("init_theta debe tener tantos valores como columnas 'basis'")
        if not math.isfinite(self.step_size):
            raise ValueError("step_size debe ser finito")
        for sampler in [self.sampler, *self.sampler_overrides.values()]:
            if sampler.t_max > self.schedule.num_steps:
                raise ValueError(f"t_max ({sampler.t_max}) excede num_steps ({self.schedule.num_steps})")
        needs_embedder = {"clip_similarity", "directional_similarity"} & set(self.metrics.names)
        if needs_embedder and self.metrics.embedder is None:
            raise ValueError(f"Las métricas {sorted(needs_embedder)} requieren 'embedder'")
        return self

    def source_array(self) -> np.ndarray:
        return np.asarray(self.source_image, dtype=np.float64)

    def effective_sampler(self) -> SamplerConfig:
        return self.sampler_overrides.get(self.estimator, self.sampler)

    def effective_weights(self) -> GuidanceWeights:
        return self.weights.with_budget(self.total_iters)


class ExperimentSpec(BaseModel):
    """Lote de corridas de compare"""
    configs: List[EditConfig] = Field(..., min_length=2)
    output_dir: str
    sweep_keys: List[str] = Field(default_factory=list)
    sweep_values: List[Dict[str, Any]] = Field(default_factory=list)
    plot: bool = True

    @model_validator(mode="after")
    def check_unique_run_ids(self):
        run_ids = [c.run_id for c in self.configs]
        duplicated = sorted({r for r in run_ids if run_ids.count(r) > 1})
        if duplicated:
            raise ValueError(f"run_id duplicados: {duplicated}")
        if self.sweep_values and len(self.sweep_values) != len(self.configs):
            raise ValueError("sweep_values debe tener una entrada por config")
        return self
