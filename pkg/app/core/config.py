from pydantic_settings import BaseSettings
from pydantic import field_validator
from dotenv import load_dotenv

from .. import __version__

load_dotenv()


class Settings(BaseSettings):
    # Application
    app_name: str = "Score Distill Toolkit"
    app_version: str = __version__
    environment: str = "development"  # development, staging, production
    debug: bool = False

    # Logging
    log_level: str = "INFO"
    log_dir: str = "logs"
    log_to_file: bool = True

    # Artefactos
    output_root: str = "runs"
    compare_workers: int = 1

    # Schedule VP por defecto (convención Stable Diffusion)
    default_num_steps: int = 1000
    default_beta_min: float = 1e-4
    default_beta_max: float = 0.02

    # Rango de annealing
    default_t_min: int = 20
    default_t_max: int = 980

    # Presupuestos de iteraciones por perfil
    scene_total_iters: int = 3000
    splat_total_iters: int = 1500
    image_total_iters: int = 200

    # Guidance
    default_guidance_scale: float = 7.5

    # Abortar (en lugar de recortar) ante gradientes no finitos
    nonfinite_abort: bool = True

    # Semilla por defecto cuando el config no trae una
    default_seed: int = 0

    @field_validator("compare_workers")
    @classmethod
    def validate_workers(cls, v):
        if v < 1:
            raise ValueError("compare_workers debe ser >= 1")
        return v

    @field_validator("log_level", mode="before")
    @classmethod
    def normalize_log_level(cls, v):
        if isinstance(v, str):
            return v.upper()
        return v

    class Config:
        env_file = ".env"
        case_sensitive = False
        extra = "ignore"  # Ignorar campos extra del .env


settings = Settings()
