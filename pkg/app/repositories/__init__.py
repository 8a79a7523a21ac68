from .config_repo import ConfigRepository
from .artifact_repo import ArtifactRepository
