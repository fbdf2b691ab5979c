from typing import Optional
from pydantic_settings import BaseSettings


class RwoggSettings(BaseSettings):
    """Ajustes de proceso leídos del entorno (prefijo RWOGG_) o de .env.

    Un valor None deja el de config.yaml.
    """

    state_cap: Optional[int] = None
    dense_threshold: Optional[int] = None
    max_phases: Optional[int] = None
    mc_block_size: Optional[int] = None
    jobs: Optional[int] = None
    log_level: Optional[str] = None
    output_dir: Optional[str] = None

    model_config = {"env_file": ".env", "env_prefix": "RWOGG_", "extra": "ignore"}


settings = RwoggSettings()
