import copy
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from loguru import logger

from src.errors import ConfigError
from src.settings import RwoggSettings

DEFAULT_CONFIG_FILE = Path(__file__).parent / "config.yaml"

# variable de entorno -> (sección, clave) en config.yaml
_ENV_OVERRIDES = {
    "state_cap": ("engine", "state_cap"),
    "dense_threshold": ("engine", "dense_threshold"),
    "max_phases": ("engine", "max_phases"),
    "mc_block_size": ("engine", "mc_block_size"),
    "jobs": ("engine", "jobs"),
    "log_level": ("logging", "level"),
    "output_dir": ("output", "directory"),
}


class ConfigLoader:
    def __init__(self, settings: Optional[RwoggSettings] = None):
        self.settings = settings

    def __call__(self, args_dict: Dict) -> tuple[Dict, Dict]:
        """Carga la configuración base y la del usuario.

        Devuelve (config, user_config): config es config.yaml con las variables
        de entorno aplicadas; user_config son las secciones por subcomando del
        archivo --config (vacío si no se pasó).
        """
        config_file = args_dict.get("config_file") or DEFAULT_CONFIG_FILE
        user_file = args_dict.get("user_config_file")

        config = self._load_config(config_file)
        self._apply_settings(config)
        user_config = self._load_user_config(user_file) if user_file else {}
        return config, user_config

    def _load_config(self, config_file) -> Dict:
        """Carga configuración desde archivo YAML"""
        try:
            with open(config_file, "r", encoding="utf-8") as file:
                loaded = yaml.safe_load(file) or {}
        except FileNotFoundError:
            logger.warning(
                f"Archivo de configuración {config_file} no encontrado, usando valores por defecto"
            )
            return self._get_default_config()
        except yaml.YAMLError as e:
            logger.error(f"Error leyendo configuración: {e}")
            return self._get_default_config()
        return _deep_merge(self._get_default_config(), loaded)

    def _load_user_config(self, user_file) -> Dict:
        """El archivo del usuario sí es obligatorio: un error aquí es de configuración."""
        path = Path(user_file)
        if not path.exists():
            raise ConfigError(f"archivo de configuración no encontrado: {path}")
        try:
            with open(path, "r", encoding="utf-8") as file:
                loaded = yaml.safe_load(file) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"YAML inválido en {path}: {e}") from e
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path} debe contener secciones por subcomando")
        return loaded

    def _apply_settings(self, config: Dict) -> None:
        settings = self.settings if self.settings is not None else RwoggSettings()
        for field, (section, key) in _ENV_OVERRIDES.items():
            value = getattr(settings, field)
            if value is not None:
                config.setdefault(section, {})[key] = value

    def _get_default_config(self) -> Dict:
        """Configuración por defecto"""
        return {
            "engine": {
                "state_cap": 2**22,
                "dense_threshold": 2**16,
                "max_phases": 100_000,
                "mc_block_size": 4096,
                "jobs": 1,
            },
            "tolerances": {
                "stochastic": 1e-12,
                "dominance": 1e-12,
                "stationary": 1e-12,
                "max_iterations": 1_000_000,
            },
            "mixing": {
                "max_steps": 200_000,
                "constants": {
                    "path": {"value": 1.0, "calibrated": False},
                    "box": {"value": 2.0, "calibrated": True},
                    "cube": {"value": 1.0, "calibrated": True},
                },
            },
            "output": {
                "directory": "results",
                "series_filename": "series.csv",
                "meta_filename": "meta.json",
                "diagnostic_filename": "diagnostic.csv",
                "stationary_filename": "stationary.csv",
                "mixing_filename": "mixing.csv",
                "verdict_filename": "verdict.json",
                "dominance_filename": "dominance.json",
                "trajectory_filename": "failing_trajectory.csv",
                "sweep_filename": "sweep.csv",
                "hitting_filename": "hitting.csv",
            },
            "logging": {"level": "INFO"},
        }


def _deep_merge(base: Dict, override: Dict) -> Dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def mixing_constant(config: Dict, name: str) -> tuple[float, bool]:
    """(valor, calibrado) de la constante de cota de mezcla `name`."""
    entry: Any = config.get("mixing", {}).get("constants", {}).get(name, {"value": 1.0})
    if isinstance(entry, (int, float)):
        return float(entry), False
    return float(entry.get("value", 1.0)), bool(entry.get("calibrated", False))
