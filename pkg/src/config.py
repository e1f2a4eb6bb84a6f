"""
Configuración y logging compartidos

La configuración se lee de config/config.yaml y se puede sobreescribir con
variables de entorno (cargadas desde .env con python-dotenv).
"""
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

import structlog
import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, Field

PACKAGE_DIR = Path(__file__).parent
DEFAULT_CONFIG_PATH = PACKAGE_DIR.parent / "config" / "config.yaml"
DEFAULT_DATA_DIR = PACKAGE_DIR / "data"


class EngineSettings(BaseModel):
    """Parámetros del motor simbólico"""
    max_jet_order: int = Field(default=5, ge=2)
    probe_trials: int = Field(default=20, ge=1)
    probe_redraw_budget: int = Field(default=200, ge=1)
    probe_seed: int = 20240917


class NumgridSettings(BaseModel):
    """Parámetros de la verificación numérica"""
    overflow_guard: float = 1e8
    grids: List[int] = Field(default_factory=lambda: [32, 64, 128])
    min_order: float = 1.8
    exact_tolerance: float = 1e-12


class CatalogSettings(BaseModel):
    data_dir: Path = DEFAULT_DATA_DIR


class LoggingSettings(BaseModel):
    level: str = "INFO"
    format: str = "json"


class Settings(BaseModel):
    """Configuración completa de hyperlie"""
    engine: EngineSettings = Field(default_factory=EngineSettings)
    numgrid: NumgridSettings = Field(default_factory=NumgridSettings)
    catalog: CatalogSettings = Field(default_factory=CatalogSettings)
    logging: LoggingSettings = Field(default_factory=LoggingSettings)


def load_settings(path: Optional[Path] = None) -> Settings:
    """
    Carga la configuración desde YAML y aplica las variables de entorno.

    Args:
        path: Ruta alternativa al YAML (por defecto HYPERLIE_CONFIG o config/config.yaml)

    Returns:
        Settings validado por pydantic
    """
    load_dotenv()
    config_path = Path(path or os.getenv("HYPERLIE_CONFIG", DEFAULT_CONFIG_PATH))

    raw = {}
    if config_path.exists():
        with open(config_path, "r", encoding="utf-8") as f:
            raw = yaml.safe_load(f) or {}

    data = {key: raw.get(key) or {} for key in ("engine", "numgrid", "catalog", "logging")}

    if os.getenv("HYPERLIE_DATA_DIR"):
        data["catalog"]["data_dir"] = os.getenv("HYPERLIE_DATA_DIR")
    if os.getenv("HYPERLIE_LOG_LEVEL"):
        data["logging"]["level"] = os.getenv("HYPERLIE_LOG_LEVEL")
    if os.getenv("HYPERLIE_LOG_FORMAT"):
        data["logging"]["format"] = os.getenv("HYPERLIE_LOG_FORMAT")
    if os.getenv("HYPERLIE_MAX_JET_ORDER"):
        data["engine"]["max_jet_order"] = os.getenv("HYPERLIE_MAX_JET_ORDER")

    # data_dir vacío en el YAML significa "el directorio del paquete"
    if not data["catalog"].get("data_dir"):
        data["catalog"].pop("data_dir", None)

    return Settings(**data)


def _stderr_logger(*args) -> structlog.PrintLogger:
    # sys.stderr se resuelve en cada uso: puede reemplazarse tras configurar
    return structlog.PrintLogger(file=sys.stderr)


def configure_logging(settings: Optional[Settings] = None) -> None:
    """Configura structlog; los logs van a stderr para no mezclarse con los reportes."""
    settings = settings or get_settings()
    level = getattr(logging, settings.logging.level.upper(), logging.INFO)

    renderer = (
        structlog.processors.JSONRenderer()
        if settings.logging.format == "json"
        else structlog.dev.ConsoleRenderer()
    )
    structlog.configure(
        processors=[
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            renderer,
        ],
        wrapper_class=structlog.make_filtering_bound_logger(level),
        logger_factory=_stderr_logger,
        cache_logger_on_first_use=False,
    )


def get_logger(name: str):
    return structlog.get_logger(name)


# Singleton para uso global
_settings_instance: Optional[Settings] = None


def get_settings() -> Settings:
    """Retorna la instancia singleton de la configuración"""
    global _settings_instance
    if _settings_instance is None:
        _settings_instance = load_settings()
    return _settings_instance


def reset_settings() -> None:
    global _settings_instance
    _settings_instance = None
