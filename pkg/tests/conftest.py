"""
Fixtures compartidas: configuración y catálogo limpios en cada test
"""
import json

import pytest
import structlog

from src.catalog import reset_catalog
from src.config import reset_settings

ENV_VARIABLES = (
    "HYPERLIE_CONFIG",
    "HYPERLIE_DATA_DIR",
    "HYPERLIE_LOG_LEVEL",
    "HYPERLIE_LOG_FORMAT",
    "HYPERLIE_MAX_JET_ORDER",
)


@pytest.fixture(autouse=True)
def fresh_singletons(monkeypatch):
    """Cada test arranca sin configuración ni catálogo cacheados."""
    for name in ENV_VARIABLES:
        monkeypatch.delenv(name, raising=False)
    reset_settings()
    reset_catalog()
    structlog.reset_defaults()
    yield
    reset_settings()
    reset_catalog()
    structlog.reset_defaults()


@pytest.fixture
def data_dir(tmp_path):
    """Directorio de datos mínimo para probar el catálogo aislado."""
    (tmp_path / "problems").mkdir()
    (tmp_path / "conditions.json").write_text(json.dumps({
        "declarations": {"u": "func F(u);"},
        "printed": [{"family": "u", "label": "u-m2-f", "m": 2, "ode": "F_u"}],
        "solutions": [],
    }), encoding="utf-8")
    (tmp_path / "problems" / "flat.json").write_text(json.dumps({
        "name": "flat",
        "F": "0",
        "f": "x",
        "g": "1 + y",
        "x_range": [1, 2],
        "y_range": [0, 1],
        "exact": "x + y",
    }), encoding="utf-8")
    return tmp_path
