"""
Catálogos incorporados: tablas de clasificación, condiciones impresas,
leyes de conservación, simetrías de la ecuación en T y problemas de Goursat
"""
import json
from pathlib import Path
from typing import Any, Dict, List, Optional

from .config import get_logger, get_settings
from .errors import CatalogError

logger = get_logger(__name__)

CLASS_TABLES_FILE = "class_tables.json"
CONDITIONS_FILE = "conditions.json"
CLAWS_FILE = "claws.json"
T_EQUATION_FILE = "t_equation.json"
INTEGRABLE_FILE = "integrable.json"
PROBLEMS_DIR = "problems"


class Catalog:
    """
    Acceso de sólo lectura a los JSON del directorio de datos.

    Args:
        data_dir: Directorio de datos (por defecto el de la configuración)
    """

    def __init__(self, data_dir: Optional[Path] = None):
        self.data_dir = Path(data_dir or get_settings().catalog.data_dir)
        self._cache: Dict[str, Any] = {}

    def _load(self, name: str) -> Any:
        if name not in self._cache:
            path = self.data_dir / name
            if not path.exists():
                raise CatalogError(f"No existe el catálogo {path}", {"path": str(path)})
            try:
                with open(path, "r", encoding="utf-8") as f:
                    self._cache[name] = json.load(f)
            except json.JSONDecodeError as e:
                raise CatalogError(f"JSON inválido en {path}: {e}", {"path": str(path)})
            logger.info("catalog_loaded", file=name)
        return self._cache[name]

    def table_names(self) -> List[str]:
        return list(self._load(CLASS_TABLES_FILE)["tables"])

    def class_table(self, name: str) -> Dict[str, Any]:
        tables = self._load(CLASS_TABLES_FILE)["tables"]
        if name not in tables:
            raise CatalogError(f"Tabla desconocida: {name}", {"available": sorted(tables)})
        return tables[name]

    def printed_conditions(self) -> List[Dict[str, Any]]:
        return self._load(CONDITIONS_FILE)["printed"]

    def condition_header(self, family: str) -> str:
        """Cabecera de declaraciones con la que se leen las condiciones de la familia"""
        return self._load(CONDITIONS_FILE)["declarations"].get(family, "")

    def condition_solutions(self) -> List[Dict[str, Any]]:
        return self._load(CONDITIONS_FILE)["solutions"]

    def claws(self) -> List[Dict[str, Any]]:
        return self._load(CLAWS_FILE)["laws"]

    def t_functions(self) -> List[Dict[str, Any]]:
        return self._load(T_EQUATION_FILE)["solutions"]

    def t_symmetries(self) -> List[Dict[str, Any]]:
        return self._load(T_EQUATION_FILE)["symmetries"]

    def integrable(self) -> List[Dict[str, Any]]:
        return self._load(INTEGRABLE_FILE)["functions"]

    def problem(self, name: str) -> Dict[str, Any]:
        return self._load(f"{PROBLEMS_DIR}/{name}.json")


# Singleton para uso global
_catalog_instance: Optional[Catalog] = None


def get_catalog() -> Catalog:
    """Retorna la instancia singleton del catálogo"""
    global _catalog_instance
    if _catalog_instance is None:
        _catalog_instance = Catalog()
    return _catalog_instance


def reset_catalog() -> None:
    global _catalog_instance
    _catalog_instance = None
