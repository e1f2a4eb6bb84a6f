"""
Jerarquía de excepciones con códigos legibles por máquina
"""
from typing import Any, Dict, Optional, Tuple


class HyperlieError(Exception):
    """Error base del motor. `code` viaja tal cual al JSON de la CLI."""

    code = "hyperlie_error"

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}


class ParseError(HyperlieError):
    """Error de sintaxis en una expresión; `offset` es la posición en bytes."""

    code = "parse_error"

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})", {"offset": offset})
        self.offset = offset


class ArityError(HyperlieError):
    code = "arity_error"


class CircularBindingError(HyperlieError):
    code = "circular_binding"


class OrderBoundExceeded(HyperlieError):
    """Se pidió una coordenada de jet por encima del orden máximo configurado."""

    code = "order_bound_exceeded"


class BasisIncompleteError(HyperlieError):
    """Un coeficiente de la separación todavía contiene coordenadas de jet."""

    code = "basis_incomplete"


class IntegrationIncapableError(HyperlieError):
    code = "integration_incapable"


class ZeroScaleError(HyperlieError):
    code = "zero_scale"


class DivergenceError(HyperlieError):
    """La marcha de Goursat superó la guarda de desbordamiento."""

    code = "divergence"

    def __init__(self, message: str, cell: Tuple[int, int]):
        super().__init__(message, {"cell": list(cell)})
        self.cell = cell


class CatalogError(HyperlieError):
    code = "catalog_error"


class InvalidInputError(HyperlieError):
    code = "invalid_input"
