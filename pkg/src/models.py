"""
Modelos de datos compartidos: veredictos, familias y reportes
"""
from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

SCHEMA_VERSION = "1.0"


class Verdict(str, Enum):
    """Resultado de una verificación simbólica de tres valores"""
    HOLDS = "holds"
    FAILS = "fails"
    UNDECIDED = "undecided"


class FamilyMode(str, Enum):
    """Cómo se declara la función F de u_xy = F"""
    OPAQUE_U = "opaque-of-u"
    OPAQUE_UX = "opaque-of-ux"
    CLOSED_FORM = "closed-form"


class Family(str, Enum):
    """Variable de clasificación: F(u) o F(u_x)"""
    U = "u"
    UX = "ux"


class EntryResult(BaseModel):
    """Resultado de verificar una entrada de catálogo"""
    label: str
    verdict: Verdict
    residual: str = "0"
    seconds: float = 0.0
    notes: List[str] = Field(default_factory=list)
    details: Dict[str, Any] = Field(default_factory=dict)

    class Config:
        use_enum_values = True

    @property
    def passed(self) -> bool:
        return self.verdict == Verdict.HOLDS


class VerificationReport(BaseModel):
    """Reporte de verificación de una tabla o catálogo"""
    schema_version: str = SCHEMA_VERSION
    table: str
    entries: List[EntryResult] = Field(default_factory=list)

    @property
    def passed(self) -> int:
        return sum(1 for entry in self.entries if entry.passed)

    @property
    def failed(self) -> int:
        return len(self.entries) - self.passed

    @property
    def all_passed(self) -> bool:
        return self.failed == 0

    def entry(self, label: str) -> Optional[EntryResult]:
        return next((e for e in self.entries if e.label == label), None)

    def summary(self) -> Dict[str, Any]:
        data = self.model_dump()
        data.update(passed=self.passed, failed=self.failed, all_passed=self.all_passed)
        return data


class ErrorResponse(BaseModel):
    """Respuesta de error"""
    schema_version: str = SCHEMA_VERSION
    error: str
    reason: str
    details: Dict[str, Any] = Field(default_factory=dict)
