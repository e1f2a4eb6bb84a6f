"""
hyperlie: clasificación de simetrías de Lie y leyes de conservación de
u_xy = F(u, u_x)
"""
from .classify import generated_conditions, verify_class_table, verify_condition_solutions
from .claws import homotopy_flux, multiplier_residual, verify_claw_catalog
from .detsys import split_system, symmetry_residual
from .jetcalc import FSpec, PointVectorField
from .models import EntryResult, ErrorResponse, Family, Verdict, VerificationReport
from .symkernel import decide_zero, parse, render

__version__ = "1.0.0"
__all__ = [
    "FSpec",
    "PointVectorField",
    "Family",
    "Verdict",
    "EntryResult",
    "VerificationReport",
    "ErrorResponse",
    "parse",
    "render",
    "decide_zero",
    "symmetry_residual",
    "split_system",
    "generated_conditions",
    "verify_class_table",
    "verify_condition_solutions",
    "multiplier_residual",
    "homotopy_flux",
    "verify_claw_catalog",
]
