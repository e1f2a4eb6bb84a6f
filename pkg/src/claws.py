"""
Leyes de conservación de u_xy = F por el método directo

Un multiplicador Q cumple E_u(Q·Δ) = 0; el flujo Θ = (Φ, Ψ) cumple
D_xΦ + D_yΨ = Q·Δ como identidad en el espacio de jets. El flujo se obtiene
invirtiendo la divergencia por orden de jet. También se cubre la familia de
multiplicadores de u_xy = u_x² y la ecuación lineal en T(z, y).
"""
import time
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import sympy
from pydantic import BaseModel, ConfigDict, Field, field_validator
from sympy import Add, Symbol

from .catalog import get_catalog
from .config import get_logger
from .detsys import split_coefficients
from .errors import IntegrationIncapableError, InvalidInputError
from .jetcalc import FSpec, JetSpace, PointVectorField, default_space
from .models import EntryResult, Verdict, VerificationReport
from .symkernel import (
    U,
    U_X,
    Y,
    Z,
    Expr,
    FunctionSymbol,
    antiderivative,
    canonicalize,
    decide_zero,
    declarations_header,
    parse,
    parse_with_declarations,
    proportionality_factor,
    render,
)

logger = get_logger(__name__)

# límite de pasos de la inversión de la divergencia
MAX_INVERSION_STEPS = 60

T_SPACE_AXES = ("z", "y")
T_SYMBOL = Symbol("T")


def _as_expr(value) -> Expr:
    if isinstance(value, str):
        return parse(value)
    return canonicalize(value)


class Multiplier(BaseModel):
    """Multiplicador Q de orden ≤ 1"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    q: Expr

    @field_validator("q", mode="before")
    @classmethod
    def _canonical(cls, value):
        return _as_expr(value)

    def order(self, space: Optional[JetSpace] = None) -> int:
        return (space or default_space()).order(self.q)

    def to_json(self) -> Dict[str, str]:
        return {"Q": render(self.q)}


class FluxVector(BaseModel):
    """Vector de flujo Θ = (Φ, Ψ)"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    phi: Expr = sympy.S.Zero
    psi: Expr = sympy.S.Zero

    @field_validator("phi", "psi", mode="before")
    @classmethod
    def _canonical(cls, value):
        return _as_expr(value)

    def __sub__(self, other: "FluxVector") -> "FluxVector":
        return FluxVector(phi=self.phi - other.phi, psi=self.psi - other.psi)

    def __add__(self, other: "FluxVector") -> "FluxVector":
        return FluxVector(phi=self.phi + other.phi, psi=self.psi + other.psi)

    def divergence(self, space: Optional[JetSpace] = None) -> Expr:
        space = space or default_space()
        return canonicalize(space.total_derivative(self.phi, 0) + space.total_derivative(self.psi, 1))

    def to_json(self) -> Dict[str, str]:
        return {"phi": render(self.phi), "psi": render(self.psi)}


class TFunction(BaseModel):
    """T(z, y) de la familia de multiplicadores de u_xy = u_x², con z = u_x"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    t: Expr

    @field_validator("t", mode="before")
    @classmethod
    def _canonical(cls, value):
        value = _as_expr(value)
        stray = {s.name for s in value.free_symbols} & {"x", "u", "u_x", "u_y"}
        if stray:
            raise ValueError(f"T sólo depende de z, y y parámetros; aparece {sorted(stray)}")
        return value

    def as_multiplier(self) -> Expr:
        """T evaluada en z = u_x."""
        return canonicalize(self.t.xreplace({Z: U_X}))


class ConservationLaw(BaseModel):
    """Entrada del catálogo: F, multiplicador, flujo corregido y flujo impreso"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    name: str
    f: FSpec
    multiplier: Multiplier
    flux: FluxVector
    printed: Optional[FluxVector] = None
    notes: List[str] = Field(default_factory=list)

    @classmethod
    def from_record(cls, record: dict) -> "ConservationLaw":
        header = record.get("declarations", "")

        def read(text: str) -> Expr:
            return parse(f"{header} {text}")

        printed = record.get("printed")
        return cls(
            name=record["name"],
            f=FSpec.from_expr(read(record["F"])),
            multiplier=Multiplier(q=read(record["Q"])),
            flux=FluxVector(phi=read(record["phi"]), psi=read(record["psi"])),
            printed=FluxVector(phi=read(printed["phi"]), psi=read(printed["psi"])) if printed else None,
            notes=record.get("notes", []),
        )


# ---------------------------------------------------------------------------
# Multiplicadores
# ---------------------------------------------------------------------------

def multiplier_residual(q: Multiplier, f: FSpec, space: Optional[JetSpace] = None) -> Expr:
    """E_u(Q·(u_xy − F)); se anula si y sólo si Q es multiplicador."""
    space = space or default_space()
    return space.euler(q.q * f.equation())


ANSATZ_ARGS = {
    "ux": ("x", "y", "u", "u_x"),
    "uy": ("x", "y", "u", "u_y"),
}


def multiplier_ansatz(kind: str = "ux") -> FunctionSymbol:
    """Q(x, y, u, u_x) o Q(x, y, u, u_y)."""
    if kind not in ANSATZ_ARGS:
        raise InvalidInputError(f"Ansatz desconocido: {kind!r} (use 'ux' o 'uy')")
    return FunctionSymbol("Q", ANSATZ_ARGS[kind])


def multiplier_determining_system(f: FSpec, ansatz: str = "ux") -> List[Expr]:
    """
    Ecuaciones determinantes de Q: E_u(Q·Δ) separado por monomios de los jets
    que no son argumentos de Q.

    Args:
        f: Declaración de F
        ansatz: 'ux' para Q(x, y, u, u_x), 'uy' para Q(x, y, u, u_y)

    Returns:
        Lista de ecuaciones (cada una igualada a 0), ordenadas por monomio
    """
    q = multiplier_ansatz(ansatz)
    space = default_space()
    residual = multiplier_residual(Multiplier(q=q.at_declared()), f, space)
    arguments = set(q.arg_symbols)
    basis = sorted(
        (s for s in space.jets_in(residual) if s not in arguments),
        key=lambda s: (space.index_of(s)[0] + space.index_of(s)[1], s.name),
    )
    coefficients = split_coefficients(residual, basis)
    equations: List[Expr] = []
    for _, coefficient in sorted(coefficients.items(), key=lambda item: (sum(item[0]), item[0])):
        if not any(proportionality_factor(coefficient, e) is not None for e in equations):
            equations.append(coefficient)
    logger.info("multiplier_system", ansatz=ansatz, equations=len(equations))
    return equations


# ---------------------------------------------------------------------------
# Flujos
# ---------------------------------------------------------------------------

def flux_residual(theta: FluxVector, q: Multiplier, f: FSpec, space: Optional[JetSpace] = None) -> Expr:
    """D_xΦ + D_yΨ − Q·(u_xy − F), sin usar la ecuación."""
    space = space or default_space()
    return canonicalize(theta.divergence(space) - q.q * f.equation())


def is_trivial_flux(theta: FluxVector, space: Optional[JetSpace] = None) -> bool:
    """La divergencia se anula para toda u suave."""
    return decide_zero(theta.divergence(space)) is Verdict.HOLDS


def _pick_jet(space: JetSpace, e: Expr) -> Optional[Tuple[Symbol, Tuple[int, int]]]:
    jets = {s: idx for s, idx in space.jets_in(e).items() if idx != (0, 0)}
    if not jets:
        return None
    # los jets puros (u_xx, u_yy) antes que los mixtos del mismo orden
    return max(
        jets.items(),
        key=lambda item: (sum(item[1]), min(item[1]) == 0, item[1], item[0].name),
    )


def _integration_axis(space: JetSpace, index: Tuple[int, int], coefficient: Expr) -> int:
    i, j = index
    if i == 0:
        return 1
    if j == 0:
        return 0
    lower_y = space.jet(i, j - 1)
    lower_x = space.jet(i - 1, j)
    # se integra en el jet inferior del que depende el coeficiente
    if coefficient.has(lower_y) and not coefficient.has(lower_x):
        return 1
    if coefficient.has(lower_x) and not coefficient.has(lower_y):
        return 0
    return 1


def invert_divergence(e: Expr, space: Optional[JetSpace] = None) -> FluxVector:
    """
    Θ con D_xΦ + D_yΨ = e, integrando por orden de jet.

    En cada paso se toma el jet más alto s = u_J presente, con coeficiente
    A = ∂e/∂s; se elige un eje k con J = K + k y G = ∫A du_K se suma a la
    componente k del flujo, restando D_k G de e. Cuando no quedan jets, el
    resto sin u se integra en x.

    Raises:
        IntegrationIncapableError: si e no es una divergencia alcanzable con
            las reglas de integración del núcleo
    """
    space = space or default_space()
    remainder = canonicalize(e)
    components = [sympy.S.Zero, sympy.S.Zero]

    for _ in range(MAX_INVERSION_STEPS):
        if remainder == 0:
            break
        picked = _pick_jet(space, remainder)
        if picked is None:
            if remainder.has(U) and decide_zero(remainder) is not Verdict.HOLDS:
                raise IntegrationIncapableError(
                    f"El resto {render(remainder)} no es una divergencia", {"remainder": render(remainder)}
                )
            if remainder.has(U):
                break
            components[0] += antiderivative(remainder, space.variables[0])
            break

        symbol, index = picked
        coefficient = canonicalize(sympy.diff(remainder, symbol))
        if coefficient.has(symbol):
            raise IntegrationIncapableError(
                f"El resto no es lineal en {symbol.name}", {"remainder": render(remainder)}
            )
        axis = _integration_axis(space, index, coefficient)
        lower = space.jet(index[0] - 1, index[1]) if axis == 0 else space.jet(index[0], index[1] - 1)
        primitive = antiderivative(coefficient, lower)
        components[axis] += primitive
        remainder = canonicalize(remainder - space.total_derivative(primitive, axis))
    else:
        raise IntegrationIncapableError(
            "La inversión de la divergencia no terminó", {"remainder": render(remainder)}
        )

    return FluxVector(phi=components[0], psi=components[1])


def homotopy_flux(q: Multiplier, f: FSpec, pure: bool = False) -> FluxVector:
    """
    Flujo de la ley de conservación con multiplicador Q.

    Args:
        q: Multiplicador con multiplier_residual(q, f) = 0
        f: Declaración de F
        pure: Restar la mayor sub-suma trivial del resultado

    Returns:
        FluxVector con flux_residual(Θ, q, f) = 0
    """
    theta = invert_divergence(q.q * f.equation())
    if pure:
        theta = pure_flux(theta)
    logger.info("flux_derived", Q=render(q.q), phi=render(theta.phi), psi=render(theta.psi))
    return theta


def pure_flux(theta: FluxVector, space: Optional[JetSpace] = None) -> FluxVector:
    """
    Quita el mayor subconjunto de términos de Φ y Ψ cuya divergencia se
    anula idénticamente.
    """
    space = space or default_space()
    terms = [(0, t) for t in Add.make_args(theta.phi) if t != 0]
    terms += [(1, t) for t in Add.make_args(theta.psi) if t != 0]
    divergences = [space.total_derivative(t, axis) for axis, t in terms]

    for size in range(len(terms), 0, -1):
        for chosen in combinations(range(len(terms)), size):
            if canonicalize(Add(*[divergences[k] for k in chosen])) != 0:
                continue
            kept = [terms[k] for k in range(len(terms)) if k not in chosen]
            return FluxVector(
                phi=Add(*[t for axis, t in kept if axis == 0]),
                psi=Add(*[t for axis, t in kept if axis == 1]),
            )
    return theta


# ---------------------------------------------------------------------------
# Ecuación en T(z, y)
# ---------------------------------------------------------------------------

def t_space() -> JetSpace:
    return JetSpace(T_SPACE_AXES, "T")


def t_equation_operator(t: Expr) -> Expr:
    """2T + 4zT_z + z²T_zz + T_zy."""
    return canonicalize(
        2 * t + 4 * Z * sympy.diff(t, Z) + Z**2 * sympy.diff(t, Z, 2) + sympy.diff(t, Z, Y)
    )


def t_equation_residual(t: TFunction) -> Expr:
    return t_equation_operator(t.t)


def verify_t_symmetry(v: PointVectorField) -> bool:
    """
    pr v de la ecuación en T se anula sobre sus soluciones.

    v se lee en las coordenadas (z, y, T): xi es la componente en z, eta en y
    y phi en T.
    """
    space = t_space()
    t_zy = space.jet(1, 1)
    delta = (
        t_zy
        + 2 * T_SYMBOL
        + 4 * Z * space.jet(1, 0)
        + Z**2 * space.jet(2, 0)
    )
    rhs = canonicalize(t_zy - delta)
    prolonged = space.prolong2(v)
    residual = space.reduce(space.apply_prolonged(prolonged, delta), rhs)
    return decide_zero(residual) is Verdict.HOLDS


# ---------------------------------------------------------------------------
# Catálogos
# ---------------------------------------------------------------------------

def _verify_law(law: ConservationLaw) -> EntryResult:
    start = time.perf_counter()
    multiplier = multiplier_residual(law.multiplier, law.f)
    multiplier_verdict = decide_zero(multiplier)
    residual = flux_residual(law.flux, law.multiplier, law.f)
    flux_verdict = decide_zero(residual)

    if multiplier_verdict is Verdict.HOLDS and flux_verdict is Verdict.HOLDS:
        verdict, shown = Verdict.HOLDS, "0"
    elif Verdict.FAILS in (multiplier_verdict, flux_verdict):
        verdict = Verdict.FAILS
        shown = render(residual if flux_verdict is Verdict.FAILS else multiplier)
    else:
        verdict, shown = Verdict.UNDECIDED, render(residual)

    details = {
        "F": render(law.f.expr),
        "multiplier_verdict": multiplier_verdict.value,
        "flux_verdict": flux_verdict.value,
        **law.multiplier.to_json(),
        **law.flux.to_json(),
    }
    exprs = [law.f.expr, law.multiplier.q, law.flux.phi, law.flux.psi, multiplier, residual]
    if law.printed is not None:
        printed_residual = flux_residual(law.printed, law.multiplier, law.f)
        details["printed_verdict"] = decide_zero(printed_residual).value
        details["printed_residual"] = render(printed_residual)
        exprs.append(printed_residual)
    details["declarations"] = declarations_header(*exprs)

    seconds = time.perf_counter() - start
    logger.info("claw_verified", name=law.name, verdict=verdict.value, seconds=round(seconds, 3))
    return EntryResult(
        label=law.name, verdict=verdict, residual=shown, seconds=seconds, notes=law.notes, details=details
    )


def load_claw_catalog() -> List[ConservationLaw]:
    return [ConservationLaw.from_record(record) for record in get_catalog().claws()]


def verify_claw_catalog(names: Optional[Sequence[str]] = None) -> VerificationReport:
    """Multiplicador y flujo de cada ley del catálogo (o sólo las de `names`)."""
    laws = load_claw_catalog()
    if names is not None:
        laws = [law for law in laws if law.name in set(names)]
    report = VerificationReport(table="claws", entries=[_verify_law(law) for law in laws])
    logger.info("claws_verified", passed=report.passed, failed=report.failed)
    return report


def load_t_functions() -> Dict[str, TFunction]:
    return {record["name"]: TFunction(t=record["T"]) for record in get_catalog().t_functions()}


def _t_field(components: dict) -> PointVectorField:
    return PointVectorField(xi=components["z"], eta=components["y"], phi=components["T"])


def verify_t_symmetry_catalog() -> VerificationReport:
    """
    Cada campo del catálogo de la ecuación en T, en su forma verificada y,
    si existe, en la impresa (como detalle).
    """
    entries = []
    for record in get_catalog().t_symmetries():
        start = time.perf_counter()
        holds = verify_t_symmetry(_t_field(record["field"]))
        details = {"field": record["field"]}
        if "printed" in record:
            details["printed"] = record["printed"]
            details["printed_verdict"] = (
                Verdict.HOLDS if verify_t_symmetry(_t_field(record["printed"])) else Verdict.FAILS
            ).value
        entries.append(EntryResult(
            label=record["name"],
            verdict=Verdict.HOLDS if holds else Verdict.FAILS,
            residual="0" if holds else "≠ 0",
            seconds=time.perf_counter() - start,
            notes=record.get("notes", []),
            details=details,
        ))
    return VerificationReport(table="t-symmetries", entries=entries)


def integrable_functions() -> List[Dict[str, str]]:
    """Funciones F para las que la ecuación es integrable por simetrías (sólo datos)."""
    return [
        {"F": record["F"], "notes": record.get("notes", "")}
        for record in get_catalog().integrable()
    ]


def parse_flux(phi: str, psi: str, header: str = "") -> FluxVector:
    """Lee Φ y Ψ compartiendo las declaraciones de `header` y de cada texto."""
    _, declarations = parse_with_declarations(f"{header} 0")
    return FluxVector(phi=parse(f"{header} {phi}", declarations), psi=parse(f"{header} {psi}", declarations))
