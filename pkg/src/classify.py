"""
Clasificación de grupo por dependencia lineal de indeterminadas

Del residuo reducido se extraen las indeterminadas (factores que sólo
dependen de u o de u_x); cada subconjunto de m de ellas da una condición
(su Wronskiano) sobre F. Se verifican soluciones de esas condiciones, las
entradas de las tablas de clasificación y las transformaciones de
equivalencia.
"""
import time
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import sympy
from pydantic import BaseModel, ConfigDict, Field, model_validator
from sympy import Add, Symbol

from .catalog import get_catalog
from .config import get_logger
from .detsys import split_system, symmetry_residual
from .errors import InvalidInputError, ZeroScaleError
from .jetcalc import FSpec, PointVectorField, SideRelation
from .models import EntryResult, Family, Verdict, VerificationReport
from .symkernel import (
    U,
    U_X,
    Z,
    Declarations,
    Expr,
    FunctionSymbol,
    OpaqueApp,
    canonicalize,
    decide_zero,
    declarations_header,
    parse,
    parse_with_declarations,
    proportionality_factor,
    render,
    substitute,
)

logger = get_logger(__name__)

FAMILY_VARIABLES = {Family.U: U, Family.UX: U_X}
FAMILY_SYMBOLS = {Family.U: FunctionSymbol("F", ("u",)), Family.UX: FunctionSymbol("F", ("u_x",))}


def family_of(value) -> Family:
    try:
        return Family(value)
    except ValueError:
        raise InvalidInputError(f"Familia desconocida: {value!r} (use 'u' o 'ux')")


# ---------------------------------------------------------------------------
# Indeterminadas y Wronskianos
# ---------------------------------------------------------------------------

class IndeterminateSet(BaseModel):
    """Indeterminadas de un residuo: funciones de la sola variable de clasificación"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    variable: Symbol
    elements: List[Expr] = Field(default_factory=list)
    coefficients: List[Expr] = Field(default_factory=list)

    def __len__(self) -> int:
        return len(self.elements)

    def to_json(self) -> dict:
        return {
            "variable": self.variable.name,
            "elements": [render(e) for e in self.elements],
            "coefficients": [render(c) for c in self.coefficients],
        }


def _depends_only_on(factor: Expr, variable: Symbol) -> bool:
    symbols = factor.free_symbols
    return factor.has(variable) and symbols <= {variable}


def extract_indeterminates(residual: Expr, variable: Symbol) -> IndeterminateSet:
    """
    Agrupa el residuo por factores que dependen sólo de `variable`.

    Cada término se separa en su parte dependiente de la variable (F_u, u·F_u,
    u_x·F_ux, ...) y su coeficiente en las incógnitas; los términos sin esa
    parte aportan la indeterminada 1.
    """
    grouped: Dict[Expr, Expr] = {}
    order: List[Expr] = []
    for term in Add.make_args(canonicalize(residual)):
        if term == 0:
            continue
        coefficient, dependent = term.as_independent(variable, as_Add=False)
        if dependent != 1 and not _depends_only_on(dependent, variable):
            raise InvalidInputError(
                f"El término {render(term)} mezcla la variable de clasificación con otras variables"
            )
        if dependent not in grouped:
            grouped[dependent] = sympy.S.Zero
            order.append(dependent)
        grouped[dependent] += coefficient

    elements, coefficients = [], []
    for dependent in sorted(order, key=lambda d: (d == 1, sympy.default_sort_key(d))):
        coefficient = canonicalize(grouped[dependent])
        if coefficient != 0:
            elements.append(dependent)
            coefficients.append(coefficient)
    return IndeterminateSet(variable=variable, elements=elements, coefficients=coefficients)


def wronskian(exprs: Sequence[Expr], variable: Symbol) -> Expr:
    """Determinante de la matriz de derivadas sucesivas (fila k = derivadas k-ésimas)."""
    exprs = [sympy.sympify(e) for e in exprs]
    if not exprs:
        raise InvalidInputError("El Wronskiano necesita al menos una función")
    return canonicalize(sympy.wronskian(exprs, variable))


class CaseCondition(BaseModel):
    """Condición sobre F por dependencia lineal de un subconjunto de m indeterminadas"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    label: str
    m: int
    subset: List[Expr]
    ode: Expr
    identically_zero: bool = False
    duplicate_of: Optional[str] = None
    factor: Optional[Expr] = None
    invalid_reason: Optional[str] = None
    printed_label: Optional[str] = None
    printed_factor: Optional[Expr] = None

    @property
    def is_valid(self) -> bool:
        return not self.identically_zero and self.duplicate_of is None and self.invalid_reason is None

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "m": self.m,
            "subset": [render(e) for e in self.subset],
            "ode": render(self.ode),
            "identically_zero": self.identically_zero,
            "duplicate_of": self.duplicate_of,
            "factor": None if self.factor is None else render(self.factor),
            "invalid_reason": self.invalid_reason,
            "printed_label": self.printed_label,
            "printed_factor": None if self.printed_factor is None else render(self.printed_factor),
        }


def condition_invalid_reason(ode: Expr) -> Optional[str]:
    """
    Una condición de un solo término cuyas funciones opacas son F o F'
    obliga a F constante (o nula), lo que excluye la clase.
    """
    ode = canonicalize(ode)
    if ode == 0:
        return None
    if ode.is_number:
        return "condición imposible: constante no nula"
    if len(Add.make_args(ode)) != 1:
        return None
    apps = ode.atoms(OpaqueApp)
    if apps and all(sum(app.multi_index) <= 1 for app in apps):
        return "obliga a F constante"
    return None


def enumerate_case_conditions(s: IndeterminateSet, m: int) -> List[CaseCondition]:
    """
    Una condición por cada m-subconjunto, en el orden de `itertools.combinations`.

    Las condiciones idénticamente nulas o proporcionales a una anterior se
    marcan, no se descartan.
    """
    n = len(s)
    if not 2 <= m <= n:
        raise InvalidInputError(f"m debe estar entre 2 y {n}, se recibió {m}")

    conditions: List[CaseCondition] = []
    for k, indices in enumerate(combinations(range(n), m), start=1):
        subset = [s.elements[i] for i in indices]
        ode = wronskian(subset, s.variable)
        condition = CaseCondition(label=f"{m}.{k}", m=m, subset=subset, ode=ode)
        if decide_zero(ode) is Verdict.HOLDS:
            condition.identically_zero = True
        else:
            for previous in conditions:
                if previous.identically_zero:
                    continue
                factor = proportionality_factor(ode, previous.ode)
                if factor is not None:
                    condition.duplicate_of = previous.label
                    condition.factor = factor
                    break
            condition.invalid_reason = condition_invalid_reason(ode)
        conditions.append(condition)

    logger.debug("case_conditions", m=m, count=len(conditions))
    return conditions


def linear_combination_condition(
    s: IndeterminateSet, subset: Sequence[Expr], coeffs: Sequence[Symbol]
) -> Expr:
    """EDO de primer orden Σ c_i·e_i, alternativa a los Wronskianos de orden alto."""
    subset = [canonicalize(e) for e in subset]
    if len(subset) != len(coeffs):
        raise InvalidInputError("Se necesita un coeficiente por elemento")
    for element in subset:
        if element not in s.elements:
            raise InvalidInputError(f"{render(element)} no es una indeterminada del conjunto")
    return canonicalize(Add(*[c * e for c, e in zip(coeffs, subset)]))


def check_ode_solution(ode: Expr, symbol: FunctionSymbol, body: Expr) -> Verdict:
    """Sustituye `symbol := body` en la EDO y decide si se anula idénticamente."""
    return decide_zero(substitute(ode, {symbol: body}))


def check_condition_solution(f: Expr, condition: CaseCondition, family: Family = Family.U) -> Verdict:
    """
    HOLDS si F = f anula la condición en la variable y en todos los parámetros.

    UNDECIDED se devuelve aparte cuando el sondeo no es concluyente.
    """
    family = family_of(family)
    return check_ode_solution(condition.ode, FAMILY_SYMBOLS[family], sympy.sympify(f))


def match_printed_conditions(
    conditions: Sequence[CaseCondition], printed: Sequence[dict], header: str = ""
) -> List[CaseCondition]:
    """Anota cada condición generada con la impresa proporcional y el factor."""
    parsed = [(record["label"], parse(f"{header} {record['ode']}")) for record in printed]
    for condition in conditions:
        if condition.identically_zero:
            continue
        for label, ode in parsed:
            factor = proportionality_factor(ode, condition.ode)
            if factor is not None:
                condition.printed_label = label
                condition.printed_factor = factor
                break
    return list(conditions)


# ---------------------------------------------------------------------------
# Transformaciones de equivalencia
# ---------------------------------------------------------------------------

class EquivalenceParams(BaseModel):
    """
    x = a t + b, y = c z + d, u = r w + s.

    Para la familia u_x, `s` puede depender de z (la función S(z)).
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    a: Expr = sympy.S.One
    b: Expr = sympy.S.Zero
    c: Expr = sympy.S.One
    d: Expr = sympy.S.Zero
    r: Expr = sympy.S.One
    s: Expr = sympy.S.Zero

    @model_validator(mode="before")
    @classmethod
    def _sympify(cls, values):
        if isinstance(values, dict):
            return {k: sympy.sympify(v) for k, v in values.items()}
        return values

    @model_validator(mode="after")
    def _nonzero_scales(self):
        for name in ("a", "c", "r"):
            if canonicalize(getattr(self, name)) == 0:
                raise ZeroScaleError(f"La escala {name} no puede ser cero", {"parameter": name})
        return self

    @classmethod
    def identity(cls) -> "EquivalenceParams":
        return cls()

    def compose(self, then: "EquivalenceParams") -> "EquivalenceParams":
        """Aplicar `self` y luego `then` equivale a aplicar el resultado."""
        return EquivalenceParams(
            a=self.a * then.a,
            b=self.a * then.b + self.b,
            c=self.c * then.c,
            d=self.c * then.d + self.d,
            r=self.r * then.r,
            s=self.r * then.s + self.s.xreplace({Z: then.c * Z + then.d}),
        )


def equivalence_transform(f: Expr, family, params: EquivalenceParams) -> Expr:
    """
    Función H de la ecuación transformada, escrita de nuevo en u o u_x.

    familia u:  H = (ac/r) F(r u + s)
    familia ux: H = (ac/r) F(r u_x / a)
    """
    family = family_of(family)
    f = sympy.sympify(f)
    scale = params.a * params.c / params.r
    if family == Family.U:
        return canonicalize(scale * f.xreplace({U: params.r * U + params.s}))
    return canonicalize(scale * f.xreplace({U_X: params.r * U_X / params.a}))


# ---------------------------------------------------------------------------
# Tablas de clasificación
# ---------------------------------------------------------------------------

class ClassEntry(BaseModel):
    """Entrada de una tabla: F, campo genérico y relaciones laterales"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    label: str
    family: Family
    f: FSpec
    field: PointVectorField
    side_relations: List[SideRelation] = Field(default_factory=list)
    constraints: List[str] = Field(default_factory=list)
    notes: List[str] = Field(default_factory=list)
    printed: Optional[PointVectorField] = None

    @classmethod
    def from_record(cls, record: dict) -> "ClassEntry":
        header = record.get("declarations", "")
        _, declarations = parse_with_declarations(f"{header} 0")

        def read(text: str) -> Expr:
            return parse(f"{header} {text}")

        def field_of(data: dict) -> PointVectorField:
            return PointVectorField(xi=read(data["xi"]), eta=read(data["eta"]), phi=read(data["phi"]))

        relations = []
        for relation in record.get("side_relations", []):
            symbol = declarations.functions.get(relation["symbol"])
            if symbol is None:
                raise InvalidInputError(f"Relación lateral sobre símbolo no declarado: {relation['symbol']}")
            relations.append(SideRelation(symbol=symbol, rhs=read(relation["rhs"])))

        printed = record.get("printed")
        return cls(
            label=record["label"],
            family=family_of(record["family"]),
            f=FSpec.from_expr(read(record["F"])),
            field=field_of(record),
            side_relations=relations,
            constraints=record.get("constraints", []),
            notes=record.get("notes", []),
            printed=field_of(printed) if printed else None,
        )


def verify_entry(entry: ClassEntry) -> EntryResult:
    """symmetry_residual(F, v) ≡ 0 en todos los parámetros y funciones arbitrarias."""
    start = time.perf_counter()
    residual = symmetry_residual(entry.f, entry.field, entry.side_relations)
    verdict = decide_zero(residual)
    details = {"F": render(entry.f.expr), "field": entry.field.to_json()}
    exprs = [entry.f.expr, residual, *entry.field.components()]
    if entry.constraints:
        details["constraints"] = entry.constraints

    if entry.printed is not None:
        printed_residual = symmetry_residual(entry.f, entry.printed, entry.side_relations)
        printed_verdict = decide_zero(printed_residual)
        details["printed_verdict"] = printed_verdict.value
        details["printed_residual"] = render(printed_residual)
        exprs.append(printed_residual)
    details["declarations"] = declarations_header(*exprs)

    seconds = time.perf_counter() - start
    logger.info("entry_verified", label=entry.label, verdict=verdict.value, seconds=round(seconds, 3))
    return EntryResult(
        label=entry.label,
        verdict=verdict,
        residual="0" if verdict is Verdict.HOLDS else render(residual),
        seconds=seconds,
        notes=entry.notes,
        details=details,
    )


def load_class_table(table: str) -> List[ClassEntry]:
    return [ClassEntry.from_record(record) for record in get_catalog().class_table(table)["entries"]]


def verify_class_table(table: str, entry: Optional[str] = None) -> VerificationReport:
    """
    Verifica todas las entradas de una tabla (o sólo `entry`).

    Args:
        table: thm22 | table1 | table2 | supplementary
        entry: etiqueta de una entrada concreta

    Returns:
        VerificationReport con veredicto, residuo y tiempo por entrada
    """
    entries = load_class_table(table)
    if entry is not None:
        entries = [e for e in entries if e.label == entry]
        if not entries:
            raise InvalidInputError(f"La tabla {table} no tiene la entrada {entry}")

    report = VerificationReport(table=table, entries=[verify_entry(e) for e in entries])
    logger.info("table_verified", table=table, passed=report.passed, failed=report.failed)
    return report


def generated_conditions(family, m: int) -> Tuple[IndeterminateSet, List[CaseCondition]]:
    """Condiciones del residuo de la familia opaca, anotadas con las impresas."""
    family = family_of(family)
    spec = FSpec.opaque_u() if family == Family.U else FSpec.opaque_ux()
    system = split_system(spec)
    indeterminates = extract_indeterminates(system.residual, FAMILY_VARIABLES[family])
    conditions = enumerate_case_conditions(indeterminates, m)
    catalog = get_catalog()
    printed = [c for c in catalog.printed_conditions() if c["family"] == family.value]
    header = catalog.condition_header(family.value)
    return indeterminates, match_printed_conditions(conditions, printed, header)


def find_condition(conditions: Sequence[CaseCondition], label: str) -> CaseCondition:
    for condition in conditions:
        if condition.label == label:
            return condition
    raise InvalidInputError(f"No existe la condición {label}")


def _solution_condition(record: dict, header: str, printed: Dict[str, str]) -> Tuple[Expr, Declarations]:
    if "condition" in record:
        label = record["condition"]
        if label not in printed:
            raise InvalidInputError(f"La solución {record['name']} cita una condición desconocida: {label}")
        return parse_with_declarations(f"{header} {printed[label]}")
    if "ode" in record:
        return parse_with_declarations(f"{header} {record['ode']}")
    declarations = Declarations()
    subset = [parse(f"{header} {text}", declarations) for text in record["subset"]]
    family = family_of(record["family"])
    return wronskian(subset, FAMILY_VARIABLES[family]), declarations


def verify_condition_solutions() -> VerificationReport:
    """
    Comprueba que cada solución catalogada anula su condición.

    La condición puede venir por etiqueta impresa, como EDO explícita o como
    subconjunto de indeterminadas cuyo Wronskiano se calcula aquí.
    """
    catalog = get_catalog()
    printed = {record["label"]: record["ode"] for record in catalog.printed_conditions()}
    results = []
    for record in catalog.condition_solutions():
        start = time.perf_counter()
        family = family_of(record["family"])
        header = catalog.condition_header(family.value)
        ode, declarations = _solution_condition(record, header, printed)
        symbol = declarations.functions.get(record.get("function", "F"), FAMILY_SYMBOLS[family])
        solution = parse(record["solution"])
        verdict = check_ode_solution(ode, symbol, solution)
        seconds = time.perf_counter() - start
        logger.info("solution_verified", name=record["name"], verdict=verdict.value)
        results.append(EntryResult(
            label=record["name"],
            verdict=verdict,
            residual="0" if verdict is Verdict.HOLDS else render(substitute(ode, {symbol: solution})),
            seconds=seconds,
            details={"ode": render(ode), "solution": render(solution)},
        ))
    return VerificationReport(table="condition-solutions", entries=results)
