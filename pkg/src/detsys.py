"""
Ecuaciones determinantes de simetrías puntuales de u_xy = F

`symmetry_residual` aplica el criterio infinitesimal; `split_system` separa
el residuo del campo genérico por monomios de jets en etapas, re-expresando
las incógnitas (ξ(x), η(y), φ = g u + h, g constante o g(y)) como pasos
explícitos, hasta dejar el único residuo mixto de la clasificación.
"""
from collections import defaultdict
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import sympy
from pydantic import BaseModel, ConfigDict, Field
from sympy import Add, Mul, Symbol

from .config import get_logger
from .errors import BasisIncompleteError, InvalidInputError
from .jetcalc import FSpec, JetSpace, PointVectorField, SideRelation, default_space
from .models import FamilyMode, Verdict
from .symkernel import (
    U,
    U_X,
    Expr,
    FunctionSymbol,
    OpaqueApp,
    canonicalize,
    decide_zero,
    declarations_header,
    jet_symbol,
    render,
)

logger = get_logger(__name__)

XI = FunctionSymbol("xi", ("x", "y", "u"))
ETA = FunctionSymbol("eta", ("x", "y", "u"))
PHI = FunctionSymbol("phi", ("x", "y", "u"))

# g constante pasa a llamarse A, como en la ecuación reducida
CONSTANT_NAMES = {"g": "A"}

Monomial = Tuple[int, ...]


def symmetry_residual(
    f: FSpec,
    v: PointVectorField,
    side_relations: Sequence[SideRelation] = (),
    space: Optional[JetSpace] = None,
) -> Expr:
    """
    pr v(u_xy − F) reducido módulo la ecuación; es 0 si y sólo si v es simetría.

    Args:
        f: Declaración de F
        v: Campo vectorial puntual
        side_relations: Reglas adicionales (p.ej. h_xy = h)

    Returns:
        Residuo canónico
    """
    space = space or default_space()
    prolonged = space.prolong2(v)
    raw = space.apply_prolonged(prolonged, f.equation())
    return space.reduce(raw, f.expr, side_relations)


def split_coefficients(
    e: Expr,
    basis: Sequence[Symbol],
    secondary: Optional[Symbol] = None,
    opaque: Optional[FunctionSymbol] = None,
) -> Dict[Monomial, Expr]:
    """
    Coeficientes de `e` sobre los monomios en `basis`.

    Si se da `secondary`, los coeficientes libres de F se separan además en
    potencias de esa variable (la variable de clasificación u_x); la clave
    lleva entonces un exponente extra al final.
    """
    basis = tuple(basis)
    positions = {symbol: k for k, symbol in enumerate(basis)}
    grouped: Dict[Monomial, List[Expr]] = defaultdict(list)

    for term in Add.make_args(canonicalize(e)):
        powers = [0] * len(basis)
        rest = []
        for factor in Mul.make_args(term):
            base, exponent = factor.as_base_exp()
            if base in positions and exponent.is_Integer and exponent > 0:
                powers[positions[base]] += int(exponent)
            else:
                rest.append(factor)
        coefficient = Mul(*rest)
        if any(coefficient.has(symbol) for symbol in basis):
            raise BasisIncompleteError(
                f"El coeficiente {render(coefficient)} todavía contiene jets de la base",
                {"coefficient": render(coefficient)},
            )
        grouped[tuple(powers)].append(coefficient)

    coefficients = {
        key: canonicalize(Add(*terms)) for key, terms in grouped.items()
    }
    coefficients = {key: value for key, value in coefficients.items() if value != 0}

    if secondary is None:
        return coefficients

    result: Dict[Monomial, Expr] = {}
    for key, value in coefficients.items():
        depends_on_f = opaque is not None and any(
            app.function_symbol.name == opaque.name for app in value.atoms(OpaqueApp)
        )
        if depends_on_f or not value.has(secondary):
            result[key + (0,)] = value
            continue
        for (power,), coefficient in split_coefficients(value, (secondary,)).items():
            result[key + (power,)] = coefficient
    return result


class SplitStage(BaseModel):
    """Una etapa de la separación: restricciones halladas y re-expresión aplicada"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    name: str
    constraints: List[Expr] = Field(default_factory=list)
    reexpression: Dict[str, str] = Field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "constraints": [render(c) for c in self.constraints],
            "reexpression": self.reexpression,
        }


class DeterminingSystem(BaseModel):
    """Sistema determinante separado: restricciones y residuo final"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    family: FSpec
    unknowns: List[FunctionSymbol] = Field(default_factory=list)
    parameters: List[Symbol] = Field(default_factory=list)
    constraints: List[Expr] = Field(default_factory=list)
    residual: Expr = sympy.S.Zero
    raw_residual: Expr = sympy.S.Zero
    field: PointVectorField
    stages: List[SplitStage] = Field(default_factory=list)

    def to_json(self) -> dict:
        header = declarations_header(self.residual, *self.constraints, *self.field.components())
        return {
            "family": self.family.mode.value,
            "unknowns": [s.declaration for s in self.unknowns] + [f"param {p.name};" for p in self.parameters],
            "declarations": header,
            "constraints": [render(c) for c in self.constraints],
            "residual": render(self.residual),
            "raw_residual": render(self.raw_residual),
            "field": self.field.to_json(),
            "stages": [stage.to_json() for stage in self.stages],
        }


def _single_derivative_constraints(
    coefficients: Dict[Monomial, Expr], targets: Set[FunctionSymbol]
) -> Dict[FunctionSymbol, List[Tuple[int, ...]]]:
    """Coeficientes de la forma constante·(derivada de una incógnita), minimales."""
    found: Dict[FunctionSymbol, Set[Tuple[int, ...]]] = defaultdict(set)
    for value in coefficients.values():
        _, rest = value.as_coeff_Mul()
        if isinstance(rest, OpaqueApp) and rest.function_symbol in targets and any(rest.multi_index):
            found[rest.function_symbol].add(rest.multi_index)

    minimal: Dict[FunctionSymbol, List[Tuple[int, ...]]] = {}
    for symbol, indices in found.items():
        keep = [
            index for index in indices
            if not any(other != index and all(a <= b for a, b in zip(other, index)) for other in indices)
        ]
        minimal[symbol] = sorted(keep)
    return minimal


def _drop_arguments(symbol: FunctionSymbol, slots: Iterable[int]):
    slots = set(slots)
    kept = tuple(a for k, a in enumerate(symbol.args) if k not in slots)
    if not kept:
        return Symbol(CONSTANT_NAMES.get(symbol.name, f"{symbol.name}0"))
    return FunctionSymbol(symbol.name, kept)


class _Splitter:
    """Estado de la separación por etapas para una F opaca"""

    def __init__(self, f: FSpec):
        self.f = f
        self.space = default_space()
        self.basis: List[Symbol] = [jet_symbol(0, 1), jet_symbol(2, 0), jet_symbol(0, 2)]
        if f.mode == FamilyMode.OPAQUE_U:
            self.basis.insert(0, U_X)
            self.secondary = None
        else:
            self.secondary = U_X
        self.field = PointVectorField(xi=XI.at_declared(), eta=ETA.at_declared(), phi=PHI.at_declared())
        self.unknowns: Set[FunctionSymbol] = {XI, ETA, PHI}
        self.parameters: List[Symbol] = []
        self.constraints: List[Expr] = []
        self.stages: List[SplitStage] = []
        self.raw = sympy.S.Zero

    def coefficients(self, separate: bool = True) -> Dict[Monomial, Expr]:
        """Con `separate=False` los coeficientes no se parten en potencias de u_x."""
        prolonged = self.space.prolong2(self.field)
        self.raw = self.space.apply_prolonged(prolonged, self.f.equation())
        reduced = self.space.reduce(self.raw, self.f.expr)
        secondary = self.secondary if separate else None
        return split_coefficients(reduced, self.basis, secondary, self.f.symbol)

    def rebind(self, bindings: Dict[FunctionSymbol, Expr]):
        self.field = self.field.substitute(bindings)
        for symbol, body in bindings.items():
            self.unknowns.discard(symbol)
            for new in sympy.sympify(body).atoms(OpaqueApp):
                self.unknowns.add(new.function_symbol)
            for parameter in sympy.sympify(body).free_symbols:
                if parameter.name in CONSTANT_NAMES.values() and parameter not in self.parameters:
                    self.parameters.append(parameter)

    def reduce_arguments(self, name: str, targets: Set[FunctionSymbol], separate: bool = True):
        """Derivadas simples nulas eliminan argumentos: ξ_y = ξ_u = 0 ⇒ ξ = ξ(x)."""
        found = _single_derivative_constraints(self.coefficients(separate), targets)
        stage = SplitStage(name=name)
        bindings = {}
        for symbol, indices in sorted(found.items(), key=lambda item: item[0].name):
            for index in indices:
                stage.constraints.append(symbol.at_declared(index))
            slots = [index.index(1) for index in indices if sum(index) == 1]
            if slots:
                reduced = _drop_arguments(symbol, slots)
                body = reduced.at_declared() if isinstance(reduced, FunctionSymbol) else reduced
                bindings[symbol] = body
                stage.reexpression[symbol.declaration] = render(body)
        self.rebind(bindings)
        self.finish(stage)

    def polynomial_in_u(self):
        """φ_{u^k} = 0 ⇒ φ polinómico en u de grado < k (φ = g u + h para k = 2)."""
        found = _single_derivative_constraints(self.coefficients(), {PHI})
        u_slot = PHI.args.index("u")
        pure = [index for index in found.get(PHI, []) if sum(index) == index[u_slot]]
        stage = SplitStage(name="phi-polynomial-in-u")
        if pure:
            degree = min(index[u_slot] for index in pure)
            stage.constraints.append(PHI.at_declared(tuple(degree if k == u_slot else 0 for k in range(3))))
            names = ["h", "g"] + [f"g{m}" for m in range(2, degree)]
            coefficients = [FunctionSymbol(names[m], ("x", "y")) for m in range(degree)]
            body = Add(*[c.at_declared() * U**m for m, c in enumerate(coefficients)])
            self.rebind({PHI: body})
            stage.reexpression[PHI.declaration] = render(body)
        self.finish(stage)

    def finish(self, stage: SplitStage):
        self.constraints.extend(stage.constraints)
        self.stages.append(stage)
        logger.info("split_stage", stage=stage.name, constraints=[render(c) for c in stage.constraints])


def split_system(f: FSpec) -> DeterminingSystem:
    """
    Separa el criterio de simetría del campo genérico ξ, η, φ(x, y, u).

    Returns:
        DeterminingSystem con las restricciones de cada etapa y el residuo final
    """
    if not f.is_opaque:
        raise InvalidInputError("split_system necesita una F opaca")

    splitter = _Splitter(f)
    splitter.reduce_arguments("xi-eta-dependence", {XI, ETA})
    splitter.polynomial_in_u()

    g = FunctionSymbol("g", ("x", "y"))
    if f.mode == FamilyMode.OPAQUE_UX:
        # F(u_x) no depende de u: u entra en la base de separación
        splitter.basis.append(U)
    splitter.reduce_arguments("g-dependence", {g}, separate=False)

    # u_x es indeterminada del residuo final: no se separa en sus potencias
    coefficients = splitter.coefficients(separate=False)
    zero_key = (0,) * len(splitter.basis)
    residual = coefficients.pop(zero_key, sympy.S.Zero)

    leftovers = [value for value in coefficients.values() if decide_zero(value) is not Verdict.HOLDS]
    if leftovers:
        splitter.finish(SplitStage(name="leftover", constraints=leftovers))

    return DeterminingSystem(
        family=f,
        unknowns=sorted(splitter.unknowns, key=lambda s: s.name),
        parameters=splitter.parameters,
        constraints=splitter.constraints,
        residual=residual,
        raw_residual=splitter.raw,
        field=splitter.field,
        stages=splitter.stages,
    )


def arbitrary_F_symmetries(f: FSpec) -> PointVectorField:
    """
    Álgebra principal: simetrías admitidas para F arbitraria.

    F(u):   (k1 x + k2)∂_x + (k3 − k1 y)∂_y
    F(u_x): (k1 x + k2)∂_x + k3 ∂_y + (k1 u + P(y))∂_u
    """
    k1, k2, k3 = sympy.symbols("k1 k2 k3")
    x, y = sympy.symbols("x y")
    if f.mode == FamilyMode.OPAQUE_U:
        return PointVectorField(xi=k1 * x + k2, eta=k3 - k1 * y, phi=0)
    if f.mode == FamilyMode.OPAQUE_UX:
        P = FunctionSymbol("P", ("y",))
        return PointVectorField(xi=k1 * x + k2, eta=k3, phi=k1 * U + P.at_declared())
    raise InvalidInputError("arbitrary_F_symmetries necesita una F opaca")
