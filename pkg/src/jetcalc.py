"""
Espacio de jets: derivadas totales, segunda prolongación, operador de Euler
y reducción módulo la ecuación u_xy = F.

`JetSpace` está parametrizado por las variables independientes y la
dependiente, así la misma maquinaria sirve para (x, y; u) y para la
ecuación lineal en (z, y; T).
"""
from typing import Dict, Iterable, Optional, Sequence, Tuple, Union

import sympy
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from sympy import Symbol

from .config import get_settings
from .errors import InvalidInputError, OrderBoundExceeded
from .models import FamilyMode
from .symkernel import (
    U,
    U_X,
    Expr,
    FunctionSymbol,
    OpaqueApp,
    canonicalize,
    jet_index,
    jet_symbol,
    parse,
    render,
    substitute,
)

Index = Tuple[int, int]

F_OF_U = FunctionSymbol("F", ("u",))
F_OF_UX = FunctionSymbol("F", ("u_x",))

SECOND_ORDER: Tuple[Index, ...] = ((1, 0), (0, 1), (2, 0), (1, 1), (0, 2))


def _as_expr(value) -> Expr:
    if isinstance(value, str):
        return parse(value)
    return canonicalize(value)


class FSpec(BaseModel):
    """Declaración de la función F: opaca de u, opaca de u_x o forma cerrada"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    mode: FamilyMode
    body: Optional[Expr] = None
    name: str = "F"

    @field_validator("body", mode="before")
    @classmethod
    def _canonical_body(cls, value):
        return None if value is None else _as_expr(value)

    @model_validator(mode="after")
    def _check_body(self):
        if self.mode == FamilyMode.CLOSED_FORM:
            if self.body is None:
                raise ValueError("Una F en forma cerrada necesita cuerpo")
            jets = {s for s in self.body.free_symbols if jet_index(s) is not None}
            if not jets <= {U, U_X}:
                raise ValueError(f"F sólo puede depender de u y u_x, no de {sorted(map(str, jets))}")
        elif self.body is not None:
            raise ValueError("Una F opaca no lleva cuerpo")
        return self

    @classmethod
    def opaque_u(cls) -> "FSpec":
        return cls(mode=FamilyMode.OPAQUE_U)

    @classmethod
    def opaque_ux(cls) -> "FSpec":
        return cls(mode=FamilyMode.OPAQUE_UX)

    @classmethod
    def closed(cls, body) -> "FSpec":
        return cls(mode=FamilyMode.CLOSED_FORM, body=body)

    @classmethod
    def from_expr(cls, e: Expr) -> "FSpec":
        """F(u) o F(u_x) sin derivar se leen como opacas; el resto es forma cerrada."""
        e = canonicalize(e)
        if isinstance(e, OpaqueApp) and not any(e.multi_index):
            if e.function_symbol.args == ("u",) and e.args == (U,):
                return cls.opaque_u()
            if e.function_symbol.args == ("u_x",) and e.args == (U_X,):
                return cls.opaque_ux()
        return cls.closed(e)

    @property
    def symbol(self) -> Optional[FunctionSymbol]:
        if self.mode == FamilyMode.OPAQUE_U:
            return FunctionSymbol(self.name, ("u",))
        if self.mode == FamilyMode.OPAQUE_UX:
            return FunctionSymbol(self.name, ("u_x",))
        return None

    @property
    def expr(self) -> Expr:
        if self.symbol is not None:
            return self.symbol.at_declared()
        return self.body

    @property
    def variable(self) -> Optional[Symbol]:
        """Variable de clasificación de las formas opacas."""
        return {FamilyMode.OPAQUE_U: U, FamilyMode.OPAQUE_UX: U_X}.get(self.mode)

    @property
    def is_opaque(self) -> bool:
        return self.mode != FamilyMode.CLOSED_FORM

    @property
    def depends_on_u(self) -> bool:
        return self.expr.has(U)

    @property
    def depends_on_ux(self) -> bool:
        return self.expr.has(U_X)

    def equation(self) -> Expr:
        """Δ = u_xy − F."""
        return jet_symbol(1, 1) - self.expr


class PointVectorField(BaseModel):
    """Campo vectorial puntual ξ∂_x + η∂_y + φ∂_u"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    xi: Expr = sympy.S.Zero
    eta: Expr = sympy.S.Zero
    phi: Expr = sympy.S.Zero

    @field_validator("xi", "eta", "phi", mode="before")
    @classmethod
    def _canonical(cls, value):
        return _as_expr(value)

    @model_validator(mode="after")
    def _no_derivative_jets(self):
        for component in self.components():
            high = [s for s in component.free_symbols if (jet_index(s) or (0, 0)) != (0, 0)]
            if high:
                raise ValueError(f"Un campo puntual no puede depender de {sorted(map(str, high))}")
        return self

    def components(self) -> Tuple[Expr, Expr, Expr]:
        return (self.xi, self.eta, self.phi)

    def scaled(self, factor) -> "PointVectorField":
        return PointVectorField(xi=self.xi * factor, eta=self.eta * factor, phi=self.phi * factor)

    def __add__(self, other: "PointVectorField") -> "PointVectorField":
        return PointVectorField(xi=self.xi + other.xi, eta=self.eta + other.eta, phi=self.phi + other.phi)

    def substitute(self, mapping) -> "PointVectorField":
        return PointVectorField(**{
            name: substitute(value, mapping) for name, value in zip(("xi", "eta", "phi"), self.components())
        })

    def to_json(self) -> Dict[str, str]:
        return {"xi": render(self.xi), "eta": render(self.eta), "phi": render(self.phi)}


class ProlongedField(BaseModel):
    """Segunda prolongación: coeficientes φ^{(i,j)} para 0 ≤ i+j ≤ 2"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    base: PointVectorField
    coefficients: Dict[Index, Expr]

    def coefficient(self, index: Index) -> Expr:
        if index not in self.coefficients:
            raise OrderBoundExceeded(f"La prolongación sólo llega a orden 2, se pidió {index}")
        return self.coefficients[index]

    def to_json(self) -> Dict[str, str]:
        return {f"{i},{j}": render(value) for (i, j), value in sorted(self.coefficients.items())}


class SideRelation(BaseModel):
    """Regla declarada symbol_xy = rhs (p.ej. h_xy = h cuando h es solución)"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    symbol: FunctionSymbol
    rhs: Expr

    def _matches(self, node) -> bool:
        return (
            isinstance(node, OpaqueApp)
            and node.function_symbol == self.symbol
            and node.multi_index[0] >= 1
            and node.multi_index[1] >= 1
        )

    def _rewrite(self, node) -> Expr:
        first, second = self.symbol.arg_symbols[:2]
        i, j = node.multi_index[:2]
        value = self.rhs
        if i > 1:
            value = sympy.diff(value, first, i - 1)
        if j > 1:
            value = sympy.diff(value, second, j - 1)
        # derivadas en ranuras adicionales pasan tal cual
        for arg, count in zip(self.symbol.arg_symbols[2:], node.multi_index[2:]):
            if count:
                value = sympy.diff(value, arg, count)
        return value.xreplace(dict(zip(self.symbol.arg_symbols, node.args)))

    def apply(self, e: Expr) -> Expr:
        while e.has(OpaqueApp) and any(self._matches(a) for a in e.atoms(OpaqueApp)):
            e = canonicalize(e.replace(self._matches, self._rewrite))
        return e


class JetSpace:
    """
    Coordenadas de jet sobre dos variables independientes.

    Args:
        independent: nombres de las dos variables independientes (eje 0, eje 1)
        dependent: nombre de la variable dependiente
        max_order: orden máximo de jet; por defecto el de la configuración
    """

    def __init__(
        self,
        independent: Tuple[str, str] = ("x", "y"),
        dependent: str = "u",
        max_order: Optional[int] = None,
    ):
        self.axes = tuple(independent)
        self.variables = tuple(Symbol(a) for a in self.axes)
        self.dependent = dependent
        self.max_order = max_order or get_settings().engine.max_jet_order

    def jet(self, i: int, j: int) -> Symbol:
        if i + j > self.max_order:
            raise OrderBoundExceeded(
                f"La coordenada de orden {i + j} supera el máximo {self.max_order}",
                {"index": [i, j], "max_order": self.max_order},
            )
        return jet_symbol(i, j, self.dependent, self.axes)

    def index_of(self, symbol: Symbol) -> Optional[Index]:
        return jet_index(symbol, self.dependent, self.axes)

    def jets_in(self, e: Expr) -> Dict[Symbol, Index]:
        jets = {}
        for symbol in sympy.sympify(e).free_symbols:
            index = self.index_of(symbol)
            if index is not None:
                jets[symbol] = index
        return jets

    def order(self, e: Expr) -> int:
        return max((i + j for i, j in self.jets_in(e).values()), default=0)

    def _axis(self, axis: Union[int, str]) -> int:
        if isinstance(axis, str):
            if axis not in self.axes:
                raise InvalidInputError(f"Eje desconocido: {axis}")
            return self.axes.index(axis)
        return axis

    def total_derivative(self, e: Expr, axis: Union[int, str]) -> Expr:
        """D_axis e: derivada parcial explícita más Σ (∂e/∂u_J)·u_{J+axis}."""
        k = self._axis(axis)
        e = sympy.sympify(e)
        result = sympy.diff(e, self.variables[k])
        for symbol, (i, j) in self.jets_in(e).items():
            shifted = self.jet(i + 1, j) if k == 0 else self.jet(i, j + 1)
            result += sympy.diff(e, symbol) * shifted
        return canonicalize(result)

    def total_derivative_multi(self, e: Expr, i: int, j: int) -> Expr:
        for _ in range(i):
            e = self.total_derivative(e, 0)
        for _ in range(j):
            e = self.total_derivative(e, 1)
        return e

    def _check_point_field(self, v: PointVectorField):
        for component in v.components():
            for index in self.jets_in(component).values():
                if index != (0, 0):
                    raise InvalidInputError("El campo depende de derivadas; no es un campo puntual")

    def prolong2(self, v: PointVectorField) -> ProlongedField:
        """Fórmula característica: φ^J = D^J W + ξ u_{J+x} + η u_{J+y}."""
        self._check_point_field(v)
        characteristic = v.phi - v.xi * self.jet(1, 0) - v.eta * self.jet(0, 1)
        coefficients = {(0, 0): canonicalize(v.phi)}
        for i, j in SECOND_ORDER:
            value = self.total_derivative_multi(characteristic, i, j)
            value += v.xi * self.jet(i + 1, j) + v.eta * self.jet(i, j + 1)
            coefficients[(i, j)] = canonicalize(value)
        return ProlongedField(base=v, coefficients=coefficients)

    def prolong2_recursive(self, v: PointVectorField) -> ProlongedField:
        """Recursión de un paso φ^{J,k} = D_k φ^J − (D_k ξ)u_{J,x} − (D_k η)u_{J,y}."""
        self._check_point_field(v)
        coefficients = {(0, 0): canonicalize(v.phi)}
        steps = {(1, 0): ((0, 0), 0), (0, 1): ((0, 0), 1), (2, 0): ((1, 0), 0),
                 (1, 1): ((1, 0), 1), (0, 2): ((0, 1), 1)}
        for target in SECOND_ORDER:
            (i, j), k = steps[target]
            value = self.total_derivative(coefficients[(i, j)], k)
            value -= self.total_derivative(v.xi, k) * self.jet(i + 1, j)
            value -= self.total_derivative(v.eta, k) * self.jet(i, j + 1)
            coefficients[target] = canonicalize(value)
        return ProlongedField(base=v, coefficients=coefficients)

    def apply_prolonged(self, prolonged: ProlongedField, delta: Expr) -> Expr:
        """pr v(Δ) para un Δ de segundo orden."""
        v = prolonged.base
        result = v.xi * sympy.diff(delta, self.variables[0]) + v.eta * sympy.diff(delta, self.variables[1])
        for symbol, index in self.jets_in(delta).items():
            result += prolonged.coefficient(index) * sympy.diff(delta, symbol)
        return canonicalize(result)

    def euler(self, e: Expr) -> Expr:
        """Operador de Euler Σ (−1)^{i+j} D_x^i D_y^j ∂e/∂u_{(i,j)}."""
        e = canonicalize(e)
        result = sympy.S.Zero
        for symbol, (i, j) in self.jets_in(e).items():
            term = self.total_derivative_multi(sympy.diff(e, symbol), i, j)
            result += (-1) ** (i + j) * term
        return canonicalize(result)

    def reduce(self, e: Expr, rhs: Expr, side_relations: Sequence[SideRelation] = ()) -> Expr:
        """
        Reescribe u_{(i,j)} con i, j ≥ 1 usando u_xy → rhs y sus derivadas
        totales hasta que no quede ninguna derivada mixta; luego aplica las
        relaciones laterales declaradas.
        """
        e = canonicalize(e)
        cache: Dict[Index, Expr] = {}
        while True:
            mixed = {s: idx for s, idx in self.jets_in(e).items() if idx[0] >= 1 and idx[1] >= 1}
            if not mixed:
                break
            mapping = {symbol: self._mixed_value(index, rhs, cache) for symbol, index in mixed.items()}
            e = canonicalize(e.xreplace(mapping))
        for relation in side_relations:
            e = relation.apply(e)
        return canonicalize(e)

    def _mixed_value(self, index: Index, rhs: Expr, cache: Dict[Index, Expr]) -> Expr:
        if index not in cache:
            i, j = index
            if index == (1, 1):
                cache[index] = canonicalize(rhs)
            elif i > 1:
                cache[index] = self.total_derivative(self._mixed_value((i - 1, j), rhs, cache), 0)
            else:
                cache[index] = self.total_derivative(self._mixed_value((i, j - 1), rhs, cache), 1)
        return cache[index]


def default_space(max_order: Optional[int] = None) -> JetSpace:
    return JetSpace(("x", "y"), "u", max_order)


def total_derivative(e: Expr, axis: Union[int, str]) -> Expr:
    return default_space().total_derivative(e, axis)


def prolong2(v: PointVectorField) -> ProlongedField:
    return default_space().prolong2(v)


def prolong2_recursive(v: PointVectorField) -> ProlongedField:
    return default_space().prolong2_recursive(v)


def euler_u(e: Expr, space: Optional[JetSpace] = None) -> Expr:
    return (space or default_space()).euler(e)


def reduce_mod_equation(
    e: Expr,
    f: FSpec,
    side_relations: Iterable[SideRelation] = (),
    space: Optional[JetSpace] = None,
) -> Expr:
    return (space or default_space()).reduce(e, f.expr, tuple(side_relations))
