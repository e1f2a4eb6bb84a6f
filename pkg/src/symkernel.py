"""
Núcleo simbólico exacto

Parser de la gramática de expresiones, forma canónica, derivación con regla
de la cadena sobre símbolos opacos, sustitución simultánea, comparación por
sondeo con aritmética racional exacta y reglas de antiderivación.

Las expresiones son árboles de sympy. Las funciones opacas (F, xi, eta, h,
V, ...) son subclases de `OpaqueApp` creadas una vez por símbolo y
multi-índice, de modo que `sympy.diff` aplica la regla de la cadena sin
objetos Derivative: la derivada de F_u(u) es F_uu(u).
"""
import itertools
import re
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Set, Tuple, Union

import numpy as np
import sympy
from pydantic import BaseModel, ConfigDict, Field, field_validator
from sympy import Add, Mul, Pow, Rational, Symbol
from sympy.core.function import Function
from sympy.printing.str import StrPrinter

from .config import get_logger, get_settings
from .errors import (
    ArityError,
    CircularBindingError,
    IntegrationIncapableError,
    InvalidInputError,
    ParseError,
)
from .models import Verdict

logger = get_logger(__name__)

Expr = sympy.Expr

X = Symbol("x")
Y = Symbol("y")
Z = Symbol("z")
U = Symbol("u")

RESERVED = {"exp", "ln", "sin", "cos", "sqrt", "func", "param", "var", "prim"}
DEFAULT_VARIABLES = ("x", "y", "z")


# ---------------------------------------------------------------------------
# Coordenadas de jet
# ---------------------------------------------------------------------------

def jet_symbol(i: int, j: int, dependent: str = "u", axes: Tuple[str, str] = ("x", "y")) -> Symbol:
    """Símbolo de la coordenada ∂^{i+j}u/∂x^i∂y^j: u, u_x, u_xy, ..."""
    suffix = axes[0] * i + axes[1] * j
    return Symbol(f"{dependent}_{suffix}" if suffix else dependent)


def jet_index(
    symbol: Symbol, dependent: str = "u", axes: Tuple[str, str] = ("x", "y")
) -> Optional[Tuple[int, int]]:
    """Multi-índice de un símbolo de jet, o None si no es coordenada de jet."""
    if not isinstance(symbol, Symbol):
        return None
    name = symbol.name
    if name == dependent:
        return (0, 0)
    prefix = dependent + "_"
    if not name.startswith(prefix):
        return None
    suffix = name[len(prefix):]
    if not suffix or set(suffix) - set(axes):
        return None
    return (suffix.count(axes[0]), suffix.count(axes[1]))


U_X = jet_symbol(1, 0)
U_Y = jet_symbol(0, 1)
U_XY = jet_symbol(1, 1)


# ---------------------------------------------------------------------------
# Símbolos de función opacos
# ---------------------------------------------------------------------------

class OpaqueApp(Function):
    """Aplicación de un símbolo de función opaco con multi-índice de derivación."""

    function_symbol: "FunctionSymbol" = None
    multi_index: Tuple[int, ...] = ()

    def fdiff(self, argindex=1):
        index = list(self.multi_index)
        index[argindex - 1] += 1
        return self.function_symbol.applied(tuple(index))(*self.args)


_APPLIED_CLASSES: Dict[Tuple["FunctionSymbol", Tuple[int, ...]], type] = {}


class FunctionSymbol(BaseModel):
    """
    Símbolo de función declarado: nombre y argumentos.

    `primitive_of` marca una antiderivada: (símbolo base, ranura). Derivar una
    primitiva en su ranura devuelve el símbolo base.
    """
    model_config = ConfigDict(frozen=True)

    name: str
    args: Tuple[str, ...]
    primitive_of: Optional[Tuple["FunctionSymbol", int]] = None

    def __init__(
        self,
        name: str,
        args: Sequence[str],
        primitive_of: Optional[Tuple["FunctionSymbol", int]] = None,
    ):
        super().__init__(name=name, args=tuple(args), primitive_of=primitive_of)

    @field_validator("args")
    @classmethod
    def _needs_arguments(cls, value: Tuple[str, ...], info) -> Tuple[str, ...]:
        if not value:
            raise InvalidInputError(f"El símbolo {info.data.get('name')} necesita al menos un argumento")
        return value

    @property
    def arity(self) -> int:
        return len(self.args)

    @property
    def arg_symbols(self) -> Tuple[Symbol, ...]:
        return tuple(Symbol(a) for a in self.args)

    @property
    def labels(self) -> Tuple[str, ...]:
        """Etiquetas de sufijo de derivada: u_x se escribe ux (F_uxux)."""
        return tuple(a.replace("_", "") for a in self.args)

    def class_name(self, index: Tuple[int, ...]) -> str:
        suffix = "".join(label * count for label, count in zip(self.labels, index))
        return f"{self.name}_{suffix}" if suffix else self.name

    def parse_suffix(self, suffix: str) -> Optional[Tuple[int, ...]]:
        """Lee un sufijo de derivada (p.ej. 'uu', 'xy') como multi-índice."""
        counts = [0] * self.arity
        pos = 0
        while pos < len(suffix):
            best = None
            for k, label in enumerate(self.labels):
                if suffix.startswith(label, pos) and (best is None or len(label) > len(self.labels[best])):
                    best = k
            if best is None:
                return None
            counts[best] += 1
            pos += len(self.labels[best])
        return tuple(counts)

    def applied(self, index: Optional[Tuple[int, ...]] = None) -> type:
        """Clase sympy para este símbolo con el multi-índice dado."""
        index = tuple(index) if index is not None else (0,) * self.arity
        if len(index) != self.arity:
            raise ArityError(f"{self.name} espera multi-índice de longitud {self.arity}")
        if self.primitive_of is not None:
            base, slot = self.primitive_of
            if index[slot] > 0:
                folded = list(index)
                folded[slot] -= 1
                return base.applied(tuple(folded))
        key = (self, index)
        cls = _APPLIED_CLASSES.get(key)
        if cls is None:
            cls = type(
                self.class_name(index),
                (OpaqueApp,),
                {"function_symbol": self, "multi_index": index, "nargs": self.arity},
            )
            _APPLIED_CLASSES[key] = cls
        return cls

    def __call__(self, *args, index: Optional[Tuple[int, ...]] = None) -> Expr:
        if len(args) != self.arity:
            raise ArityError(f"{self.name} espera {self.arity} argumentos, recibió {len(args)}")
        return self.applied(index)(*[sympy.sympify(a) for a in args])

    def at_declared(self, index: Optional[Tuple[int, ...]] = None) -> Expr:
        """Aplicación sobre los propios argumentos declarados: F(u), h(x, y)."""
        return self(*self.arg_symbols, index=index)

    def derivative(self, **counts: int) -> Expr:
        """Atajo: h.derivative(x=1, y=1) es h_xy(x, y)."""
        index = tuple(counts.get(a, 0) for a in self.args)
        return self.at_declared(index)

    def primitive(self, slot: int = 0) -> "FunctionSymbol":
        """Antiderivada en la ranura `slot`: Fint con derive(Fint, u) = F."""
        return FunctionSymbol(f"{self.name}int", self.args, primitive_of=(self, slot))

    @property
    def declaration(self) -> str:
        if self.primitive_of is not None:
            base, slot = self.primitive_of
            return f"{base.declaration} prim {base.name} {slot + 1};"
        return f"func {self.name}({', '.join(self.args)});"


def opaque_apps(e: Expr) -> Set[OpaqueApp]:
    return sympy.sympify(e).atoms(OpaqueApp)


def function_symbols(e: Expr) -> Set[FunctionSymbol]:
    return {app.function_symbol for app in opaque_apps(e)}


# ---------------------------------------------------------------------------
# Declaraciones y parser
# ---------------------------------------------------------------------------

class Declarations(BaseModel):
    """Contexto de parseo: funciones, parámetros y variables declarados"""
    functions: Dict[str, FunctionSymbol] = Field(default_factory=dict)
    parameters: Set[str] = Field(default_factory=set)
    variables: Set[str] = Field(default_factory=lambda: set(DEFAULT_VARIABLES))

    def declare(self, symbol: FunctionSymbol) -> FunctionSymbol:
        if symbol.name in RESERVED:
            raise InvalidInputError(f"'{symbol.name}' es una palabra reservada")
        self.functions[symbol.name] = symbol
        for arg in symbol.args:
            if jet_index(Symbol(arg)) is None:
                self.variables.add(arg)
        return symbol

    def is_variable(self, symbol: Symbol) -> bool:
        return symbol.name in self.variables or jet_index(symbol) is not None


_TOKEN_RE = re.compile(
    r"(?P<num>\d+(?:\.\d+)?)"
    r"|(?P<ident>[A-Za-z][A-Za-z0-9]*(?:_[A-Za-z0-9]+)?)"
    r"|(?P<op>[-+*/^(),;])"
)


class _Token(NamedTuple):
    kind: str
    text: str
    offset: int


def _tokenize(text: str) -> List[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            raise ParseError(f"Carácter inesperado '{text[pos]}'", _byte_offset(text, pos))
        kind = match.lastgroup
        tokens.append(_Token(kind, match.group(kind), _byte_offset(text, pos)))
        pos = match.end()
    tokens.append(_Token("end", "", _byte_offset(text, len(text))))
    return tokens


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


_ELEMENTARY = {
    "exp": sympy.exp,
    "ln": sympy.log,
    "sin": sympy.sin,
    "cos": sympy.cos,
    "sqrt": sympy.sqrt,
}


class _Parser:
    """Descenso recursivo: cabecera de declaraciones y luego la expresión."""

    def __init__(self, text: str, declarations: Declarations):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.decl = declarations

    @property
    def current(self) -> _Token:
        return self.tokens[self.pos]

    def _advance(self) -> _Token:
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def _expect(self, text: str) -> _Token:
        if self.current.text != text or self.current.kind == "end":
            found = self.current.text or "fin de entrada"
            raise ParseError(f"Se esperaba '{text}' y se encontró '{found}'", self.current.offset)
        return self._advance()

    def _expect_ident(self) -> _Token:
        if self.current.kind != "ident":
            raise ParseError("Se esperaba un identificador", self.current.offset)
        return self._advance()

    def parse(self) -> Expr:
        self._header()
        expr = self._expr()
        if self.current.kind != "end":
            raise ParseError(f"Símbolo inesperado '{self.current.text}'", self.current.offset)
        return expr

    # -- cabecera -----------------------------------------------------------

    def _header(self):
        while self.current.kind == "ident" and self.current.text in ("func", "param", "var", "prim"):
            keyword = self._advance().text
            if keyword == "func":
                name = self._expect_ident().text
                self._expect("(")
                args = [self._expect_ident().text]
                while self.current.text == ",":
                    self._advance()
                    args.append(self._expect_ident().text)
                self._expect(")")
                args = [self._normalize_jet_name(a) for a in args]
                self.decl.declare(FunctionSymbol(name, tuple(args)))
            elif keyword == "prim":
                token = self._expect_ident()
                base = self.decl.functions.get(token.text)
                if base is None:
                    raise ParseError(f"'{token.text}' no está declarado", token.offset)
                slot = 1
                if self.current.kind == "num":
                    slot = int(self._advance().text)
                if not 1 <= slot <= base.arity:
                    raise ArityError(f"Ranura {slot} fuera de rango para {base.name}")
                self.decl.declare(base.primitive(slot - 1))
            else:
                names = [self._expect_ident().text]
                while self.current.text == ",":
                    self._advance()
                    names.append(self._expect_ident().text)
                target = self.decl.parameters if keyword == "param" else self.decl.variables
                target.update(names)
            self._expect(";")

    @staticmethod
    def _normalize_jet_name(name: str) -> str:
        index = jet_index(Symbol(name))
        return jet_symbol(*index).name if index is not None else name

    # -- expresiones ----------------------------------------------------------

    def _expr(self) -> Expr:
        result = self._term()
        while self.current.text in ("+", "-") and self.current.kind == "op":
            op = self._advance().text
            rhs = self._term()
            result = result + rhs if op == "+" else result - rhs
        return result

    def _term(self) -> Expr:
        result = self._unary()
        while self.current.text in ("*", "/") and self.current.kind == "op":
            op = self._advance().text
            rhs = self._unary()
            result = result * rhs if op == "*" else result / rhs
        return result

    def _unary(self) -> Expr:
        if self.current.kind == "op" and self.current.text in ("-", "+"):
            op = self._advance().text
            operand = self._unary()
            return -operand if op == "-" else operand
        return self._power()

    def _power(self) -> Expr:
        base = self._atom()
        if self.current.kind == "op" and self.current.text == "^":
            self._advance()
            return Pow(base, self._unary())
        return base

    def _atom(self) -> Expr:
        token = self.current
        if token.kind == "num":
            self._advance()
            return Rational(token.text)
        if token.kind == "op" and token.text == "(":
            self._advance()
            inner = self._expr()
            self._expect(")")
            return inner
        if token.kind == "ident":
            self._advance()
            return self._identifier(token)
        found = token.text or "fin de entrada"
        raise ParseError(f"Símbolo inesperado '{found}'", token.offset)

    def _call_args(self) -> List[Expr]:
        self._expect("(")
        args = [self._expr()]
        while self.current.text == ",":
            self._advance()
            args.append(self._expr())
        self._expect(")")
        return args

    def _identifier(self, token: _Token) -> Expr:
        name = token.text
        if name in RESERVED:
            if name not in _ELEMENTARY:
                raise ParseError(f"Palabra reservada '{name}' fuera de la cabecera", token.offset)
            args = self._call_args()
            if len(args) != 1:
                raise ArityError(f"{name} espera un argumento")
            return _ELEMENTARY[name](args[0])

        has_call = self.current.kind == "op" and self.current.text == "("
        symbol, index = self._resolve_function(name)

        if has_call:
            args = self._call_args()
            if symbol is None:
                arg_names = tuple(
                    a.name if isinstance(a, Symbol) else f"t{k + 1}" for k, a in enumerate(args)
                )
                if len(set(arg_names)) != len(arg_names):
                    arg_names = tuple(f"t{k + 1}" for k in range(len(args)))
                symbol = self.decl.declare(FunctionSymbol(name, arg_names))
                index = None
            if len(args) != symbol.arity:
                raise ArityError(
                    f"{symbol.name} espera {symbol.arity} argumentos, recibió {len(args)}",
                    {"offset": token.offset},
                )
            return symbol(*args, index=index)

        if symbol is not None:
            return symbol.at_declared(index)

        jet = jet_index(Symbol(name))
        if jet is not None:
            return jet_symbol(*jet)
        if name not in self.decl.variables:
            self.decl.parameters.add(name)
        return Symbol(name)

    def _resolve_function(self, name: str):
        if name in self.decl.functions:
            return self.decl.functions[name], None
        if "_" in name:
            base, suffix = name.split("_", 1)
            symbol = self.decl.functions.get(base)
            if symbol is not None:
                index = symbol.parse_suffix(suffix)
                if index is not None:
                    return symbol, index
        return None, None


def parse(text: str, declarations: Optional[Declarations] = None) -> Expr:
    """
    Parsea una expresión de la gramática y la devuelve canonizada.

    Args:
        text: Texto con cabecera opcional (`func F(u); param alpha;`) y expresión
        declarations: Contexto a reutilizar; se actualiza con lo declarado

    Returns:
        Expresión sympy canónica
    """
    declarations = declarations if declarations is not None else Declarations()
    return canonicalize(_Parser(text, declarations).parse())


def parse_with_declarations(text: str) -> Tuple[Expr, Declarations]:
    declarations = Declarations()
    return parse(text, declarations), declarations


# ---------------------------------------------------------------------------
# Forma canónica, derivación y sustitución
# ---------------------------------------------------------------------------

def canonicalize(e) -> Expr:
    """Forma canónica: expansión completa con términos semejantes agrupados."""
    return sympy.expand(sympy.sympify(e))


def derive(e: Expr, v: Symbol) -> Expr:
    return canonicalize(sympy.diff(e, v))


Binding = Union[Symbol, str, FunctionSymbol, OpaqueApp]


def substitute(e: Expr, bindings: Mapping[Binding, Expr]) -> Expr:
    """
    Reemplazo simultáneo y canonización.

    Las claves pueden ser variables/parámetros o símbolos de función; para un
    símbolo de función el valor es su cuerpo en términos de sus argumentos y
    también se reescriben sus aplicaciones derivadas.
    """
    symbol_map: Dict[Symbol, Expr] = {}
    function_map: Dict[FunctionSymbol, Expr] = {}
    for key, value in bindings.items():
        value = sympy.sympify(value)
        if isinstance(key, FunctionSymbol):
            function_map[key] = value
        elif isinstance(key, OpaqueApp):
            function_map[key.function_symbol] = value
        elif isinstance(key, str):
            symbol_map[Symbol(key)] = value
        elif isinstance(key, Symbol):
            symbol_map[key] = value
        else:
            raise InvalidInputError(f"Clave de sustitución no soportada: {key!r}")

    _check_acyclic(function_map)

    result = sympy.sympify(e)
    if function_map:
        result = _replace_functions(result, function_map)
    if symbol_map:
        result = result.xreplace(symbol_map)
    return canonicalize(result)


def _check_acyclic(function_map: Mapping[FunctionSymbol, Expr]):
    bound = set(function_map)
    graph = {
        symbol: {s for s in function_symbols(value) if s in bound or _primitive_base(s) in bound}
        for symbol, value in function_map.items()
    }

    visiting: Set[FunctionSymbol] = set()
    done: Set[FunctionSymbol] = set()

    def visit(node):
        if node in done:
            return
        if node in visiting:
            raise CircularBindingError(f"Sustitución circular en {node.name}")
        visiting.add(node)
        for nxt in graph.get(_primitive_base(node) or node, ()):
            visit(_primitive_base(nxt) or nxt)
        visiting.discard(node)
        done.add(node)

    for symbol in graph:
        visit(symbol)


def _primitive_base(symbol: FunctionSymbol) -> Optional[FunctionSymbol]:
    return symbol.primitive_of[0] if symbol.primitive_of is not None else None


def _replace_functions(e: Expr, function_map: Mapping[FunctionSymbol, Expr]) -> Expr:
    def matches(node):
        if not isinstance(node, OpaqueApp):
            return False
        symbol = node.function_symbol
        return symbol in function_map or _primitive_base(symbol) in function_map

    def expand_app(node):
        symbol = node.function_symbol
        if symbol in function_map:
            body = function_map[symbol]
        else:
            base, slot = symbol.primitive_of
            body = antiderivative(function_map[base], base.arg_symbols[slot])
        for arg, count in zip(symbol.arg_symbols, node.multi_index):
            if count:
                body = sympy.diff(body, arg, count)
        return body.xreplace(dict(zip(symbol.arg_symbols, node.args)))

    return e.replace(matches, expand_app)


# ---------------------------------------------------------------------------
# Decisión de igualdad
# ---------------------------------------------------------------------------

def probe(e: Expr, trials: Optional[int] = None, seed: Optional[int] = None) -> Verdict:
    """
    Evalúa `e` en puntos racionales aleatorios, con los símbolos opacos
    reemplazados por polinomios aleatorios cuyo grado supera en
    _PROBE_DEGREE_MARGIN al mayor orden de derivada presente en `e`.
    Los símbolos que aparecen en exponentes toman valores enteros.

    Returns:
        HOLDS si todas las evaluaciones dan exactamente 0, FAILS si alguna es
        distinta de 0, UNDECIDED si alguna sólo se anula numéricamente o se
        agota el presupuesto de redibujos.
    """
    settings = get_settings().engine
    trials = trials or settings.probe_trials
    rng = np.random.default_rng(settings.probe_seed if seed is None else seed)

    e = sympy.sympify(e)
    functions = function_symbols(e)
    degrees = {symbol: order + _PROBE_DEGREE_MARGIN for symbol, order in _derivative_orders(e).items()}
    symbols = sorted(e.free_symbols, key=lambda s: s.name)
    in_exponents = _exponent_symbols(e)

    exact = inexact = draws = 0
    while exact + inexact < trials:
        draws += 1
        if draws > settings.probe_redraw_budget:
            logger.warning("probe_budget_exhausted", trials=trials, exact=exact, inexact=inexact)
            return Verdict.UNDECIDED
        bodies = _random_bodies(functions, degrees, rng)
        point = {
            s: _random_integer(rng) if s in in_exponents else _random_rational(rng)
            for s in symbols
        }
        try:
            value = _replace_functions(e, bodies) if bodies else e
            value = value.xreplace(point)
            value = sympy.sympify(value).doit()
        except (ZeroDivisionError, ValueError):
            continue
        if _is_singular(value):
            continue
        if value == 0:
            exact += 1
            continue
        if value.is_Rational:
            return Verdict.FAILS
        numeric = sympy.N(value, 50)
        if not numeric.is_number or numeric.has(sympy.I):
            continue
        if abs(numeric) > sympy.Float("1e-30"):
            return Verdict.FAILS
        inexact += 1

    return Verdict.HOLDS if inexact == 0 else Verdict.UNDECIDED


_PROBE_DEGREE_MARGIN = 3


def _derivative_orders(e: Expr) -> Dict[FunctionSymbol, int]:
    """Mayor orden total de derivada por símbolo; las primitivas cuentan sobre su base."""
    orders: Dict[FunctionSymbol, int] = {}
    for app in opaque_apps(e):
        symbol = _primitive_base(app.function_symbol) or app.function_symbol
        orders[symbol] = max(orders.get(symbol, 0), sum(app.multi_index))
    return orders


def _exponent_symbols(e: Expr) -> Set[Symbol]:
    found: Set[Symbol] = set()
    for node in e.atoms(Pow):
        found |= node.exp.free_symbols
    return found


def _random_rational(rng: np.random.Generator) -> Rational:
    numerator = int(rng.integers(1, 10))
    denominator = int(rng.integers(1, 6))
    sign = -1 if rng.random() < 0.3 else 1
    return Rational(sign * numerator, denominator)


def _random_integer(rng: np.random.Generator) -> sympy.Integer:
    return sympy.Integer(int(rng.integers(-3, 7)))


def _random_polynomial(args: Tuple[Symbol, ...], degree: int, rng: np.random.Generator) -> Expr:
    monomials = [
        Mul(*combo)
        for d in range(degree + 1)
        for combo in itertools.combinations_with_replacement(args, d)
    ]
    coefficients = [int(c) for c in rng.integers(-4, 5, size=len(monomials))]
    # el monomio líder args[0]**degree nunca se anula
    leading = monomials.index(args[0] ** degree)
    if coefficients[leading] == 0:
        coefficients[leading] = 1
    return Add(*[c * m for c, m in zip(coefficients, monomials)])


def _random_bodies(
    functions: Iterable[FunctionSymbol],
    degrees: Mapping[FunctionSymbol, int],
    rng: np.random.Generator,
) -> Dict[FunctionSymbol, Expr]:
    bodies: Dict[FunctionSymbol, Expr] = {}
    # las primitivas fijan primero su polinomio; el símbolo base es su derivada
    for symbol in sorted(functions, key=lambda s: (s.primitive_of is None, s.name)):
        base = _primitive_base(symbol)
        if base is not None:
            if base not in bodies:
                degree = degrees.get(base, _PROBE_DEGREE_MARGIN) + 1
                poly = _random_polynomial(base.arg_symbols, degree, rng)
                bodies[base] = sympy.diff(poly, base.arg_symbols[symbol.primitive_of[1]])
        elif symbol not in bodies:
            degree = degrees.get(symbol, _PROBE_DEGREE_MARGIN)
            bodies[symbol] = _random_polynomial(symbol.arg_symbols, degree, rng)
    return bodies


def _is_singular(value: Expr) -> bool:
    if value.has(sympy.zoo, sympy.nan, sympy.oo, -sympy.oo, sympy.I):
        return True
    for node in value.atoms(sympy.log):
        if node.args[0].is_nonpositive:
            return True
    for node in value.atoms(Pow):
        if node.base.is_negative and not node.exp.is_integer:
            return True
    return False


_SIMPLIFY_OPS_LIMIT = 400


def decide_zero(e: Expr, trials: Optional[int] = None) -> Verdict:
    """
    Decide si `e` es idénticamente 0: canonización, reescritura trigonométrica,
    cancelación racional, simplificación y por último el sondeo.
    """
    candidate = canonicalize(e)
    if candidate == 0:
        return Verdict.HOLDS

    if candidate.has(sympy.sin, sympy.cos):
        rewritten = canonicalize(candidate.rewrite(sympy.exp))
        if rewritten == 0 or sympy.cancel(sympy.together(rewritten)) == 0:
            return Verdict.HOLDS

    if sympy.cancel(sympy.together(candidate)) == 0:
        return Verdict.HOLDS

    if sympy.count_ops(candidate) < _SIMPLIFY_OPS_LIMIT and sympy.simplify(candidate) == 0:
        return Verdict.HOLDS

    verdict = probe(candidate, trials)
    logger.debug("probe_fallback", verdict=verdict.value)
    return verdict


def probe_equal(a: Expr, b: Expr, trials: Optional[int] = None) -> bool:
    difference = canonicalize(sympy.sympify(a) - sympy.sympify(b))
    if difference == 0:
        return True
    return probe(difference, trials) is Verdict.HOLDS


def proportionality_factor(a: Expr, b: Expr) -> Optional[Expr]:
    """Constante c ≠ 0 con a = c·b, o None si no son proporcionales."""
    a, b = canonicalize(a), canonicalize(b)
    if a == 0 or b == 0:
        return None
    ratio = sympy.cancel(sympy.together(a / b))
    if ratio.is_number and ratio != 0:
        return ratio
    return None


# ---------------------------------------------------------------------------
# Antiderivadas
# ---------------------------------------------------------------------------

def antiderivative(e: Expr, v: Symbol) -> Expr:
    """
    Antiderivada respecto de `v` con el conjunto de reglas del núcleo:
    linealidad, potencias, 1/v → ln, exp de argumento lineal y aplicaciones
    opacas por cambio de variable (F(u) → Fint(u), V(x, p(z)) p'(z) → Vint).
    Si ninguna regla aplica se recurre a sympy.integrate.
    """
    e = canonicalize(e)
    return canonicalize(Add(*[_integrate_term(t, v) for t in Add.make_args(e)]))


def _integrate_term(term: Expr, v: Symbol) -> Expr:
    if not term.has(v):
        return term * v
    coeff, rest = term.as_independent(v, as_Add=False)

    if rest == v:
        return coeff * v**2 / 2
    if rest.is_Pow and rest.base == v and not rest.exp.has(v):
        if rest.exp == -1:
            return coeff * sympy.log(v)
        return coeff * v ** (rest.exp + 1) / (rest.exp + 1)
    if isinstance(rest, sympy.exp):
        slope = sympy.diff(rest.args[0], v)
        if slope != 0 and not slope.has(v):
            return coeff * rest / slope

    opaque = _integrate_opaque(rest, v)
    if opaque is not None:
        return coeff * opaque

    result = sympy.integrate(term, v)
    if result.has(sympy.Integral) or result.has(sympy.Piecewise):
        raise IntegrationIncapableError(f"No hay antiderivada cerrada para {render(term)} en {v}")
    return result


def _integrate_opaque(rest: Expr, v: Symbol) -> Optional[Expr]:
    for factor in Mul.make_args(rest):
        if not isinstance(factor, OpaqueApp):
            continue
        slots = [k for k, a in enumerate(factor.args) if a.has(v)]
        if len(slots) != 1:
            continue
        slot = slots[0]
        inner = factor.args[slot]
        ratio = sympy.cancel(sympy.together((rest / factor) / sympy.diff(inner, v)))
        if ratio.has(v):
            continue
        symbol = factor.function_symbol
        index = list(factor.multi_index)
        if index[slot] > 0:
            index[slot] -= 1
            app = symbol.applied(tuple(index))(*factor.args)
        else:
            app = symbol.primitive(slot).applied(tuple(index))(*factor.args)
        return ratio * app
    return None


# ---------------------------------------------------------------------------
# Impresión y serialización
# ---------------------------------------------------------------------------

class GrammarPrinter(StrPrinter):
    """Imprime en la gramática de entrada: ^, ln y sufijos de derivada."""

    def _print_log(self, expr):
        return f"ln({self._print(expr.args[0])})"

    def _print_Exp1(self, expr):
        return "exp(1)"

    def _print_OpaqueApp(self, expr):
        name = type(expr).__name__
        if expr.args == expr.function_symbol.arg_symbols:
            return name
        return f"{name}({', '.join(self._print(a) for a in expr.args)})"


def render(e: Expr) -> str:
    return GrammarPrinter().doprint(sympy.sympify(e)).replace("**", "^")


def declarations_header(*exprs: Expr) -> str:
    """Cabecera `func ...; prim ...;` para que el texto de `render` se vuelva a parsear igual."""
    symbols: Set[FunctionSymbol] = set()
    for e in exprs:
        symbols |= function_symbols(e)

    statements: List[str] = []
    for symbol in sorted(symbols, key=lambda s: (s.primitive_of is not None, s.name, s.args)):
        base = _primitive_base(symbol)
        if base is None:
            wanted = [symbol.declaration]
        else:
            wanted = [base.declaration, f"prim {base.name} {symbol.primitive_of[1] + 1};"]
        statements += [s for s in wanted if s not in statements]
    return " ".join(statements)


def render_standalone(e: Expr) -> str:
    header = declarations_header(e)
    return f"{header} {render(e)}" if header else render(e)


def to_json_tree(e: Expr, declarations: Optional[Declarations] = None) -> dict:
    """Árbol JSON estable con campos kind/children/value."""
    declarations = declarations or Declarations()
    e = sympy.sympify(e)

    def node(kind, children=(), value=None):
        return {"kind": kind, "children": [to_json_tree(c, declarations) for c in children], "value": value}

    if e.is_Rational:
        return node("RationalConst", value=str(e))
    if e is sympy.E:
        return node("Exp", [sympy.Integer(1)])
    if isinstance(e, Symbol):
        kind = "Var" if declarations.is_variable(e) else "Parameter"
        return node(kind, value=e.name)
    if isinstance(e, OpaqueApp):
        symbol = e.function_symbol
        base = _primitive_base(symbol)
        value = {"name": symbol.name, "args": list(symbol.args), "index": list(e.multi_index)}
        if base is not None:
            value["primitive_of"] = {"name": base.name, "slot": symbol.primitive_of[1]}
        return node("FuncApp", e.args, value)
    if e.is_Add:
        return node("Sum", sympy.Add.make_args(e))
    if e.is_Mul:
        return node("Product", sympy.Mul.make_args(e))
    if e.is_Pow:
        return node("Power", (e.base, e.exp))
    for kind, cls in (("Exp", sympy.exp), ("Ln", sympy.log), ("Sin", sympy.sin), ("Cos", sympy.cos)):
        if isinstance(e, cls):
            return node(kind, e.args)
    raise InvalidInputError(f"Nodo no serializable: {type(e).__name__}")


def from_json_tree(tree: dict) -> Expr:
    kind = tree["kind"]
    children = [from_json_tree(c) for c in tree.get("children", [])]
    value = tree.get("value")
    if kind == "RationalConst":
        return Rational(value)
    if kind in ("Var", "Parameter"):
        return Symbol(value)
    if kind == "FuncApp":
        symbol = FunctionSymbol(value["name"], tuple(value["args"]))
        if "primitive_of" in value:
            base = FunctionSymbol(value["primitive_of"]["name"], tuple(value["args"]))
            symbol = base.primitive(value["primitive_of"]["slot"])
        return symbol.applied(tuple(value["index"]))(*children)
    if kind == "Sum":
        return Add(*children)
    if kind == "Product":
        return Mul(*children)
    if kind == "Power":
        return Pow(children[0], children[1])
    elementary = {"Exp": sympy.exp, "Ln": sympy.log, "Sin": sympy.sin, "Cos": sympy.cos}
    if kind in elementary:
        return elementary[kind](children[0])
    raise InvalidInputError(f"Tipo de nodo desconocido: {kind}")
