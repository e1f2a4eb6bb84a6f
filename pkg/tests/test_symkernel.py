"""
Tests del núcleo simbólico: parser, derivación, sustitución, decisión de cero
"""
import pytest
import sympy
from pydantic import ValidationError

from src.errors import ArityError, CircularBindingError, IntegrationIncapableError, InvalidInputError, ParseError
from src.models import Verdict
from src.symkernel import (
    U,
    U_X,
    X,
    Y,
    FunctionSymbol,
    antiderivative,
    canonicalize,
    decide_zero,
    declarations_header,
    derive,
    from_json_tree,
    jet_index,
    jet_symbol,
    parse,
    parse_with_declarations,
    probe,
    probe_equal,
    proportionality_factor,
    render,
    render_standalone,
    substitute,
    to_json_tree,
)

F = FunctionSymbol("F", ("u",))
G = FunctionSymbol("F", ("u_x",))
H = FunctionSymbol("h", ("x", "y"))


class TestJetSymbols:
    def test_symbol_names(self):
        assert jet_symbol(0, 0).name == "u"
        assert jet_symbol(1, 1).name == "u_xy"
        assert jet_symbol(2, 1).name == "u_xxy"

    def test_index_roundtrip_other_space(self):
        symbol = jet_symbol(1, 2, "T", ("z", "y"))
        assert symbol.name == "T_zyy"
        assert jet_index(symbol, "T", ("z", "y")) == (1, 2)

    def test_non_jet(self):
        assert jet_index(sympy.Symbol("alpha")) is None
        assert jet_index(sympy.Symbol("u_q")) is None


class TestFunctionSymbol:
    def test_needs_arguments(self):
        with pytest.raises(InvalidInputError):
            FunctionSymbol("K", ())

    def test_hashable_and_equal_by_value(self):
        assert FunctionSymbol("F", ["u"]) == F
        assert {F: 1}[FunctionSymbol("F", ("u",))] == 1

    def test_frozen(self):
        with pytest.raises(ValidationError):
            F.name = "G"

    def test_primitive_declaration(self):
        _, declarations = parse_with_declarations("func F(u); prim F; Fint")
        assert declarations.functions["Fint"] == F.primitive()
        assert declarations_header(F.primitive().at_declared()) == "func F(u); prim F 1;"


class TestParse:
    def test_precedence_and_power(self):
        assert parse("2*u^2 + u_x") == 2 * U**2 + U_X

    def test_power_is_right_associative(self):
        assert parse("u^2^3") == U**8

    def test_unary_minus(self):
        assert parse("-u^2") == -(U**2)

    def test_ln_and_sqrt(self):
        assert parse("ln(x) + sqrt(y)") == sympy.log(X) + sympy.sqrt(Y)

    def test_declared_derivative_suffix(self):
        e = parse("func F(u); F_uu")
        assert e == F.at_declared((2,))

    def test_derivative_suffix_for_ux_argument(self):
        e = parse("func F(u_x); F_uxux")
        assert e == G.at_declared((2,))

    def test_undeclared_call_autodeclares(self):
        e, declarations = parse_with_declarations("h(x, y) + 1")
        assert "h" in declarations.functions
        assert e == H.at_declared() + 1

    def test_parameters_are_collected(self):
        _, declarations = parse_with_declarations("alpha*u + beta")
        assert {"alpha", "beta"} <= declarations.parameters

    def test_double_caret_reports_offset(self):
        with pytest.raises(ParseError) as info:
            parse("u_x^^2")
        assert info.value.offset == 4
        assert info.value.code == "parse_error"

    def test_unbalanced_parenthesis(self):
        with pytest.raises(ParseError):
            parse("(u + 1")

    def test_unexpected_character(self):
        with pytest.raises(ParseError) as info:
            parse("u $ 1")
        assert info.value.offset == 2

    def test_arity_mismatch(self):
        with pytest.raises(ArityError):
            parse("func F(u); F(u, x)")

    def test_prim_declaration(self):
        e = parse("func F(u); prim F; Fint")
        assert derive(e, U) == F.at_declared()


class TestDerive:
    def test_chain_rule_through_opaque(self):
        e = parse("func F(u_x); F")
        assert derive(e, U_X) == G.at_declared((1,))

    def test_product_rule(self):
        e = parse("func F(u); u*F")
        assert derive(e, U) == F.at_declared() + U * F.at_declared((1,))

    def test_composite_argument(self):
        e = F(U**2)
        assert derive(e, U) == 2 * U * F(U**2, index=(1,))

    def test_mixed_partial_of_h(self):
        assert H.derivative(x=1, y=1) == derive(derive(H.at_declared(), X), Y)


class TestSubstitute:
    def test_variable_binding(self):
        assert substitute(parse("u^2 + x"), {U: X}) == X**2 + X

    def test_function_binding_rewrites_derivatives(self):
        e = parse("func F(u); F_u*u")
        assert substitute(e, {F: sympy.exp(U)}) == U * sympy.exp(U)

    def test_simultaneous(self):
        assert substitute(parse("x + y"), {"x": Y, "y": X}) == X + Y

    def test_primitive_follows_base_binding(self):
        e = parse("func F(u); prim F; Fint")
        assert substitute(e, {F: 2 * U}) == U**2

    def test_circular_binding(self):
        K = FunctionSymbol("K", ("u",))
        with pytest.raises(CircularBindingError):
            substitute(F.at_declared(), {F: K.at_declared(), K: F.at_declared()})


class TestDecideZero:
    def test_canonical_zero(self):
        assert decide_zero(parse("(u + 1)^2 - u^2 - 2*u - 1")) is Verdict.HOLDS

    def test_trigonometric_identity(self):
        assert decide_zero(parse("sin(u)^2 + cos(u)^2 - 1")) is Verdict.HOLDS

    def test_rational_identity(self):
        assert decide_zero(parse("1/(u + 1) - 1/u + 1/(u*(u + 1))")) is Verdict.HOLDS

    def test_log_identity(self):
        assert decide_zero(parse("ln(exp(u)) - u")) is Verdict.HOLDS

    def test_nonzero(self):
        assert decide_zero(parse("u^2 + 1")) is Verdict.FAILS

    def test_opaque_nonzero(self):
        assert decide_zero(parse("func F(u); F_u*u - F")) is Verdict.FAILS

    def test_probe_is_reproducible(self):
        e = parse("func F(u); F_uu - F")
        assert probe(e, seed=7) == probe(e, seed=7) == Verdict.FAILS

    def test_probe_equal(self):
        assert probe_equal(parse("exp(2*u)"), parse("exp(u)^2"))

    def test_third_derivative_is_not_zero(self):
        assert decide_zero(parse("func F(u); F_uuu")) is Verdict.FAILS

    def test_high_order_derivative_is_not_equal_to_zero(self):
        assert not probe_equal(parse("func xi(x); xi_xxx"), 0)
        assert not probe_equal(parse("func h(x, y); h_xxyy"), 0)

    def test_primitive_of_high_order_symbol(self):
        assert decide_zero(parse("func F(u); prim F; F_uuu*Fint")) is Verdict.FAILS

    def test_symbolic_exponent_holds(self):
        e = parse("param c; (u + 1)^(c + 2) - u^2*(u + 1)^c - 2*u*(u + 1)^c - (u + 1)^c")
        assert probe(e) is Verdict.HOLDS


class TestProportionality:
    def test_factor(self):
        assert proportionality_factor(parse("-2*u_x"), parse("u_x")) == -2

    def test_not_proportional(self):
        assert proportionality_factor(parse("u"), parse("u^2")) is None

    def test_zero_is_never_proportional(self):
        assert proportionality_factor(sympy.S.Zero, U) is None


class TestAntiderivative:
    def test_power_and_log(self):
        assert antiderivative(parse("u^2 + 1/u"), U) == U**3 / 3 + sympy.log(U)

    def test_exp_linear(self):
        assert antiderivative(parse("exp(2*u)"), U) == sympy.exp(2 * U) / 2

    def test_opaque_uses_primitive(self):
        result = antiderivative(F.at_declared(), U)
        assert derive(result, U) == F.at_declared()

    def test_opaque_derivative_lowers_index(self):
        assert antiderivative(F.at_declared((2,)), U) == F.at_declared((1,))

    def test_incapable(self):
        with pytest.raises(IntegrationIncapableError):
            antiderivative(parse("u^u"), U)


class TestRender:
    def test_grammar_output(self):
        assert render(parse("ln(u)*u^2")) == "u^2*ln(u)"

    def test_standalone_reparses(self):
        e = parse("func F(u_x); u_x*F_uxux + F")
        assert parse(render_standalone(e)) == e

    def test_json_tree(self):
        e = parse("func F(u); alpha*F_u + ln(u)")
        tree = to_json_tree(e)
        assert tree["kind"] == "Sum"
        assert from_json_tree(tree) == e

    def test_json_tree_kinds(self):
        _, declarations = parse_with_declarations("alpha*x")
        tree = to_json_tree(parse("alpha*x"), declarations)
        kinds = {child["kind"] for child in tree["children"]}
        assert kinds == {"Parameter", "Var"}


def test_canonicalize_collects_terms():
    assert canonicalize(parse("u + u")) == 2 * U
