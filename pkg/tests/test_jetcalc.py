"""
Tests del espacio de jets: derivadas totales, prolongación, Euler y reducción
"""
import pytest
import sympy
from pydantic import ValidationError

from src.errors import InvalidInputError, OrderBoundExceeded
from src.jetcalc import (
    F_OF_U,
    F_OF_UX,
    FSpec,
    JetSpace,
    PointVectorField,
    SideRelation,
    default_space,
    euler_u,
    prolong2,
    prolong2_recursive,
    reduce_mod_equation,
    total_derivative,
)
from src.models import FamilyMode, Verdict
from src.symkernel import U, U_X, FunctionSymbol, canonicalize, decide_zero, jet_symbol, parse

U_Y = jet_symbol(0, 1)
U_XX = jet_symbol(2, 0)
U_XY = jet_symbol(1, 1)
H = FunctionSymbol("h", ("x", "y"))


class TestFSpec:
    def test_from_expr_detects_opaque_forms(self):
        assert FSpec.from_expr(parse("func F(u); F")).mode == FamilyMode.OPAQUE_U
        assert FSpec.from_expr(parse("func F(u_x); F")).mode == FamilyMode.OPAQUE_UX
        assert FSpec.from_expr(parse("exp(u)")).mode == FamilyMode.CLOSED_FORM

    def test_closed_form_cannot_use_u_y(self):
        with pytest.raises(ValidationError):
            FSpec.closed("u_y^2")

    def test_opaque_without_body(self):
        with pytest.raises(ValidationError):
            FSpec(mode=FamilyMode.OPAQUE_U, body=U)

    def test_equation(self):
        assert FSpec.closed("u_x^2").equation() == U_XY - U_X**2

    def test_dependencies(self):
        spec = FSpec.opaque_ux()
        assert spec.depends_on_ux and not spec.depends_on_u
        assert spec.variable == U_X


class TestPointVectorField:
    def test_rejects_derivative_dependence(self):
        with pytest.raises(ValidationError):
            PointVectorField(xi="u_x", eta=0, phi=0)

    def test_components_are_parsed(self):
        v = PointVectorField(xi="x", eta="-y", phi="2*u")
        assert v.components() == (sympy.Symbol("x"), -sympy.Symbol("y"), 2 * U)

    def test_scaled_and_sum(self):
        v = PointVectorField(xi="1")
        w = PointVectorField(eta="1")
        assert (v.scaled(2) + w).components() == (2, 1, 0)


class TestTotalDerivative:
    def test_jets_shift(self):
        assert total_derivative(U_X, "x") == U_XX
        assert total_derivative(U_X, "y") == U_XY

    def test_chain_rule_on_opaque(self):
        assert total_derivative(F_OF_U.at_declared(), 0) == F_OF_U.at_declared((1,)) * U_X

    def test_explicit_dependence(self):
        x = sympy.Symbol("x")
        assert total_derivative(x * U, "x") == U + x * U_X

    def test_order_bound(self):
        space = JetSpace(max_order=3)
        with pytest.raises(OrderBoundExceeded):
            space.total_derivative(jet_symbol(2, 1), 0)

    def test_unknown_axis(self):
        with pytest.raises(InvalidInputError):
            total_derivative(U, "t")


class TestProlongation:
    def test_translation_has_zero_prolongation(self):
        prolonged = prolong2(PointVectorField(xi=1))
        assert all(value == 0 for value in prolonged.coefficients.values())

    def test_scaling_of_u(self):
        prolonged = prolong2(PointVectorField(phi="u"))
        assert prolonged.coefficient((1, 1)) == U_XY

    def test_characteristic_and_recursive_agree(self):
        xi = FunctionSymbol("xi", ("x", "y", "u")).at_declared()
        eta = FunctionSymbol("eta", ("x", "y", "u")).at_declared()
        phi = FunctionSymbol("phi", ("x", "y", "u")).at_declared()
        v = PointVectorField(xi=xi, eta=eta, phi=phi)
        direct, recursive = prolong2(v), prolong2_recursive(v)
        for index, value in direct.coefficients.items():
            assert canonicalize(value - recursive.coefficient(index)) == 0

    def test_third_order_is_out_of_range(self):
        prolonged = prolong2(PointVectorField(xi=1))
        with pytest.raises(OrderBoundExceeded):
            prolonged.coefficient((2, 1))


class TestEuler:
    def test_lagrangian(self):
        assert euler_u(U_X**2 / 2) == -U_XX

    def test_null_lagrangian(self):
        divergence = total_derivative(U * U_Y, "x")
        assert euler_u(divergence) == 0

    def test_mixed_derivative(self):
        assert euler_u(U * U_XY) == 2 * U_XY


class TestReduce:
    def test_mixed_jets_are_eliminated(self):
        f = FSpec.opaque_u()
        reduced = reduce_mod_equation(jet_symbol(2, 1), f)
        assert reduced == F_OF_U.at_declared((1,)) * U_X

    def test_ux_family_higher_mixed(self):
        f = FSpec.opaque_ux()
        reduced = reduce_mod_equation(jet_symbol(2, 1), f)
        assert reduced == F_OF_UX.at_declared((1,)) * U_XX

    def test_no_mixed_jets_left(self):
        space = default_space()
        reduced = reduce_mod_equation(jet_symbol(2, 2) + jet_symbol(1, 2), FSpec.closed("exp(u)"))
        assert all(min(index) == 0 for index in space.jets_in(reduced).values())

    def test_side_relation(self):
        relation = SideRelation(symbol=H, rhs=H.at_declared())
        e = H.derivative(x=2, y=1) + H.derivative(x=1, y=1)
        assert relation.apply(e) == H.derivative(x=1) + H.at_declared()

    def test_reduced_equation_is_zero(self):
        f = FSpec.closed("u^2 + 1")
        assert decide_zero(reduce_mod_equation(f.equation(), f)) is Verdict.HOLDS


class TestTSpace:
    def test_axes_and_dependent(self):
        space = JetSpace(("z", "y"), "T")
        assert space.jet(1, 1).name == "T_zy"
        assert space.total_derivative(sympy.Symbol("T"), "z") == sympy.Symbol("T_z")
