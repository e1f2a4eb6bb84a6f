"""
Tests de leyes de conservación: multiplicadores, flujos, ecuación en T
"""
import pytest
import sympy
from pydantic import ValidationError

from src.claws import (
    ConservationLaw,
    FluxVector,
    Multiplier,
    TFunction,
    flux_residual,
    homotopy_flux,
    integrable_functions,
    invert_divergence,
    is_trivial_flux,
    load_t_functions,
    multiplier_ansatz,
    multiplier_determining_system,
    multiplier_residual,
    parse_flux,
    pure_flux,
    t_equation_residual,
    verify_claw_catalog,
    verify_t_symmetry,
    verify_t_symmetry_catalog,
)
from src.errors import IntegrationIncapableError, InvalidInputError
from src.jetcalc import F_OF_U, FSpec, PointVectorField
from src.models import Verdict
from src.symkernel import (
    U,
    U_X,
    FunctionSymbol,
    decide_zero,
    jet_symbol,
    parse,
    proportionality_factor,
    substitute,
)

U_Y = jet_symbol(0, 1)
F_OPAQUE = FSpec.opaque_u()
LIOUVILLE = FSpec.closed("exp(u)")
UX_SQUARED = FSpec.closed("u_x^2")


class TestMultiplierResidual:
    def test_u_x_is_multiplier_for_any_F(self):
        assert multiplier_residual(Multiplier(q="u_x"), F_OPAQUE) == 0

    def test_u_y_is_multiplier_for_any_F(self):
        assert multiplier_residual(Multiplier(q="u_y"), F_OPAQUE) == 0

    def test_u_is_not_multiplier_for_liouville(self):
        assert decide_zero(multiplier_residual(Multiplier(q="u"), LIOUVILLE)) is Verdict.FAILS

    def test_liouville_family_with_opaque_p(self):
        q = Multiplier(q=parse("func p(x); p_x + p*u_x"))
        assert decide_zero(multiplier_residual(q, LIOUVILLE)) is Verdict.HOLDS

    def test_ux_squared_family_with_opaque_V(self):
        q = Multiplier(q=parse("func V(x, w); x*u_x^(-2)*V(x, -(1 + u_x*y)/u_x)"))
        assert decide_zero(multiplier_residual(q, UX_SQUARED)) is Verdict.HOLDS

    def test_order(self):
        assert Multiplier(q="u_x*u").order() == 1
        assert Multiplier(q="x").order() == 0


class TestMultiplierSystem:
    def test_unknown_ansatz(self):
        with pytest.raises(InvalidInputError):
            multiplier_ansatz("uxx")

    def test_ansatz_arguments(self):
        assert multiplier_ansatz("uy").args == ("x", "y", "u", "u_y")

    def test_system_for_opaque_F(self):
        equations = multiplier_determining_system(F_OPAQUE, "ux")
        q = multiplier_ansatz("ux")
        assert equations
        # Q = u_x anula todas las ecuaciones
        for equation in equations:
            assert decide_zero(substitute(equation, {q: U_X})) is Verdict.HOLDS

    def test_system_contains_Q_u_and_u_xx_coefficient(self):
        equations = multiplier_determining_system(F_OPAQUE, "ux")
        q = multiplier_ansatz("ux")
        expected = [
            q.derivative(u=1),
            q.derivative(y=1, u_x=1) + F_OF_U.at_declared() * q.derivative(u_x=2),
        ]
        for target in expected:
            assert any(proportionality_factor(e, target) is not None for e in equations), target


class TestFluxResidual:
    def test_F_ux_corrected_flux(self):
        theta = parse_flux("-Fint", "u_x^2/2", "func F(u); prim F;")
        assert decide_zero(flux_residual(theta, Multiplier(q="u_x"), F_OPAQUE)) is Verdict.HOLDS

    def test_printed_F_ux_flux_fails(self):
        theta = parse_flux("-F", "u_x^2/2", "func F(u);")
        assert decide_zero(flux_residual(theta, Multiplier(q="u_x"), F_OPAQUE)) is Verdict.FAILS

    def test_trivial_flux(self):
        assert is_trivial_flux(FluxVector(phi="u_y", psi="-u_x"))
        assert not is_trivial_flux(FluxVector(phi="u", psi="0"))

    def test_flux_arithmetic(self):
        a = FluxVector(phi="u", psi="u_x")
        b = FluxVector(phi="u", psi="1")
        assert (a - b).phi == 0
        assert (a + b).psi == U_X + 1


class TestHomotopyFlux:
    def test_opaque_u_y(self):
        theta = homotopy_flux(Multiplier(q="u_y"), F_OPAQUE)
        assert decide_zero(flux_residual(theta, Multiplier(q="u_y"), F_OPAQUE)) is Verdict.HOLDS
        assert theta.phi == U_Y**2 / 2

    def test_liouville_differs_from_catalog_by_trivial_flux(self):
        q = Multiplier(q=parse("func p(x); p_x + p*u_x"))
        derived = homotopy_flux(q, LIOUVILLE)
        catalog = parse_flux("-exp(u)*p + p_x*u_y", "-u*p_xx + p*u_x^2/2", "func p(x);")
        assert decide_zero(flux_residual(derived, q, LIOUVILLE)) is Verdict.HOLDS
        assert is_trivial_flux(derived - catalog)

    def test_t1_multiplier_on_ux_squared(self):
        t1 = TFunction(t="beta1/(4*z^2) - alpha1/(2*z)")
        q = Multiplier(q=t1.as_multiplier().subs({"beta1": 0, "alpha1": -2}))
        theta = homotopy_flux(q, UX_SQUARED)
        assert decide_zero(flux_residual(theta, q, UX_SQUARED)) is Verdict.HOLDS
        assert theta.phi == -U

    def test_pure_option_drops_trivial_terms(self):
        theta = homotopy_flux(Multiplier(q="u_x"), FSpec.closed("u^2 + 1"), pure=True)
        assert decide_zero(flux_residual(theta, Multiplier(q="u_x"), FSpec.closed("u^2 + 1"))) is Verdict.HOLDS

    def test_non_divergence(self):
        with pytest.raises(IntegrationIncapableError):
            invert_divergence(parse("u*u_x^2*u_xx + u^3"))


class TestPureFlux:
    def test_removes_padding(self):
        padded = FluxVector(phi="-u - u^3/3 + u_y", psi="u_x^2/2 - u_x")
        pure = pure_flux(padded)
        assert pure.phi == parse("-u - u^3/3")
        assert pure.psi == parse("u_x^2/2")

    def test_keeps_nontrivial_flux(self):
        theta = FluxVector(phi="-u", psi="u_x^2/2")
        assert pure_flux(theta) == theta


class TestTEquation:
    @pytest.mark.parametrize("name", ["T1", "T2", "T3"])
    def test_catalog_solutions(self, name):
        t = load_t_functions()[name]
        assert decide_zero(t_equation_residual(t)) is Verdict.HOLDS

    def test_constant_is_not_solution(self):
        assert t_equation_residual(TFunction(t="1")) == 2

    def test_linearity(self):
        functions = load_t_functions()
        a, b = sympy.symbols("a b")
        combined = TFunction(t=a * functions["T1"].t + b * functions["T3"].t)
        assert decide_zero(t_equation_residual(combined)) is Verdict.HOLDS

    def test_rejects_jet_dependence(self):
        with pytest.raises(ValidationError):
            TFunction(t="u_x*z")

    def test_multiplier_substitutes_u_x(self):
        assert TFunction(t="1/z").as_multiplier() == 1 / U_X


class TestTSymmetries:
    def test_scaling_of_T(self):
        assert verify_t_symmetry(PointVectorField(phi="T"))

    def test_translation_in_y(self):
        assert verify_t_symmetry(PointVectorField(eta="1"))

    def test_translation_in_z_is_not_symmetry(self):
        assert not verify_t_symmetry(PointVectorField(xi="1"))

    def test_catalog(self):
        report = verify_t_symmetry_catalog()
        assert report.all_passed
        assert report.entry("bv3").details["printed_verdict"] == "fails"


@pytest.mark.slow
class TestClawCatalog:
    def test_all_laws_verify(self):
        report = verify_claw_catalog()
        assert report.all_passed, [(e.label, e.residual) for e in report.entries if not e.passed]

    def test_printed_flux_is_flagged(self):
        report = verify_claw_catalog(["F-ux", "F-uy"])
        assert len(report.entries) == 2
        for entry in report.entries:
            assert entry.details["printed_verdict"] == "fails"

    def test_theta_families_with_opaque_V(self):
        names = ["ux-squared-theta1", "ux-squared-theta2", "ux-squared-theta3"]
        report = verify_claw_catalog(names)
        assert report.passed == 3


class TestCatalogData:
    def test_law_from_record(self):
        law = ConservationLaw.from_record({
            "name": "demo",
            "declarations": "func F(u); prim F;",
            "F": "F",
            "Q": "u_x",
            "phi": "-Fint",
            "psi": "u_x^2/2",
        })
        assert law.f.is_opaque
        assert law.printed is None

    def test_integrable_functions(self):
        functions = integrable_functions()
        assert {"F": "exp(u)", "notes": "ecuación de Liouville"} in functions
        assert len(functions) == 3


def test_primitive_symbol_in_flux():
    theta = parse_flux("-Fint", "0", "func F(u); prim F;")
    primitive = next(iter(theta.phi.atoms(sympy.Function)))
    assert primitive.function_symbol.primitive_of[0] == FunctionSymbol("F", ("u",))
