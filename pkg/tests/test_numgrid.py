"""
Tests de la verificación numérica: marcha de Goursat, residuos y órdenes
"""
import math

import numpy as np
import pytest
from pydantic import ValidationError

from src.claws import FluxVector
from src.config import get_settings
from src.errors import CatalogError, DivergenceError, InvalidInputError
from src.numgrid import (
    ConvergenceReport,
    GoursatProblem,
    GridSolution,
    conservation_residual,
    convergence_study,
    solve_goursat,
)


def _problem(**overrides) -> GoursatProblem:
    data = {
        "name": "linear",
        "F": "0",
        "f": "x",
        "g": "1 + y",
        "x_range": (1, 2),
        "y_range": (0, 1),
        "exact": "x + y",
    }
    data.update(overrides)
    return GoursatProblem(**data)


class TestGoursatProblem:
    def test_incompatible_corner(self):
        with pytest.raises(ValidationError):
            _problem(g="2 + y")

    def test_decreasing_range(self):
        with pytest.raises(ValidationError):
            _problem(x_range=(2, 1))

    def test_minimum_grid(self):
        with pytest.raises(ValidationError):
            _problem(nx=2)

    def test_catalog_problem(self):
        problem = GoursatProblem.from_catalog("liouville")
        assert problem.x_range == (1.0, 2.0)
        assert problem.default_flux() is not None

    def test_unknown_catalog_problem(self):
        with pytest.raises(CatalogError):
            GoursatProblem.from_catalog("nope")

    def test_from_file(self, data_dir):
        problem = GoursatProblem.from_file(data_dir / "problems" / "flat.json")
        assert problem.name == "flat"

    def test_missing_file(self, tmp_path):
        with pytest.raises(CatalogError):
            GoursatProblem.from_file(tmp_path / "missing.json")


class TestSolveGoursat:
    def test_linear_data_is_exact(self):
        problem = _problem()
        sol = solve_goursat(problem)
        exact = problem.exact_solution(sol.x, sol.y)
        assert np.max(np.abs(sol.u - exact)) < 1e-12

    def test_boundaries_are_kept(self):
        problem = _problem(F="u_x^2", f="x", g="1")
        sol = solve_goursat(problem)
        np.testing.assert_allclose(sol.u[:, 0], sol.x)
        np.testing.assert_allclose(sol.u[0, :], 1.0)

    def test_constant_forcing(self):
        problem = _problem(F="2", f="0", g="0", x_range=(0, 1), y_range=(0, 1), exact="2*x*y")
        sol = solve_goursat(problem)
        assert np.max(np.abs(sol.u - problem.exact_solution(sol.x, sol.y))) < 1e-12
        np.testing.assert_allclose(sol.u_xy, 2.0)

    def test_opaque_F_rejected(self):
        with pytest.raises(InvalidInputError):
            solve_goursat(_problem(F="func F(u); F"))

    def test_unbound_parameter_rejected(self):
        with pytest.raises(InvalidInputError):
            solve_goursat(_problem(F="alpha*u"))

    def test_blow_up(self):
        problem = _problem(F="u^3", f="10", g="10", x_range=(0, 1), y_range=(0, 1), exact=None)
        with pytest.raises(DivergenceError) as info:
            solve_goursat(problem)
        assert len(info.value.cell) == 2

    def test_liouville_error_is_second_order(self):
        problem = GoursatProblem.from_catalog("liouville")
        errors = []
        for n in (16, 32):
            sol = solve_goursat(problem.with_grid(n))
            errors.append(np.max(np.abs(sol.u - problem.exact_solution(sol.x, sol.y))))
        assert math.log2(errors[0] / errors[1]) > 1.8


class TestConservationResidual:
    def test_constant_flux_is_exactly_conserved(self):
        sol = solve_goursat(GoursatProblem.from_catalog("liouville").with_grid(16))
        result = conservation_residual(sol, FluxVector(phi="1", psi="1"))
        assert result.residual_norm == 0.0
        assert result.masked_fraction == 0.0

    def test_unevaluable_flux_is_masked(self):
        sol = solve_goursat(GoursatProblem.from_catalog("ux_squared").with_grid(16))
        result = conservation_residual(sol, FluxVector(phi="-u", psi="ln(u_x)"))
        assert result.masked_fraction == 1.0
        assert math.isnan(result.residual_norm)

    def test_order_from_refined_grid(self):
        problem = GoursatProblem.from_catalog("liouville")
        coarse = solve_goursat(problem.with_grid(16))
        fine = solve_goursat(problem.with_grid(32))
        result = conservation_residual(coarse, problem.default_flux(), refined=fine)
        assert result.order_estimate is not None and result.order_estimate > 1.5

    def test_csv_dump(self, tmp_path):
        sol = solve_goursat(_problem(nx=4, ny=4))
        path = tmp_path / "grid.csv"
        sol.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "x,y,u"
        assert len(lines) == 1 + 25


class TestGridSolution:
    def test_spacings_and_derivatives(self):
        x = np.linspace(0, 1, 5)
        y = np.linspace(0, 2, 5)
        grid_x, grid_y = np.meshgrid(x, y, indexing="ij")
        sol = GridSolution(x=x, y=y, u=grid_x * grid_y)
        assert sol.hx == 0.25 and sol.hy == 0.5
        np.testing.assert_allclose(sol.u_x, grid_y)
        np.testing.assert_allclose(sol.u_y, grid_x)


@pytest.mark.slow
class TestConvergenceStudy:
    def test_liouville(self):
        report = convergence_study(GoursatProblem.from_catalog("liouville"))
        assert report.grids == [32, 64, 128]
        assert report.order >= 1.8
        assert report.solution_order >= 1.8
        assert report.residual_norms[0] > report.residual_norms[1] > report.residual_norms[2]

    def test_ux_squared(self):
        report = convergence_study(GoursatProblem.from_catalog("ux_squared"))
        assert report.masked_fraction == 0.0
        assert report.order >= 1.8

    def test_square_plus_one_uses_self_convergence(self):
        report = convergence_study(GoursatProblem.from_catalog("square_plus_one"))
        assert report.self_convergence
        assert len(report.solution_errors) == 2
        assert report.solution_order >= 1.8
        assert report.order >= 1.8

    def test_printed_flux_does_not_converge(self):
        problem = GoursatProblem.from_catalog("square_plus_one")
        printed = FluxVector(phi="-(u^2 + 1)", psi="u_x^2/2")
        report = convergence_study(problem, printed)
        assert report.residual_norms[-1] > 1e-3


class TestConvergenceOptions:
    def test_grids_must_double(self):
        with pytest.raises(InvalidInputError):
            convergence_study(_problem(), grids=[8, 12])

    def test_default_grids_from_settings(self):
        assert get_settings().numgrid.grids == [32, 64, 128]

    def test_exact_linear_problem(self, tmp_path):
        path = tmp_path / "last.csv"
        report = convergence_study(_problem(), FluxVector(phi="u_y", psi="-u_x"), grids=[8, 16], csv_path=path)
        assert max(report.solution_errors) < 1e-12
        assert path.exists()
        data = report.to_json()
        assert isinstance(data["residual_norms"][0], str)


class TestConvergedReport:
    def _report(self, **fields) -> ConvergenceReport:
        return ConvergenceReport(problem="p", grids=[8, 16], **fields)

    def test_second_order(self):
        report = self._report(residual_norms=[4e-3, 1e-3], order=2.0, solution_errors=[4e-4, 1e-4], solution_order=2.0)
        assert report.converged()

    def test_first_order_is_rejected(self):
        assert not self._report(residual_norms=[2e-3, 1e-3], order=1.0).converged()

    def test_exact_zero_without_order(self):
        assert self._report(residual_norms=[0.0, 0.0], solution_errors=[0.0, 0.0]).converged()

    def test_fully_masked_is_rejected(self):
        nan = float("nan")
        assert not self._report(residual_norms=[nan, nan], masked_fraction=1.0).converged()

    def test_nan_norm_is_rejected(self):
        assert not self._report(residual_norms=[1e-3, float("nan")], masked_fraction=0.5).converged()

    def test_custom_order(self):
        report = self._report(residual_norms=[2e-3, 1e-3], order=1.0)
        assert report.converged(min_order=0.9)
