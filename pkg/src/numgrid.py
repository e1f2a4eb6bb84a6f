"""
Verificación numérica: problemas de Goursat para u_xy = F

La marcha avanza celda a celda desde las dos líneas características con
el esquema de punto medio

    u[i,j] = u[i-1,j] + u[i,j-1] - u[i-1,j-1] + hx*hy*F(xm, ym, um, pm)

donde um = (u[i-1,j] + u[i,j-1])/2 y pm es u_x en el centro de la celda,
promedio de los lados inferior y superior. Cuando F depende de u_x, el lado
superior se estima primero con el inferior y se hace una corrección.
"""
import json
import math
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import sympy
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .catalog import get_catalog
from .claws import FluxVector
from .config import get_logger, get_settings
from .errors import CatalogError, DivergenceError, InvalidInputError
from .jetcalc import FSpec
from .symkernel import U, U_X, U_Y, X, Y, Expr, OpaqueApp, parse, render

logger = get_logger(__name__)

COMPATIBILITY_TOLERANCE = 1e-12
JET_ARGUMENTS = (X, Y, U, U_X, U_Y)


def _numeric(e: Expr, variables=JET_ARGUMENTS):
    """Función numpy de (x, y, u, u_x, u_y) para una expresión cerrada."""
    e = sympy.sympify(e)
    if e.atoms(OpaqueApp):
        raise InvalidInputError(f"La expresión {render(e)} contiene funciones opacas; no es evaluable")
    stray = e.free_symbols - set(variables)
    if stray:
        raise InvalidInputError(
            f"La expresión {render(e)} tiene parámetros sin valor: {sorted(s.name for s in stray)}"
        )
    return sympy.lambdify(variables, e, modules="numpy")


class GoursatProblem(BaseModel):
    """
    Problema característico u_xy = F con u(x, y0) = f(x), u(x0, y) = g(y)
    en el rectángulo [x0, x1] × [y0, y1].
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    name: str = "goursat"
    F: str
    f: str
    g: str
    x_range: Tuple[float, float]
    y_range: Tuple[float, float]
    nx: int = Field(default=32, ge=4)
    ny: int = Field(default=32, ge=4)
    exact: Optional[str] = None
    flux: Optional[dict] = None
    notes: str = ""

    @field_validator("x_range", "y_range")
    @classmethod
    def _ordered(cls, value):
        if value[1] <= value[0]:
            raise ValueError("El intervalo debe ser creciente")
        return value

    @model_validator(mode="after")
    def _compatible(self):
        x0, y0 = self.x_range[0], self.y_range[0]
        mismatch = abs(self.boundary_x(np.array([x0]))[0] - self.boundary_y(np.array([y0]))[0])
        if not mismatch <= COMPATIBILITY_TOLERANCE:
            raise ValueError(f"Datos incompatibles en la esquina: |f(x0) - g(y0)| = {mismatch:.3e}")
        return self

    @property
    def f_spec(self) -> FSpec:
        return FSpec.from_expr(parse(self.F))

    def _boundary(self, text: str, variable: sympy.Symbol, values: np.ndarray) -> np.ndarray:
        func = _numeric(parse(text), (variable,))
        return np.broadcast_to(np.asarray(func(values), dtype=float), values.shape).copy()

    def boundary_x(self, xs: np.ndarray) -> np.ndarray:
        return self._boundary(self.f, X, xs)

    def boundary_y(self, ys: np.ndarray) -> np.ndarray:
        return self._boundary(self.g, Y, ys)

    def exact_solution(self, xs: np.ndarray, ys: np.ndarray) -> Optional[np.ndarray]:
        if self.exact is None:
            return None
        func = _numeric(parse(self.exact), (X, Y))
        grid_x, grid_y = np.meshgrid(xs, ys, indexing="ij")
        return np.broadcast_to(np.asarray(func(grid_x, grid_y), dtype=float), grid_x.shape).copy()

    def default_flux(self) -> Optional[FluxVector]:
        if not self.flux:
            return None
        return FluxVector(phi=parse(self.flux["phi"]), psi=parse(self.flux["psi"]))

    def with_grid(self, n: int) -> "GoursatProblem":
        return self.model_copy(update={"nx": n, "ny": n})

    @classmethod
    def from_file(cls, path: Path) -> "GoursatProblem":
        path = Path(path)
        if not path.exists():
            raise CatalogError(f"No existe el problema {path}", {"path": str(path)})
        with open(path, "r", encoding="utf-8") as f:
            return cls(**json.load(f))

    @classmethod
    def from_catalog(cls, name: str) -> "GoursatProblem":
        return cls(**get_catalog().problem(name))


class GridSolution(BaseModel):
    """Valores nodales u[i, j] = u(x_i, y_j) y espaciados"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    x: np.ndarray
    y: np.ndarray
    u: np.ndarray

    @property
    def hx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def hy(self) -> float:
        return float(self.y[1] - self.y[0])

    @property
    def u_x(self) -> np.ndarray:
        return np.gradient(self.u, self.hx, axis=0, edge_order=2)

    @property
    def u_y(self) -> np.ndarray:
        return np.gradient(self.u, self.hy, axis=1, edge_order=2)

    @property
    def u_xy(self) -> np.ndarray:
        """Diferencia mixta de celda (valor en los centros de celda)."""
        return (self.u[1:, 1:] - self.u[:-1, 1:] - self.u[1:, :-1] + self.u[:-1, :-1]) / (self.hx * self.hy)

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    def to_csv(self, path: Path) -> None:
        grid_x, grid_y = self.mesh()
        table = np.column_stack([grid_x.ravel(), grid_y.ravel(), self.u.ravel()])
        np.savetxt(path, table, delimiter=",", header="x,y,u", comments="", fmt="%.17g")


def solve_goursat(problem: GoursatProblem) -> GridSolution:
    """
    Marcha del esquema de punto medio sobre la malla (nx + 1) × (ny + 1).

    Raises:
        DivergenceError: si algún |u[i, j]| supera la guarda de desbordamiento
    """
    guard = get_settings().numgrid.overflow_guard
    spec = problem.f_spec
    if spec.is_opaque:
        raise InvalidInputError("El problema de Goursat necesita F en forma cerrada")
    rhs = _numeric(spec.expr, (X, Y, U, U_X))
    uses_ux = spec.depends_on_ux

    xs = np.linspace(*problem.x_range, problem.nx + 1)
    ys = np.linspace(*problem.y_range, problem.ny + 1)
    hx, hy = xs[1] - xs[0], ys[1] - ys[0]
    u = np.empty((problem.nx + 1, problem.ny + 1))
    u[:, 0] = problem.boundary_x(xs)
    u[0, :] = problem.boundary_y(ys)

    for j in range(1, problem.ny + 1):
        ym = 0.5 * (ys[j - 1] + ys[j])
        for i in range(1, problem.nx + 1):
            xm = 0.5 * (xs[i - 1] + xs[i])
            base = u[i - 1, j] + u[i, j - 1] - u[i - 1, j - 1]
            um = 0.5 * (u[i - 1, j] + u[i, j - 1])
            bottom = (u[i, j - 1] - u[i - 1, j - 1]) / hx
            value = base + hx * hy * float(rhs(xm, ym, um, bottom))
            if uses_ux:
                pm = 0.5 * (bottom + (value - u[i - 1, j]) / hx)
                value = base + hx * hy * float(rhs(xm, ym, um, pm))
            if not math.isfinite(value) or abs(value) > guard:
                logger.warning("goursat_divergence", problem=problem.name, cell=[i, j])
                raise DivergenceError(f"La marcha diverge en la celda ({i}, {j})", (i, j))
            u[i, j] = value

    logger.info("goursat_solved", problem=problem.name, nx=problem.nx, ny=problem.ny)
    return GridSolution(x=xs, y=ys, u=u)


class ConservationResidual(BaseModel):
    residual_norm: float
    order_estimate: Optional[float] = None
    masked_fraction: float = 0.0


def _divergence(sol: GridSolution, theta: FluxVector) -> np.ndarray:
    grid_x, grid_y = sol.mesh()
    args = (grid_x, grid_y, sol.u, sol.u_x, sol.u_y)
    with np.errstate(all="ignore"):
        phi = np.broadcast_to(np.asarray(_numeric(theta.phi)(*args), dtype=float), sol.u.shape)
        psi = np.broadcast_to(np.asarray(_numeric(theta.psi)(*args), dtype=float), sol.u.shape)
        divergence = np.gradient(phi, sol.hx, axis=0) + np.gradient(psi, sol.hy, axis=1)
    return divergence[1:-1, 1:-1]


def _residual(sol: GridSolution, theta: FluxVector) -> Tuple[float, float]:
    interior = _divergence(sol, theta)
    finite = np.isfinite(interior)
    masked_fraction = 1.0 - finite.sum() / interior.size
    if not finite.any():
        return math.nan, masked_fraction
    return float(np.max(np.abs(interior[finite]))), float(masked_fraction)


def _order(coarse: float, fine: float) -> Optional[float]:
    if not (coarse > 0 and fine > 0) or not (math.isfinite(coarse) and math.isfinite(fine)):
        return None
    return math.log2(coarse / fine)


def conservation_residual(
    sol: GridSolution, theta: FluxVector, refined: Optional[GridSolution] = None
) -> ConservationResidual:
    """
    Norma máxima de D_xΦ + D_yΨ por diferencias centradas en los nodos
    interiores. Los nodos donde el flujo no es evaluable se enmascaran.

    Args:
        sol: Solución de malla
        theta: Flujo a evaluar
        refined: Solución en la malla refinada a la mitad, para estimar el orden
    """
    norm, masked = _residual(sol, theta)
    order = None
    if refined is not None:
        refined_norm, refined_masked = _residual(refined, theta)
        order = _order(norm, refined_norm)
        masked = max(masked, refined_masked)
    return ConservationResidual(residual_norm=norm, order_estimate=order, masked_fraction=masked)


class ConvergenceReport(BaseModel):
    """Normas de residuo y errores por malla, con órdenes estimados"""
    problem: str
    grids: List[int]
    residual_norms: List[float] = Field(default_factory=list)
    order: Optional[float] = None
    masked_fraction: float = 0.0
    solution_errors: List[float] = Field(default_factory=list)
    solution_order: Optional[float] = None
    self_convergence: bool = False

    def to_json(self) -> dict:
        data = self.model_dump()
        # decimales en texto, sin formato dependiente de la configuración regional
        for key in ("residual_norms", "solution_errors"):
            data[key] = [repr(float(v)) for v in data[key]]
        for key in ("order", "solution_order", "masked_fraction"):
            if data[key] is not None:
                data[key] = repr(float(data[key]))
        return data

    def converged(self, min_order: Optional[float] = None, tolerance: Optional[float] = None) -> bool:
        """
        True si el residuo de conservación y el error de la solución bajan con
        orden ≥ min_order o son nulos hasta `tolerance`. Un flujo sin nodos
        evaluables o con normas NaN nunca cuenta como convergido.
        """
        settings = get_settings().numgrid
        min_order = settings.min_order if min_order is None else min_order
        tolerance = settings.exact_tolerance if tolerance is None else tolerance
        if self.residual_norms and self.masked_fraction >= 1.0:
            return False
        return all(
            _acceptable(values, order, min_order, tolerance)
            for values, order in (
                (self.residual_norms, self.order),
                (self.solution_errors, self.solution_order),
            )
        )


def _acceptable(values: List[float], order: Optional[float], min_order: float, tolerance: float) -> bool:
    if not values:
        return True
    if any(math.isnan(v) for v in values):
        return False
    if all(v <= tolerance for v in values):
        return True
    return order is not None and order >= min_order


def _self_convergence_errors(solutions: List[GridSolution]) -> List[float]:
    """max |u_N - u_2N| en los nodos comunes (Richardson)."""
    errors = []
    for coarse, fine in zip(solutions, solutions[1:]):
        step_x = (fine.u.shape[0] - 1) // (coarse.u.shape[0] - 1)
        step_y = (fine.u.shape[1] - 1) // (coarse.u.shape[1] - 1)
        errors.append(float(np.max(np.abs(coarse.u - fine.u[::step_x, ::step_y]))))
    return errors


def convergence_study(
    problem: GoursatProblem,
    theta: Optional[FluxVector] = None,
    grids: Optional[List[int]] = None,
    csv_path: Optional[Path] = None,
) -> ConvergenceReport:
    """
    Resuelve el problema en cada malla y estima los órdenes de convergencia
    del residuo de conservación y de la solución.

    Con solución exacta se usa el error máximo; sin ella, las diferencias
    entre mallas consecutivas. Las mallas deben duplicarse una a otra.
    """
    grids = list(grids or get_settings().numgrid.grids)
    if any(b != 2 * a for a, b in zip(grids, grids[1:])):
        raise InvalidInputError(f"Las mallas deben duplicarse sucesivamente: {grids}")
    theta = theta or problem.default_flux()

    solutions = [solve_goursat(problem.with_grid(n)) for n in grids]
    report = ConvergenceReport(problem=problem.name, grids=grids)

    if theta is not None:
        residuals = [_residual(sol, theta) for sol in solutions]
        report.residual_norms = [norm for norm, _ in residuals]
        report.masked_fraction = max(masked for _, masked in residuals)
        if len(residuals) >= 2:
            report.order = _order(report.residual_norms[-2], report.residual_norms[-1])

    if problem.exact is not None:
        report.solution_errors = [
            float(np.max(np.abs(sol.u - problem.exact_solution(sol.x, sol.y)))) for sol in solutions
        ]
    else:
        report.self_convergence = True
        report.solution_errors = _self_convergence_errors(solutions)
    if len(report.solution_errors) >= 2:
        report.solution_order = _order(report.solution_errors[-2], report.solution_errors[-1])

    if csv_path is not None:
        solutions[-1].to_csv(Path(csv_path))

    logger.info(
        "convergence_study",
        problem=problem.name,
        order=report.order,
        solution_order=report.solution_order,
        masked_fraction=report.masked_fraction,
    )
    return report
