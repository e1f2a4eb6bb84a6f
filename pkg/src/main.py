"""
Punto de entrada de línea de comandos de hyperlie

Códigos de salida: 0 todo verificado, 1 alguna verificación falló (el
reporte se emite igual), 2 error de entrada o de uso.
"""
import argparse
import json
import sys
from pathlib import Path
from typing import Any, List, Optional

from pydantic import ValidationError

from .claws import (
    FluxVector,
    Multiplier,
    TFunction,
    flux_residual,
    homotopy_flux,
    is_trivial_flux,
    multiplier_residual,
    parse_flux,
    t_equation_residual,
    verify_claw_catalog,
    verify_t_symmetry_catalog,
)
from .classify import (
    check_condition_solution,
    family_of,
    find_condition,
    generated_conditions,
    verify_class_table,
    verify_condition_solutions,
)
from .config import configure_logging, get_logger, get_settings
from .detsys import split_system
from .errors import DivergenceError, HyperlieError
from .jetcalc import FSpec
from .models import ErrorResponse, Family, Verdict, VerificationReport
from .numgrid import GoursatProblem, convergence_study
from .symkernel import decide_zero, declarations_header, parse, render, to_json_tree

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

TABLES = ("thm22", "table1", "table2", "supplementary")


class _Parser(argparse.ArgumentParser):
    """ArgumentParser que lanza en vez de terminar el proceso"""

    def error(self, message):
        raise _UsageError(message)


class _UsageError(Exception):
    pass


# opciones cuyo valor es una expresión y puede empezar con '-'
EXPRESSION_OPTIONS = ("--f", "--q", "--phi", "--psi", "--t")


def _attach_expression_values(argv: List[str]) -> List[str]:
    """Reescribe `--phi -u` como `--phi=-u` para que argparse no lo tome por opción."""
    result: List[str] = []
    k = 0
    while k < len(argv):
        token = argv[k]
        following = argv[k + 1] if k + 1 < len(argv) else None
        if token in EXPRESSION_OPTIONS and following and following.startswith("-") and not following.startswith("--"):
            result.append(f"{token}={following}")
            k += 2
            continue
        result.append(token)
        k += 1
    return result


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hyperlie", description="Simetrías y leyes de conservación de u_xy = F")
    parser.add_argument("--json", action="store_true", help="Salida JSON")
    parser.add_argument("--log-level", help="Nivel de log (DEBUG, INFO, WARNING...)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("parse", help="Parsea y canoniza una expresión")
    p.add_argument("expr")

    p = sub.add_parser("detsys", help="Sistema determinante de la familia opaca")
    p.add_argument("--family", required=True, choices=["u", "ux"])

    p = sub.add_parser("cases", help="Condiciones de Wronskiano sobre F")
    p.add_argument("--family", required=True, choices=["u", "ux"])
    p.add_argument("--m", type=int, help="Tamaño de los subconjuntos")
    p.add_argument("--verify-solutions", action="store_true", help="Verifica el catálogo de soluciones")

    p = sub.add_parser("check-f", help="Comprueba si F anula una condición")
    p.add_argument("--family", required=True, choices=["u", "ux"])
    p.add_argument("--f", required=True, dest="f_expr")
    p.add_argument("--condition", required=True, help="Índice m.k")

    p = sub.add_parser("verify-class", help="Verifica una tabla de clasificación")
    p.add_argument("--table", required=True, choices=TABLES)
    p.add_argument("--entry")

    p = sub.add_parser("claw", help="Leyes de conservación")
    claw = p.add_subparsers(dest="claw_command", required=True, parser_class=_Parser)
    c = claw.add_parser("verify")
    c.add_argument("--f", required=True, dest="f_expr")
    c.add_argument("--q", required=True)
    c.add_argument("--phi")
    c.add_argument("--psi")
    c = claw.add_parser("derive")
    c.add_argument("--f", required=True, dest="f_expr")
    c.add_argument("--q", required=True)
    c.add_argument("--pure", action="store_true")
    claw.add_parser("catalog")

    p = sub.add_parser("t-eq", help="Ecuación lineal en T(z, y)")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--t")
    group.add_argument("--symmetries", action="store_true")

    p = sub.add_parser("numcheck", help="Verificación numérica en problemas de Goursat")
    p.add_argument("--problem", required=True, help="Archivo JSON o nombre del catálogo")
    p.add_argument("--phi")
    p.add_argument("--psi")
    p.add_argument("--grids", help="Mallas separadas por comas, p.ej. 32,64,128")
    p.add_argument("--csv", type=Path)
    return parser


# ---------------------------------------------------------------------------
# Comandos
# ---------------------------------------------------------------------------

def _report_text(report: VerificationReport) -> str:
    lines = [f"{report.table}: {report.passed} ok, {report.failed} fallidas"]
    for entry in report.entries:
        mark = "✓" if entry.passed else "✗"
        line = f"  {mark} {entry.label} [{entry.verdict}] ({entry.seconds:.2f}s)"
        if not entry.passed:
            line += f" residuo: {entry.residual}"
        if "printed_verdict" in entry.details:
            line += f" | impresa: {entry.details['printed_verdict']}"
        lines.append(line)
    return "\n".join(lines)


def cmd_parse(args) -> tuple:
    e = parse(args.expr)
    return EXIT_OK, {"expr": render(e), "tree": to_json_tree(e)}, render(e)


def cmd_detsys(args) -> tuple:
    family = family_of(args.family)
    spec = FSpec.opaque_u() if family == Family.U else FSpec.opaque_ux()
    system = split_system(spec)
    data = system.to_json()
    lines = [f"Familia {family.value}: incógnitas {', '.join(data['unknowns'])}"]
    for stage in data["stages"]:
        lines.append(f"  [{stage['name']}] " + "; ".join(f"{c} = 0" for c in stage["constraints"]))
    lines.append(f"Residuo: {data['residual']} = 0")
    return EXIT_OK, data, "\n".join(lines)


def cmd_cases(args) -> tuple:
    if args.verify_solutions:
        report = verify_condition_solutions()
        code = EXIT_OK if report.all_passed else EXIT_FAILED
        return code, report.summary(), _report_text(report)
    if args.m is None:
        raise _UsageError("cases necesita --m o --verify-solutions")

    indeterminates, conditions = generated_conditions(args.family, args.m)
    data = {
        "declarations": declarations_header(*indeterminates.elements),
        "indeterminates": indeterminates.to_json(),
        "conditions": [c.to_json() for c in conditions],
    }
    lines = ["Indeterminadas: " + ", ".join(render(e) for e in indeterminates.elements)]
    for condition in conditions:
        status = ""
        if condition.identically_zero:
            status = " (idénticamente nula)"
        elif condition.duplicate_of:
            status = f" (= {render(condition.factor)} × {condition.duplicate_of})"
        elif condition.invalid_reason:
            status = f" ({condition.invalid_reason})"
        printed = f" ~ {condition.printed_label}" if condition.printed_label else ""
        lines.append(f"  {condition.label}: {render(condition.ode)} = 0{status}{printed}")
    return EXIT_OK, data, "\n".join(lines)


def cmd_check_f(args) -> tuple:
    try:
        m = int(args.condition.split(".")[0])
    except ValueError:
        raise _UsageError(f"Índice de condición inválido: {args.condition} (use m.k)")
    _, conditions = generated_conditions(args.family, m)
    condition = find_condition(conditions, args.condition)
    f = parse(args.f_expr)
    verdict = check_condition_solution(f, condition, args.family)
    data = {"condition": condition.to_json(), "F": render(f), "verdict": verdict.value}
    code = EXIT_OK if verdict is Verdict.HOLDS else EXIT_FAILED
    return code, data, f"{condition.label}: {render(condition.ode)} con F = {render(f)} → {verdict.value}"


def cmd_verify_class(args) -> tuple:
    report = verify_class_table(args.table, args.entry)
    code = EXIT_OK if report.all_passed else EXIT_FAILED
    return code, report.summary(), _report_text(report)


def _claw_inputs(args):
    f = FSpec.from_expr(parse(args.f_expr))
    q = Multiplier(q=parse(args.q))
    return f, q


def cmd_claw(args) -> tuple:
    if args.claw_command == "catalog":
        report = verify_claw_catalog()
        code = EXIT_OK if report.all_passed else EXIT_FAILED
        return code, report.summary(), _report_text(report)

    f, q = _claw_inputs(args)
    if args.claw_command == "derive":
        theta = homotopy_flux(q, f, pure=args.pure)
        data = {
            "declarations": declarations_header(f.expr, q.q, theta.phi, theta.psi),
            **q.to_json(),
            **theta.to_json(),
            "trivial": is_trivial_flux(theta),
        }
        return EXIT_OK, data, f"Φ = {render(theta.phi)}\nΨ = {render(theta.psi)}"

    residual = multiplier_residual(q, f)
    verdict = decide_zero(residual)
    shown = [f.expr, q.q, residual]
    data = {**q.to_json(), "multiplier_verdict": verdict.value, "multiplier_residual": render(residual)}
    lines = [f"E_u(Q·Δ) → {verdict.value}"]
    ok = verdict is Verdict.HOLDS
    if args.phi is not None or args.psi is not None:
        theta = parse_flux(args.phi or "0", args.psi or "0")
        flux = flux_residual(theta, q, f)
        flux_verdict = decide_zero(flux)
        data.update(theta.to_json(), flux_verdict=flux_verdict.value, flux_residual=render(flux))
        shown += [theta.phi, theta.psi, flux]
        lines.append(f"D_xΦ + D_yΨ − Q·Δ → {flux_verdict.value}")
        if flux_verdict is not Verdict.HOLDS:
            lines.append(f"  residuo: {render(flux)}")
        ok = ok and flux_verdict is Verdict.HOLDS
    data["declarations"] = declarations_header(*shown)
    return (EXIT_OK if ok else EXIT_FAILED), data, "\n".join(lines)


def cmd_t_eq(args) -> tuple:
    if args.symmetries:
        report = verify_t_symmetry_catalog()
        code = EXIT_OK if report.all_passed else EXIT_FAILED
        return code, report.summary(), _report_text(report)
    t = TFunction(t=args.t)
    residual = t_equation_residual(t)
    verdict = decide_zero(residual)
    data = {"T": render(t.t), "residual": render(residual), "verdict": verdict.value}
    code = EXIT_OK if verdict is Verdict.HOLDS else EXIT_FAILED
    return code, data, f"2T + 4zT_z + z²T_zz + T_zy = {render(residual)} → {verdict.value}"


def _load_problem(value: str) -> GoursatProblem:
    path = Path(value)
    if path.suffix == ".json" or path.exists():
        return GoursatProblem.from_file(path)
    return GoursatProblem.from_catalog(value)


def cmd_numcheck(args) -> tuple:
    problem = _load_problem(args.problem)
    theta: Optional[FluxVector] = None
    if args.phi is not None or args.psi is not None:
        theta = parse_flux(args.phi or "0", args.psi or "0")
    grids = None
    if args.grids:
        try:
            grids = [int(n) for n in args.grids.split(",")]
        except ValueError:
            raise _UsageError(f"Mallas inválidas: {args.grids}")
    report = convergence_study(problem, theta, grids, csv_path=args.csv)

    code = EXIT_OK if report.converged() else EXIT_FAILED
    lines = [f"{report.problem}: mallas {report.grids}"]
    if report.residual_norms:
        lines.append("  residuo de conservación: " + ", ".join(f"{v:.3e}" for v in report.residual_norms))
        lines.append(f"  orden: {report.order}  (enmascarado {report.masked_fraction:.1%})")
    label = "diferencias entre mallas" if report.self_convergence else "error de la solución"
    lines.append(f"  {label}: " + ", ".join(f"{v:.3e}" for v in report.solution_errors))
    lines.append(f"  orden: {report.solution_order}")
    return code, report.to_json(), "\n".join(lines)


COMMANDS = {
    "parse": cmd_parse,
    "detsys": cmd_detsys,
    "cases": cmd_cases,
    "check-f": cmd_check_f,
    "verify-class": cmd_verify_class,
    "claw": cmd_claw,
    "t-eq": cmd_t_eq,
    "numcheck": cmd_numcheck,
}


def _emit(as_json: bool, data: Any, text: str, stream=None):
    stream = stream or sys.stdout
    if as_json:
        print(json.dumps(data, indent=2, ensure_ascii=False), file=stream)
    else:
        print(text, file=stream)


def _emit_error(as_json: bool, code: str, reason: str, details: Optional[dict] = None):
    if as_json:
        response = ErrorResponse(error=code, reason=reason, details=details or {})
        _emit(True, response.model_dump(), "")
    else:
        print(f"error [{code}]: {reason}", file=sys.stderr)


def run(argv: Optional[List[str]] = None) -> int:
    """
    Ejecuta un subcomando.

    Args:
        argv: Argumentos sin el nombre del programa (por defecto sys.argv[1:])

    Returns:
        Código de salida 0, 1 o 2
    """
    argv = _attach_expression_values(list(sys.argv[1:] if argv is None else argv))
    as_json = "--json" in argv
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as e:
        _emit_error(as_json, "usage_error", str(e))
        return EXIT_USAGE

    settings = get_settings()
    if args.log_level:
        settings.logging.level = args.log_level
    configure_logging(settings)

    try:
        code, data, text = COMMANDS[args.command](args)
    except _UsageError as e:
        _emit_error(args.json, "usage_error", str(e))
        return EXIT_USAGE
    except DivergenceError as e:
        _emit_error(args.json, e.code, e.message, e.details)
        return EXIT_FAILED
    except HyperlieError as e:
        _emit_error(args.json, e.code, e.message, e.details)
        return EXIT_USAGE
    except ValidationError as e:
        _emit_error(args.json, "invalid_input", str(e))
        return EXIT_USAGE

    _emit(args.json, data, text)
    logger.debug("command_finished", command=args.command, exit_code=code)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
