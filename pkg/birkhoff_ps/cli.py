"""
Command-line front end

Every subcommand writes its data files plus a JSON run manifest. Exit codes:
0 success, 1 a numerical check or solve did not pass, 2 usage error.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import pandas as pd
from pydantic import ValidationError
from rich.markup import escape
from rich.panel import Panel
from rich.table import Table

from . import __version__
from .birkhoff import build_birkhoff
from .conditioning import doubling_ladder, sweep_and_fit
from .errors import BirkhoffPSError, UsageError
from .grid import make_grid, to_physical_time
from .interp import build_basis, diff_matrix
from .nlpsolve import SolverOptions
from .ocp import ProblemDescriptor
from .refine import RefinementPlan, refine_solve
from .serialization import RunManifest, SolutionRecord, load_descriptor
from .settings import configure_logging, console
from .transcribe import parse_variant
from .validate import feasibility_error, propagate
from .verifier import IdentityVerifier
from .workflow import SolveWorkflow

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def _write_csv(frame: pd.DataFrame, path: Path, header: bool = True) -> str:
    frame.to_csv(path, index=False, header=header, float_format=FLOAT_FORMAT)
    return str(path)


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of integers, got {text!r}") from None


def _names(text: str) -> List[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _parameters(args: argparse.Namespace) -> dict:
    return {k: v for k, v in vars(args).items() if k != "handler"}


# ---------------------------------------------------------------------------
# operator subcommands
# ---------------------------------------------------------------------------

def _nodes(args) -> RunManifest:
    grid = make_grid(args.kind, args.n, (args.t0, args.tf))
    out = _write_csv(pd.DataFrame({"t": to_physical_time(grid)}), Path(args.out), header=False)
    return RunManifest(subcommand="nodes", outputs=[out], metrics={"n_nodes": grid.n_nodes})


def _diffmat(args) -> RunManifest:
    grid = make_grid(args.kind, args.n)
    ops = diff_matrix(build_basis(grid))
    out = _write_csv(pd.DataFrame(ops.D), Path(args.out), header=False)
    row_sum = float(abs(ops.D.sum(axis=1)).max())
    return RunManifest(subcommand="diffmat", outputs=[out], metrics={"max_row_sum": row_sum})


def _birkmat(args) -> RunManifest:
    grid = make_grid(args.kind, args.n)
    basis = build_basis(grid)
    birk = build_birkhoff(basis, args.case)
    out = Path(args.out)
    row_path = out.with_suffix(".row.csv")
    outputs = [
        _write_csv(pd.DataFrame(birk.B), out, header=False),
        _write_csv(pd.DataFrame({"boundary_row": birk.boundary_row}), row_path),
    ]
    residual = birk.metadata["inverse_residual"]
    console.print(f"max|D B - I| = {residual:.3e}")
    return RunManifest(subcommand="birkmat", outputs=outputs, metrics=dict(birk.metadata))


def _cond(args) -> RunManifest:
    ns = _int_list(args.ns) if args.ns else doubling_ladder(args.nmin, args.nmax)
    result = sweep_and_fit(
        _names(args.grids),
        _names(args.mats),
        ns,
        include_gauss=args.include_gauss,
        max_workers=args.threads,
    )
    out = Path(args.out)
    slopes_path = out.with_suffix(".slopes.json")
    outputs = [_write_csv(result.to_frame(), out)]
    slopes_path.write_text(json.dumps({"series": result.slopes(), "metadata": result.metadata}, indent=2))
    outputs.append(str(slopes_path))

    table = Table(title="Condition-number growth")
    table.add_column("Grid", style="cyan")
    table.add_column("Matrix", style="magenta")
    table.add_column("Slope", justify="right")
    table.add_column("Points", justify="right")
    table.add_column("Status")
    for fit in result.fits:
        status = "[green]complete[/green]" if fit.complete else f"[red]{escape(fit.message or 'partial')}[/red]"
        table.add_row(fit.grid, fit.matrix, f"{fit.slope:.3f}", str(fit.n_points), status)
    console.print(table)

    return RunManifest(
        subcommand="cond",
        outputs=outputs,
        metrics={key: fit["slope"] for key, fit in result.slopes().items()},
        exit_code=0 if result.success else 1,
    )


def _check(args) -> RunManifest:
    report = IdentityVerifier(args.kind, args.n, trials=args.trials, seed=args.seed).verify_identities()
    table = Table(title=f"Identity checks ({report['grid']}, N={report['N']})")
    table.add_column("Item", style="cyan", no_wrap=True)
    table.add_column("Residual", justify="right")
    table.add_column("Threshold", justify="right")
    table.add_column("Result")
    for item in report["items"]:
        result = "[green]PASS[/green]" if item["passed"] else "[red]FAIL[/red]"
        table.add_row(item["name"], f"{item['residual']:.3e}", f"{item['threshold']:.3e}", result)
    console.print(table)
    if report["failed"]:
        console.print(f"[bold red]failed:[/bold red] {escape(', '.join(report['failed']))}")
    return RunManifest(
        subcommand="check",
        metrics={item["name"]: item["residual"] for item in report["items"]},
        exit_code=0 if report["verification_successful"] else 1,
    )


# ---------------------------------------------------------------------------
# problem subcommands
# ---------------------------------------------------------------------------

def _descriptor(args) -> ProblemDescriptor:
    overrides = {"A": args.A, "r_ratio": args.r_ratio, "x0": args.x0, "tf": args.tf}
    if args.descriptor:
        return load_descriptor(args.descriptor, problem=args.problem, **overrides)
    if args.problem is None:
        raise UsageError("give --problem or --descriptor")
    return ProblemDescriptor(problem=args.problem, **{k: v for k, v in overrides.items() if v is not None})


def _solver_options(args) -> SolverOptions:
    overrides = {
        "method": args.solver,
        "tol_feas": args.tol_feas,
        "tol_opt": args.tol_opt,
        "max_iter": args.max_iter,
    }
    if args.options:
        return SolverOptions.from_file(args.options, **overrides)
    return SolverOptions(**{k: v for k, v in overrides.items() if v is not None})


def _summary(title: str, rows: Sequence[Tuple[str, str]], ok: bool):
    table = Table(title=title, show_header=False)
    table.add_column("Field", style="cyan")
    table.add_column("Value")
    for key, value in rows:
        table.add_row(key, escape(value))
    console.print(table)
    if not ok:
        console.print(Panel("[bold red]solve did not reach an optimal point[/bold red]", border_style="red"))


def _solve(args) -> RunManifest:
    descriptor = _descriptor(args)
    prob = descriptor.build()
    variant = parse_variant(args.method)
    grid = make_grid(args.grid, args.n)
    if not grid.kind.is_lobatto:
        raise UsageError(f"solve needs a Lobatto grid (cgl or lgl), got {grid.kind.value}")
    workflow = SolveWorkflow(_solver_options(args), rtol=args.rtol, atol=args.atol, control_method=args.control)
    result = workflow.run_solve_workflow(prob, grid, variant, validate=not args.no_validate,
                                         warm_ladder=_int_list(args.warm_ladder))
    if result.solution is None:
        console.print(f"[bold red]error:[/bold red] {escape(result.error or 'workflow failed')}")
        return RunManifest(subcommand="solve", metrics={"error": result.error}, exit_code=1)

    solution, report = result.solution, result.report
    record = SolutionRecord.from_trajectory(
        result.trajectory,
        prob,
        status=solution.status.value,
        descriptor=descriptor,
        iterations=solution.iterations,
        residuals=solution.residuals.as_dict(),
        defects=report["defects"],
        message=solution.message,
    )
    out = str(record.write(args.out))
    metrics = {
        "status": solution.status.value,
        "objective": solution.objective,
        "tf": result.trajectory.tf,
        "iterations": solution.iterations,
        **solution.residuals.as_dict(),
    }
    if result.propagation is not None:
        metrics["propagation"] = report["propagation"]
    _summary(
        f"{prob.name} on {grid.kind.value} N={grid.order} ({variant.value})",
        [("status", solution.status.value), ("objective", f"{solution.objective:.12g}"),
         ("tf", f"{result.trajectory.tf:.12g}"), ("iterations", str(solution.iterations)),
         ("feasibility", f"{solution.residuals.feasibility:.3e}"),
         ("stationarity", f"{solution.residuals.scaled_stationarity:.3e}")],
        solution.success,
    )
    return RunManifest(subcommand="solve", outputs=[out], metrics=metrics,
                       exit_code=0 if solution.success else 1)


def _refine(args) -> RunManifest:
    descriptor = _descriptor(args)
    prob = descriptor.build()
    plan = RefinementPlan(ladder=_int_list(args.ladder), tail_threshold=args.tail_threshold,
                          max_steps=args.max_steps)
    variant = parse_variant(args.method)
    result = refine_solve(prob, plan, variant, _solver_options(args))

    out = Path(args.out)
    diag = Path(args.diag) if args.diag else out.with_suffix(".diag.json")
    record = SolutionRecord.from_trajectory(
        result.trajectory,
        prob,
        status=result.status,
        descriptor=descriptor,
        iterations=result.iterations,
        residuals=result.residuals,
        defects=result.defects,
        message=result.failure or result.stop_reason,
    )
    outputs = [str(record.write(out))]
    diag.write_text(json.dumps(result.diagnostics(), indent=2))
    outputs.append(str(diag))

    table = Table(title=f"Refinement of {prob.name} ({variant.value})")
    for column in ("N", "status", "objective", "feasibility", "tail ratio", "warm"):
        table.add_column(column)
    for rung in result.rungs:
        table.add_row(str(rung.n), rung.status, f"{rung.objective:.10g}", f"{rung.feasibility:.2e}",
                      f"{rung.tail_ratio:.2e}", "yes" if rung.warm_started else "no")
    console.print(table)
    console.print(f"stop reason: {result.stop_reason}")

    ok = result.success and result.status == "optimal"
    return RunManifest(
        subcommand="refine",
        outputs=outputs,
        metrics={"stop_reason": result.stop_reason, "converged": result.converged,
                 "failure": result.failure, "tf": result.trajectory.tf, "rungs": len(result.rungs)},
        exit_code=0 if ok else 1,
    )


def _propagate(args) -> RunManifest:
    record = SolutionRecord.read(args.solution)
    prob = record.build_problem()
    traj = record.to_trajectory()
    report = propagate(prob, traj, rtol=args.rtol, atol=args.atol, control_method=args.control)
    out = _write_csv(report.to_frame(), Path(args.out))
    errors = feasibility_error(report)
    if report.success:
        console.print(f"max propagated error {errors.max_error:.3e}, terminal miss {errors.terminal_miss:.3e}")
    else:
        console.print(f"[bold red]propagation failed at t = {report.t_failure:.6g}[/bold red]: "
                      f"{escape(report.message)}")
    metrics = {"success": report.success, "steps": report.n_steps, "rejected": report.n_rejected,
               "max_error": errors.max_error, **errors.as_dict()}
    if report.t_failure is not None:
        metrics["t_failure"] = report.t_failure
    return RunManifest(subcommand="propagate", outputs=[out], metrics=metrics,
                       exit_code=0 if report.success else 1)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_problem_flags(p: argparse.ArgumentParser):
    p.add_argument("--problem", choices=["oxfer", "double-integrator", "di", "lq"], default=None)
    p.add_argument("--descriptor", help="JSON/JSON5 problem descriptor; flags override its fields")
    p.add_argument("--A", type=float, default=None, help="thrust acceleration, canonical units (oxfer)")
    p.add_argument("--r-ratio", dest="r_ratio", type=float, default=None, help="final/initial radius (oxfer)")
    p.add_argument("--x0", type=float, default=None, help="initial state (lq)")
    p.add_argument("--tf", type=float, default=None, help="fixed horizon (lq)")
    p.add_argument("--method", default="birkhoff-a", help="lagrange, birkhoff-a, birkhoff-b, left-precond-a/b")
    p.add_argument("--solver", choices=["slsqp", "auglag"], default=None)
    p.add_argument("--tol-feas", dest="tol_feas", type=float, default=None)
    p.add_argument("--tol-opt", dest="tol_opt", type=float, default=None)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=None)
    p.add_argument("--options", help="JSON/JSON5 solver options file; flags override its fields")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    common.add_argument("--log-level", dest="log_level", default=None)
    common.add_argument("--manifest", default=None, help="manifest path (default: next to the output)")

    parser = argparse.ArgumentParser(prog="birkhoff-ps", description="Birkhoff and Lagrange pseudospectral tools")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("nodes", parents=[common], help="grid nodes mapped to [t0, tf]")
    p.add_argument("--kind", default="cgl")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--t0", type=float, default=-1.0)
    p.add_argument("--tf", type=float, default=1.0)
    p.add_argument("--out", default="nodes.csv")
    p.set_defaults(handler=_nodes)

    p = sub.add_parser("diffmat", parents=[common], help="dense differentiation matrix")
    p.add_argument("--kind", default="cgl")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", default="D.csv")
    p.set_defaults(handler=_diffmat)

    p = sub.add_parser("birkmat", parents=[common], help="Birkhoff matrix and boundary row")
    p.add_argument("--kind", default="cgl")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--case", choices=["a", "b"], default="a")
    p.add_argument("--out", default="B.csv")
    p.set_defaults(handler=_birkmat)

    p = sub.add_parser("cond", parents=[common], help="condition-number sweep and log-log slopes")
    p.add_argument("--grids", default="cgl,lgl,lgr")
    p.add_argument("--mats", default="innerd,clagr,cbirk,abirk")
    p.add_argument("--nmin", type=int, default=16)
    p.add_argument("--nmax", type=int, default=1024)
    p.add_argument("--ns", default=None, help="explicit comma-separated N list (overrides nmin/nmax)")
    p.add_argument("--include-gauss", dest="include_gauss", action="store_true")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default="cond.csv")
    p.set_defaults(handler=_cond)

    p = sub.add_parser("solve", parents=[common], help="transcribe and solve a built-in problem")
    _add_problem_flags(p)
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--grid", default="cgl")
    p.add_argument("--rtol", type=float, default=1e-10)
    p.add_argument("--atol", type=float, default=1e-12)
    p.add_argument("--control", choices=["lagrange", "linear"], default="lagrange")
    p.add_argument("--no-validate", dest="no_validate", action="store_true", help="skip the RK propagation")
    p.add_argument("--warm-ladder", dest="warm_ladder", default="",
                   help="coarser orders solved first, each warm-starting the next")
    p.add_argument("--out", default="sol.json")
    p.set_defaults(handler=_solve)

    p = sub.add_parser("propagate", parents=[common], help="propagate a saved solution and measure errors")
    p.add_argument("--solution", required=True)
    p.add_argument("--rtol", type=float, default=1e-10)
    p.add_argument("--atol", type=float, default=1e-12)
    p.add_argument("--control", choices=["lagrange", "linear"], default="lagrange")
    p.add_argument("--out", default="errors.csv")
    p.set_defaults(handler=_propagate)

    p = sub.add_parser("refine", parents=[common], help="solve over an increasing CGL ladder")
    _add_problem_flags(p)
    p.add_argument("--ladder", default="8,16,32,64")
    p.add_argument("--tail-threshold", dest="tail_threshold", type=float, default=1e-6)
    p.add_argument("--max-steps", dest="max_steps", type=int, default=None)
    p.add_argument("--out", default="sol.json")
    p.add_argument("--diag", default=None)
    p.set_defaults(handler=_refine)

    p = sub.add_parser("check", parents=[common], help="operator identity suite")
    p.add_argument("--kind", default="cgl")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=_check)
    return parser


def _manifest_path(args) -> Path:
    if args.manifest:
        return Path(args.manifest)
    out = getattr(args, "out", None)
    if out:
        return Path(out).with_suffix(".manifest.json")
    return Path(f"{args.command}.manifest.json")


def dispatch(argv: Optional[Sequence[str]] = None) -> Tuple[int, Optional[RunManifest]]:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        code = e.code if isinstance(e.code, int) else 2
        return code, None

    handler: Callable[[argparse.Namespace], RunManifest] = args.handler
    try:
        configure_logging(args.log_level or ("INFO" if args.verbose else None))
        manifest = handler(args)
    except ValidationError as e:
        console.print(f"[bold red]error:[/bold red] {escape(str(e))}")
        return 2, None
    except BirkhoffPSError as e:
        console.print(f"[bold red]error:[/bold red] {escape(str(e))}")
        if isinstance(e, ValueError):
            return 2, None
        manifest = RunManifest(subcommand=args.command, metrics={"error": str(e)}, exit_code=1)

    manifest.parameters = _parameters(args)
    missing = manifest.missing_outputs()
    if missing:
        logger.error("outputs missing after %s: %s", args.command, ", ".join(missing))
        manifest.exit_code = max(manifest.exit_code, 1)
    path = _manifest_path(args)
    manifest.write(path)
    logger.info("%s finished with exit code %d (manifest %s)", args.command, manifest.exit_code, path)
    return manifest.exit_code, manifest


def main(argv: Optional[Sequence[str]] = None):
    code, _ = dispatch(argv)
    sys.exit(code)
