#!/usr/bin/env python3
"""
Birkhoff pseudospectral demo

Runs three things and prints them with rich:
- the conditioning sweep for Lagrange and Birkhoff operators on CGL and LGL grids
- a low-thrust orbit-transfer solve with propagation-based validation
- the refinement ladder on the double integrator
"""
import argparse
import sys

from rich.panel import Panel
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table

from birkhoff_ps.conditioning import sweep_and_fit
from birkhoff_ps.grid import make_grid
from birkhoff_ps.ocp import CanonicalUnits, make_double_integrator, make_orbit_transfer
from birkhoff_ps.refine import RefinementPlan, refine_solve
from birkhoff_ps.settings import configure_logging, console
from birkhoff_ps.workflow import SolveWorkflow


def show_conditioning(ns):
    with Progress(SpinnerColumn(), TextColumn("[progress.description]{task.description}"), console=console) as progress:
        task = progress.add_task("Sweeping condition numbers...", total=None)
        sweep = sweep_and_fit(["cgl", "lgl"], ["innerd", "clagr", "cbirk"], ns)
        progress.update(task, completed=True)

    table = Table(title="Condition number growth, kappa ~ N^slope")
    table.add_column("Grid", style="cyan", no_wrap=True)
    table.add_column("Matrix", style="magenta")
    table.add_column("Slope", style="green")
    table.add_column(f"kappa at N={ns[-1]}")
    frame = sweep.to_frame()
    for fit in sweep.fits:
        last = frame[(frame.grid == fit.grid) & (frame.matrix == fit.matrix)].kappa.iloc[-1]
        table.add_row(fit.grid, fit.matrix, f"{fit.slope:.2f}", f"{last:.3e}")
    console.print(table)


def show_orbit_transfer(A: float, r_ratio: float, n: int):
    units = CanonicalUnits()
    console.print(Panel(
        f"Thrust acceleration: {A} (canonical)\n"
        f"Target radius ratio: {r_ratio}\n"
        f"Grid: CGL, N={n}\n"
        f"Method: birkhoff-a",
        title="Orbit transfer"
    ))
    with Progress(SpinnerColumn(), TextColumn("[progress.description]{task.description}"), console=console) as progress:
        task = progress.add_task("Solving the transcribed NLP...", total=None)
        ladder = [m for m in (16, 32, 64) if m < n]
        result = SolveWorkflow().run_solve_workflow(make_orbit_transfer(A, r_ratio), make_grid("cgl", n), "birkhoff-a",
                                                    warm_ladder=ladder)
        progress.update(task, completed=True)

    if result.error:
        console.print(Panel(f"[bold red]{result.error}[/bold red]", title="Solve failed", border_style="red"))
        return False

    report = result.report
    ok = report["status"] == "optimal"
    console.print(Panel(
        f"Status: [bold]{report['status']}[/bold]\n"
        f"Iterations: {report['iterations']}\n"
        f"Transfer time: {report['tf']:.6f} TU ({units.to_days(report['tf']):.3f} days)\n"
        f"Feasibility: {report['residuals']['feasibility']:.2e}\n"
        f"Stationarity: {report['residuals']['stationarity']:.2e}",
        title="Solver result",
        border_style="green" if ok else "red"
    ))

    propagation = report.get("propagation")
    if propagation:
        table = Table(title="Propagated-vs-collocated error")
        table.add_column("State", style="cyan")
        table.add_column("max |error|", style="green")
        for name, value in propagation["per_state"].items():
            table.add_row(name, f"{value:.3e}")
        table.add_row("terminal miss", f"{propagation['terminal_miss']:.3e}")
        console.print(table)
    return ok


def show_refinement(ladder):
    result = refine_solve(make_double_integrator(), RefinementPlan(ladder=ladder), "birkhoff-a")
    table = Table(title="Refinement ladder, double integrator")
    table.add_column("N", style="cyan")
    table.add_column("Status", style="magenta")
    table.add_column("Tail ratio", style="green")
    table.add_column("Warm start")
    for rung in result.rungs:
        table.add_row(str(rung.n), rung.status, f"{rung.tail_ratio:.2e}", "yes" if rung.warm_started else "no")
    console.print(table)
    console.print(f"Stop reason: [bold]{result.stop_reason}[/bold]")
    return result.success


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    parser.add_argument("--A", type=float, default=0.01)
    parser.add_argument("--r-ratio", type=float, default=6.0)
    parser.add_argument("--n", type=int, default=64)
    parser.add_argument("--log-level", default=None)
    args = parser.parse_args(argv)
    configure_logging(args.log_level)

    console.print("[bold cyan]Birkhoff pseudospectral demo[/bold cyan]\n")
    show_conditioning([8, 16, 32, 64, 128])
    console.print("\n" + "=" * 80 + "\n")
    solved = show_orbit_transfer(args.A, args.r_ratio, args.n)
    console.print("\n" + "=" * 80 + "\n")
    refined = show_refinement([8, 16, 32, 64])
    return 0 if solved and refined else 1


if __name__ == "__main__":
    sys.exit(main())
