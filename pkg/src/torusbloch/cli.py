#!/usr/bin/env python3
"""Main CLI entry point for the torusbloch tool."""

import logging
import sys
import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, TextIO, Tuple

import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from rich.table import Table

from .bloch import band_structure
from .dual_lattice import condition_c_report, enumerate_sublevel
from .errors import OperandError, TorusBlochError
from .harmonics import t_spectrum
from .io import (
    deformation_from_dict,
    dynamics_from_dict,
    field_from_dict,
    load_json,
    problem_from_dict,
    weight_from_dict,
    write_bands_csv,
    write_json,
    write_mean_value_csv,
    write_sublevel_csv,
)
from .quasi_dynamics import (
    Averaging,
    density_kernel_test,
    exact_mean,
    mean_value_estimate,
    phi2_lhs_estimate,
    phi2_rhs,
)
from .utils import default_workers, format_duration, parse_float_list, theta_grid

app = typer.Typer(
    name="torusbloch",
    help="Sobolev compactness certificates, Birkhoff mean values and Bloch bands for quasi-periodic media.",
    add_completion=False,
)
console = Console(stderr=True)


@dataclass(frozen=True)
class RunConfig:
    """Validated options of one command invocation."""

    command: str
    inputs: Tuple[Path, ...]
    output: Optional[Path] = None
    d: Optional[float] = None
    levels: Tuple[float, ...] = ()
    windows: Tuple[int, ...] = ()
    window: Optional[int] = None
    thetas: Tuple[Tuple[float, ...], ...] = ()
    eigs: int = 1
    t_list: Tuple[float, ...] = ()
    workers: int = 1
    tol: float = 1e-9
    top: int = 10
    averaging: Averaging = Averaging.UNIFORM

    def __post_init__(self):
        if self.output is not None and not self.output.resolve().parent.is_dir():
            raise OperandError(f"output directory does not exist: {self.output.resolve().parent}")
        if self.d is not None and not self.d >= 0:
            raise OperandError(f"--d must be nonnegative, got {self.d}")
        if self.window is not None and self.window < 1:
            raise OperandError(f"--window must be >= 1, got {self.window}")
        if any(r < 1 for r in self.windows):
            raise OperandError(f"--windows entries must be >= 1, got {list(self.windows)}")
        if any(t <= 0 for t in self.t_list):
            raise OperandError(f"--t-list entries must be positive, got {list(self.t_list)}")
        if self.eigs < 1:
            raise OperandError(f"--eigs must be >= 1, got {self.eigs}")
        if self.workers < 1:
            raise OperandError(f"--workers must be >= 1, got {self.workers}")
        if not self.tol > 0:
            raise OperandError(f"--tol must be positive, got {self.tol}")
        if self.top < 1:
            raise OperandError(f"--top must be >= 1, got {self.top}")


def _parse_int_list(text: str, name: str) -> Tuple[int, ...]:
    values = parse_float_list(text, name)
    if any(v != int(v) for v in values):
        raise OperandError(f"{name} must contain integers, got '{text}'")
    return tuple(int(v) for v in values)


def _parse_single(text: str, name: str) -> float:
    values = parse_float_list(text, name)
    if len(values) != 1:
        raise OperandError(f"{name} takes a single number, got '{text}'")
    return values[0]


@contextmanager
def _command_errors() -> Iterator[None]:
    """Map library errors to their exit codes and report them on stderr."""
    try:
        yield
    except typer.Exit:
        # Propagate exit exceptions
        raise
    except KeyboardInterrupt:
        console.print("\n👋 [yellow]Interrupted by user.[/yellow]")
        raise typer.Exit(1)
    except TorusBlochError as e:
        console.print(f"❌ [bold red]Error:[/bold red] {escape(str(e))}")
        raise typer.Exit(e.exit_code)
    except Exception as e:
        console.print(f"❌ [bold red]Unexpected error:[/bold red] {escape(str(e))}")
        raise typer.Exit(1)


@contextmanager
def _data_stream(output: Optional[Path]) -> Iterator[TextIO]:
    """Data goes to ``--output`` when given, else to stdout."""
    if output is None:
        yield sys.stdout
        return
    with open(output, "w", encoding="utf-8", newline="") as handle:
        yield handle


@app.callback()
def configure(
    verbose: bool = typer.Option(
        False,
        "--verbose",
        "-v",
        help="Log library progress (enumeration sizes, quadrature panels, matrix sizes) to stderr",
    ),
):
    """Numerical toolkit for Sobolev spaces on tori and quasi-periodic Bloch problems."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(message)s",
        handlers=[RichHandler(console=console, show_path=False)],
        force=True,
    )


@app.command("enumerate")
def enumerate_frequencies(
    input_path: Path = typer.Option(..., "--input", "-i", help="Weight JSON document"),
    d: str = typer.Option(..., "--d", help="Sublevel: list frequencies with gamma(k) <= d, e.g. '6pi'"),
    window: Optional[int] = typer.Option(
        None,
        "--window",
        help="Box radius, required when the weight has no finiteness certificate",
    ),
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="CSV destination (default: stdout)"),
):
    """List the gamma sublevel set as CSV (k_1..k_m, gamma, exact)."""
    with _command_errors():
        config = RunConfig("enumerate", (input_path,), output, d=_parse_single(d, "--d"), window=window)
        weight = weight_from_dict(load_json(input_path))
        sublevel = enumerate_sublevel(weight, config.d, config.window)
        gammas = weight.values(sublevel.as_array()) if len(sublevel) else []
        with _data_stream(config.output) as handle:
            write_sublevel_csv(handle, sublevel, gammas)

        scope = "exact" if sublevel.exact else f"inside window {sublevel.window} only"
        console.print(f"[bold]{len(sublevel)}[/bold] frequencies with gamma <= {config.d:g} ({scope})")


@app.command()
def compactness(
    input_path: Path = typer.Option(..., "--input", "-i", help="Weight JSON document"),
    levels: str = typer.Option(..., "--levels", help="Ascending sublevels, e.g. '2pi,4pi,6pi'"),
    windows: str = typer.Option("5,10,20,40", "--windows", help="Window radii for growth evidence"),
    top: int = typer.Option(10, "--top", help="Number of leading T-spectrum values to report"),
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="JSON destination (default: stdout)"),
):
    """Check that every sublevel set is finite and report the leading spectrum of T."""
    with _command_errors():
        config = RunConfig(
            "compactness",
            (input_path,),
            output,
            levels=tuple(parse_float_list(levels, "--levels")),
            windows=_parse_int_list(windows, "--windows"),
            top=top,
        )
        weight = weight_from_dict(load_json(input_path))
        report = condition_c_report(weight, config.levels, config.windows)
        spectrum_window = max(config.windows)
        spectrum = t_spectrum(weight, spectrum_window, config.top)

        payload = report.to_dict()
        payload["t_spectrum"] = {"window": spectrum_window, "values": spectrum}
        with _data_stream(config.output) as handle:
            write_json(handle, payload)
        _display_report(report)


def _display_report(report) -> None:
    """Summarize a finiteness report as a table on stderr."""
    table = Table(title=f"Sublevel counts for {escape(report.weight.describe())}")
    table.add_column("d", justify="right", style="cyan")
    table.add_column("exact count", justify="right")
    for radius in report.windows:
        table.add_column(f"R={radius}", justify="right")
    for entry in report.levels:
        exact = str(entry.exact_count) if entry.exact_count is not None else "-"
        table.add_row(f"{entry.level:.6g}", exact, *[str(c) for c in entry.window_counts])
    console.print(table)

    colors = {"CERTIFIED_FINITE": "green", "EVIDENCE_INFINITE": "red", "INCONCLUSIVE": "yellow"}
    verdict = report.verdict.value
    console.print(f"Verdict: [bold {colors[verdict]}]{verdict}[/bold {colors[verdict]}]")


@app.command()
def bands(
    input_path: Path = typer.Option(..., "--input", "-i", help="Bloch problem JSON document"),
    theta_specs: Optional[List[str]] = typer.Option(
        None,
        "--theta-grid",
        help="Per-axis grid start:stop:count; repeat once per spatial axis (default: the problem's theta)",
    ),
    eigs: int = typer.Option(4, "--eigs", help="Number of bands per Bloch frequency"),
    workers: int = typer.Option(
        default_workers(),
        "--workers",
        "-p",
        help="Number of parallel processes (default: half of CPU cores)",
    ),
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="CSV destination (default: stdout)"),
):
    """Sweep Bloch frequencies and write the lowest bands as CSV."""
    with _command_errors():
        problem = problem_from_dict(load_json(input_path))
        thetas = tuple(theta_grid(theta_specs)) if theta_specs else (tuple(float(v) for v in problem.theta),)
        config = RunConfig("bands", (input_path,), output, thetas=thetas, eigs=eigs, workers=workers)
        if not problem.certified:
            console.print(
                "⚠️  [bold yellow]Warning:[/bold yellow] Lambda Lambda^T is singular, so the H^1_gamma "
                "embedding is not compact and the truncated bands need not converge as K grows."
            )
        console.print(
            f"[bold blue]Bloch sweep[/bold blue]: |K|={problem.size}, a0={problem.a0:.6g}, "
            f"{len(config.thetas)} frequencies, workers={config.workers}"
        )

        start_time = time.time()
        results = band_structure(problem, config.thetas, config.eigs, config.workers)
        console.print(f"   Solved in [green]{format_duration(time.time() - start_time)}[/green]")
        with _data_stream(config.output) as handle:
            write_bands_csv(handle, results, problem.lam.n, config.eigs)


@app.command("mean-value")
def mean_value(
    input_path: Path = typer.Option(..., "--input", "-i", help="Field JSON document"),
    t_list: str = typer.Option(..., "--t-list", help="Box sizes t, e.g. '25,50,100,200'"),
    dynamics_path: Optional[Path] = typer.Option(None, "--dynamics", help="Flow JSON: lambda and omega0"),
    deformation_path: Optional[Path] = typer.Option(
        None,
        "--deformation",
        help="Deformation JSON; compares the deformed box average with its closed form",
    ),
    averaging: Averaging = typer.Option(Averaging.UNIFORM, "--averaging", help="Box kernel: uniform or bump"),
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="CSV destination (default: stdout)"),
):
    """Tabulate box averages against the exact mean (or its deformed closed form)."""
    with _command_errors():
        if (dynamics_path is None) == (deformation_path is None):
            raise OperandError("pass exactly one of --dynamics or --deformation")
        extra_input = dynamics_path or deformation_path
        config = RunConfig(
            "mean-value",
            (input_path, extra_input),
            output,
            t_list=tuple(parse_float_list(t_list, "--t-list")),
            averaging=averaging,
        )
        f = field_from_dict(load_json(input_path))
        if not f.real_valued:
            console.print("⚠️  [bold yellow]Warning:[/bold yellow] field is complex; reporting real parts.")

        rows = []
        if deformation_path is not None:
            deformation = deformation_from_dict(load_json(deformation_path))
            reference = phi2_rhs(f, deformation)
            for t in config.t_list:
                rows.append((t, phi2_lhs_estimate(f, deformation, t, averaging=config.averaging), reference))
        else:
            lam, omega0 = dynamics_from_dict(load_json(dynamics_path))
            reference = exact_mean(f).real
            for t in config.t_list:
                estimate = mean_value_estimate(f, lam, omega0, t, averaging=config.averaging)
                rows.append((t, estimate.real, reference))

        with _data_stream(config.output) as handle:
            write_mean_value_csv(handle, rows)


@app.command()
def ergodic(
    input_path: Path = typer.Option(..., "--input", "-i", help="Flow JSON document with 'lambda'"),
    window: int = typer.Option(100, "--window", help="Search radius R for integer vectors k"),
    tol: float = typer.Option(1e-9, "--tol", help="Report k with |Lambda^T k| <= tol"),
    output: Optional[Path] = typer.Option(None, "--output", "-o", help="JSON destination (default: stdout)"),
):
    """Search for a character that is constant along the flow (an obstruction to density)."""
    with _command_errors():
        config = RunConfig("ergodic", (input_path,), output, window=window, tol=tol)
        lam, _ = dynamics_from_dict(load_json(input_path))
        verdict = density_kernel_test(lam, config.window, config.tol)
        payload = {
            "status": verdict.status.value,
            "obstruction": list(verdict.obstruction) if verdict.obstruction is not None else None,
            "window": verdict.window,
            "tol": verdict.tol,
            "min_norm": verdict.min_norm,
        }
        with _data_stream(config.output) as handle:
            write_json(handle, payload)
        console.print(f"Status: [bold]{verdict.status.value}[/bold] (min |Lambda^T k| = {verdict.min_norm:.3g})")


def main():
    """Main entry point for the CLI."""
    app()


if __name__ == "__main__":
    main()
