"""CLI commands for qbsense."""

import logging
import sys
from pathlib import Path
from typing import Annotated, Any

import click
import typer
from rich.console import Console
from rich.markup import escape
from typer.core import TyperGroup

from .config import OUTPUT_FORMATS, load_config, load_run_file, resolve_settings
from .exceptions import ConfigError, NumericalContractError, QbsenseError
from .models import ARTIFACT_VERSION, Config, OutputFormat
from .output import default_output_dir, default_output_path, write_manifest
from .recipes import execute, expand_sweep, get_recipe, run_sweep
from .utils import configure_logging, format_file_size, get_timestamp

logger = logging.getLogger(__name__)

try:  # Typer >= 0.22 raises exceptions from its vendored copy of click
    from typer._click.exceptions import UsageError as _TyperUsageError
except ImportError:  # pragma: no cover
    _TyperUsageError = click.UsageError
USAGE_ERRORS = (click.UsageError, _TyperUsageError)


class QbsenseGroup(TyperGroup):
    """Command group whose usage errors share the invalid-input exit code."""

    def invoke(self, ctx: click.Context) -> Any:
        try:
            return super().invoke(ctx)
        except USAGE_ERRORS as e:
            e.exit_code = 1
            raise


app = typer.Typer(
    name="qbsense",
    help="Quantum battery charging, sensing and squeezing simulations",
    no_args_is_help=True,
    cls=QbsenseGroup,
)
console = Console()

SWEEP_KEYS = ("command", "base", "grid", "jobs", "output_dir", "format", "workers")

ConfigOption = Annotated[
    Path | None, typer.Option("--config", "-c", help="Run file with per-command tables")
]
OutputOption = Annotated[Path | None, typer.Option("--output", "-o", help="Result file path")]
FormatOption = Annotated[str | None, typer.Option("--format", help="Output format: csv or json")]
StrictOption = Annotated[
    bool | None,
    typer.Option(
        "--strict-leakage/--no-strict-leakage",
        help="Fail instead of flagging truncation contamination",
    ),
]
VerboseOption = Annotated[bool, typer.Option("--verbose", "-v", help="Debug logging")]

NOption = Annotated[int | None, typer.Option("--n", help="Nonlinearity order n")]
QOption = Annotated[int | None, typer.Option("--q", help="Charge sector Q")]
GOption = Annotated[float | None, typer.Option("--g", help="QSL reference coupling g")]
GnOption = Annotated[float | None, typer.Option("--g-n", help="Coupling g_n (overrides --g)")]
Omega0Option = Annotated[float | None, typer.Option("--omega0", help="Battery frequency")]
EjOption = Annotated[float | None, typer.Option("--e-j", help="Circuit Josephson energy")]
Lambda1Option = Annotated[float | None, typer.Option("--lambda1", help="Circuit lambda_1")]
Lambda2Option = Annotated[float | None, typer.Option("--lambda2", help="Circuit lambda_2")]
PointsOption = Annotated[int | None, typer.Option("--points", help="Time grid points")]
TMaxOption = Annotated[float | None, typer.Option("--t-max", help="End of the time grid")]
WorkersOption = Annotated[int | None, typer.Option("--workers", help="Worker pool size")]


def handle_error(error: Exception, exit_code: int = 1) -> None:
    """Handle and display error with appropriate exit code.

    Args:
        error: The exception to handle
        exit_code: Exit code to use
    """
    console.print(f"[bold red]Error:[/bold red] {escape(str(error))}")
    sys.exit(exit_code)


def _output_format(value: Any, config: Config) -> OutputFormat:
    fmt = value if value is not None else config.output_format
    if fmt not in OUTPUT_FORMATS:
        raise ConfigError(f"Output format must be one of {OUTPUT_FORMATS}, got {fmt!r}")
    return fmt


def run_command(
    command: str,
    cli_values: dict[str, Any],
    config_file: Path | None,
    output: Path | None,
    fmt: str | None,
    strict_leakage: bool | None,
) -> None:
    """Resolve settings for one command, run it and report the written file."""
    try:
        config = load_config()
        table = dict(load_run_file(config_file).get(command, {})) if config_file else {}
        table_output = table.pop("output", None)
        table_format = table.pop("format", None)
        output_format = _output_format(fmt or table_format, config)

        recipe = get_recipe(command)
        settings = resolve_settings(recipe.defaults(config), table, cli_values)
        logger.debug("Resolved %s settings: %s", command, settings)

        if output is not None:
            path = output
        elif table_output is not None:
            path = Path(table_output)
        else:
            path = default_output_path(command, output_format, config.output_dir)
        strict = config.strict_leakage if strict_leakage is None else strict_leakage

        result, size = execute(command, settings, path, output_format, strict)

        if result.leakage_flagged:
            console.print(
                "[yellow]Warning:[/yellow] Truncation contamination flagged; "
                "consider larger cutoffs"
            )
        if result.summary:
            console.print(f"[green]>[/green] {escape(result.summary)}")
        console.print(
            f"[green]>[/green] Wrote {len(result.records)} records to '{escape(str(path))}' "
            f"({format_file_size(size)})"
        )

    except NumericalContractError as e:
        handle_error(e, exit_code=2)
    except QbsenseError as e:
        handle_error(e, exit_code=1)


@app.command(name="charge")
def charge_command(
    n: NOption = None,
    q: QOption = None,
    g: GOption = None,
    g_n: GnOption = None,
    omega0: Omega0Option = None,
    e_j: EjOption = None,
    lambda1: Lambda1Option = None,
    lambda2: Lambda2Option = None,
    points: PointsOption = None,
    t_max: TMaxOption = None,
    config_file: ConfigOption = None,
    output: OutputOption = None,
    fmt: FormatOption = None,
    strict_leakage: StrictOption = None,
    verbose: VerboseOption = False,
) -> None:
    """Rabi charging of the battery in one charge sector.

    Starts from |1, Q - n> and records both populations, <n_b>, <Q> and the bare
    energy. The default window is [0, 2 t_c].
    """
    configure_logging(verbose)
    values = {
        "n": n,
        "q": q,
        "g": g,
        "g_n": g_n,
        "omega0": omega0,
        "e_j": e_j,
        "lambda1": lambda1,
        "lambda2": lambda2,
        "points": points,
        "t_max": t_max,
    }
    run_command("charge", values, config_file, output, fmt, strict_leakage)


@app.command(name="qfi")
def qfi_command(
    n: NOption = None,
    q: QOption = None,
    g: GOption = None,
    g_n: GnOption = None,
    omega0: Omega0Option = None,
    e_j: EjOption = None,
    lambda1: Lambda1Option = None,
    lambda2: Lambda2Option = None,
    points: PointsOption = None,
    t_max: TMaxOption = None,
    config_file: ConfigOption = None,
    output: OutputOption = None,
    fmt: FormatOption = None,
    strict_leakage: StrictOption = None,
    verbose: VerboseOption = False,
) -> None:
    """Quantum Fisher information of n_b during charging.

    The default window is [0, t_c]; the row nearest t_1 is marked.
    """
    configure_logging(verbose)
    values = {
        "n": n,
        "q": q,
        "g": g,
        "g_n": g_n,
        "omega0": omega0,
        "e_j": e_j,
        "lambda1": lambda1,
        "lambda2": lambda2,
        "points": points,
        "t_max": t_max,
    }
    run_command("qfi", values, config_file, output, fmt, strict_leakage)


@app.command(name="squeeze")
def squeeze_command(
    preset: Annotated[
        str | None, typer.Option("--preset", help="fig2, appd-n3 or appd-n6")
    ] = None,
    n: NOption = None,
    g_n: GnOption = None,
    alpha: Annotated[str | None, typer.Option("--alpha", help="Mode A amplitude, e.g. -4j")] = None,
    beta: Annotated[str | None, typer.Option("--beta", help="Mode B amplitude, e.g. 2")] = None,
    omega0: Omega0Option = None,
    points: PointsOption = None,
    t_max: TMaxOption = None,
    frame: Annotated[str | None, typer.Option("--frame", help="lab or rotating")] = None,
    grid_size: Annotated[
        int | None, typer.Option("--grid-size", help="Angle scan points per axis")
    ] = None,
    rescan_every: Annotated[
        int | None, typer.Option("--rescan-every", help="Full re-scan period")
    ] = None,
    concurrent: Annotated[
        bool | None, typer.Option("--concurrent/--sequential", help="Optimize on a thread pool")
    ] = None,
    workers: WorkersOption = None,
    cutoff_a: Annotated[int | None, typer.Option("--cutoff-a", help="Mode A cutoff")] = None,
    cutoff_b: Annotated[int | None, typer.Option("--cutoff-b", help="Mode B cutoff")] = None,
    config_file: ConfigOption = None,
    output: OutputOption = None,
    fmt: FormatOption = None,
    strict_leakage: StrictOption = None,
    verbose: VerboseOption = False,
) -> None:
    """Optimal two-mode quadrature squeezing of a coherent initial state.

    Pass complex amplitudes with an equals sign when they start with a minus:
    --alpha=-4j.
    """
    configure_logging(verbose)
    values = {
        "preset": preset,
        "n": n,
        "g_n": g_n,
        "alpha": alpha,
        "beta": beta,
        "omega0": omega0,
        "points": points,
        "t_max": t_max,
        "frame": frame,
        "grid_size": grid_size,
        "rescan_every": rescan_every,
        "concurrent": concurrent,
        "workers": workers,
        "cutoff_a": cutoff_a,
        "cutoff_b": cutoff_b,
    }
    run_command("squeeze", values, config_file, output, fmt, strict_leakage)


@app.command(name="spin-scaling")
def spin_scaling_command(
    n_min: Annotated[int | None, typer.Option("--n-min", help="Smallest spin number")] = None,
    n_max: Annotated[int | None, typer.Option("--n-max", help="Largest spin number")] = None,
    count: Annotated[int | None, typer.Option("--count", help="Log-spaced sizes")] = None,
    omega: Annotated[float | None, typer.Option("--omega", help="Spin frequency")] = None,
    chi: Annotated[float | None, typer.Option("--chi", help="Twisting strength")] = None,
    kac: Annotated[
        bool | None, typer.Option("--kac/--no-kac", help="Scale chi by 1/N")
    ] = None,
    config_file: ConfigOption = None,
    output: OutputOption = None,
    fmt: FormatOption = None,
    verbose: VerboseOption = False,
) -> None:
    """Charging power of the one-axis-twisting spin battery versus N."""
    configure_logging(verbose)
    values = {
        "n_min": n_min,
        "n_max": n_max,
        "count": count,
        "omega": omega,
        "chi": chi,
        "kac": kac,
    }
    run_command("spin-scaling", values, config_file, output, fmt, None)


@app.command(name="protocol")
def protocol_command(
    n: NOption = None,
    g: GOption = None,
    g_n: GnOption = None,
    omega0: Omega0Option = None,
    e_j: EjOption = None,
    lambda1: Lambda1Option = None,
    lambda2: Lambda2Option = None,
    phi: Annotated[float | None, typer.Option("--phi", help="Phase to sense")] = None,
    t_s: Annotated[float | None, typer.Option("--t-s", help="Sensing time")] = None,
    shots: Annotated[int | None, typer.Option("--shots", help="Measurement shots")] = None,
    seed: Annotated[int | None, typer.Option("--seed", help="Sampler seed")] = None,
    phi_points: Annotated[
        int | None, typer.Option("--phi-points", help="Sweep phi over this many points")
    ] = None,
    phi_max: Annotated[float | None, typer.Option("--phi-max", help="End of the phi sweep")] = None,
    concurrent: Annotated[
        bool | None, typer.Option("--concurrent/--sequential", help="Sweep on a thread pool")
    ] = None,
    workers: WorkersOption = None,
    config_file: ConfigOption = None,
    output: OutputOption = None,
    fmt: FormatOption = None,
    strict_leakage: StrictOption = None,
    verbose: VerboseOption = False,
) -> None:
    """Charge, sense a phase, recharge and estimate the phase from the outcomes."""
    configure_logging(verbose)
    values = {
        "n": n,
        "g": g,
        "g_n": g_n,
        "omega0": omega0,
        "e_j": e_j,
        "lambda1": lambda1,
        "lambda2": lambda2,
        "phi": phi,
        "t_s": t_s,
        "shots": shots,
        "seed": seed,
        "phi_points": phi_points,
        "phi_max": phi_max,
        "concurrent": concurrent,
        "workers": workers,
    }
    run_command("protocol", values, config_file, output, fmt, strict_leakage)


@app.command(name="sweep")
def sweep_command(
    config_file: Annotated[Path, typer.Argument(help="Run file with a [sweep] table")],
    output_dir: Annotated[
        Path | None, typer.Option("--output-dir", "-o", help="Directory for result files")
    ] = None,
    workers: WorkersOption = None,
    fmt: FormatOption = None,
    strict_leakage: StrictOption = None,
    verbose: VerboseOption = False,
) -> None:
    """Run a parameter sweep and write a manifest of all jobs.

    Jobs that fail are recorded in the manifest; the exit code is the worst job's.
    """
    configure_logging(verbose)
    try:
        config = load_config()
        table = load_run_file(config_file).get("sweep")
        if table is None:
            raise ConfigError(f"No [sweep] table in {config_file}")
        unknown = sorted(set(table) - set(SWEEP_KEYS))
        if unknown:
            raise ConfigError(f"Unknown [sweep] keys: {', '.join(unknown)}")

        output_format = _output_format(fmt or table.get("format"), config)
        if output_dir is not None:
            directory = output_dir
        elif "output_dir" in table:
            directory = Path(table["output_dir"])
        else:
            directory = default_output_dir() / "sweep"
        pool_size = workers or int(table.get("workers", config.workers))
        strict = config.strict_leakage if strict_leakage is None else strict_leakage

        jobs = expand_sweep(table, config, directory, output_format)
        entries = run_sweep(jobs, output_format, pool_size, strict)
        manifest = write_manifest(
            directory,
            entries,
            {
                "artifact_version": ARTIFACT_VERSION,
                "command": table["command"],
                "job_count": len(entries),
                "created_at": get_timestamp(),
            },
        )

        failed = [e for e in entries if e.status == "error"]
        for entry in failed:
            console.print(
                f"[yellow]Failed:[/yellow] '{escape(entry.job.output)}': "
                f"{escape(entry.message or '')}"
            )
        console.print(
            f"[green]>[/green] Ran {len(entries) - len(failed)}/{len(entries)} jobs, "
            f"manifest '{escape(str(manifest))}'"
        )
        if failed:
            sys.exit(max(e.exit_code for e in failed))

    except NumericalContractError as e:
        handle_error(e, exit_code=2)
    except QbsenseError as e:
        handle_error(e, exit_code=1)


if __name__ == "__main__":
    app()
