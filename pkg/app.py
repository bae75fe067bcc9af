import typer
from pathlib import Path
from typing import Optional

from loguru import logger
from rich.console import Console
from rich.table import Table

from mcflab.config import ChecksConfig, parse_config, sweep_values
from mcflab.lab import export_run, run_check_suite, run_config, run_sweep
from mcflab.mcflab_common import ExportFormat, McfLabError, SweepKey

# Remove all existing handlers; the callback installs one at the chosen level
logger.remove()
logger.enable("mcflab")

state = {"out": Path("runs"), "seed": None}


def rich_table(table: dict, title: str = 'Table') -> None:
    rich_table = Table(title=title)
    dimensions = [key for key in table.keys()]
    if not dimensions:
        Console().print(f"{title}: empty")
        return
    headings = ["name", *list(table.get(dimensions[0]).keys())]
    for i, col in enumerate(headings):
        rich_table.add_column(str(col), style="cyan", justify="left" if i == 0 else "right")
    for dim, data in table.items():
        rich_table.add_row(str(dim), *[_cell(data.get(col)) for col in headings[1:]])
    console = Console()
    console.print(rich_table)


def _cell(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


app = typer.Typer(help="Numerical experiments with mean curvature flow of closed hypersurfaces.")


@app.callback()
def main(
    out: Path = typer.Option(Path("runs"), "--out", "-o", help="Root directory for run outputs"),
    quiet: bool = typer.Option(False, "--quiet", "-q", help="Only log warnings and errors"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Override the scenario seed"),
):
    """
    Run, sweep, check and export mean curvature flow experiments.
    """
    logger.remove()
    logger.add(sink=lambda msg: print(msg, end=""), level="WARNING" if quiet else "INFO")
    state["out"] = out
    state["seed"] = seed


@app.command()
def run(
    config: Path = typer.Argument(
        ..., exists=True, file_okay=True, dir_okay=False, readable=True, help="Experiment config file"
    ),
):
    """Evolve the configured surface and write series.csv, snapshots and manifest.json."""
    run_dir = state["out"] / config.stem
    typer.echo(f"Running {config} into {run_dir}")
    try:
        outcome = run_config(config, run_dir, seed=state["seed"])
    except McfLabError as e:
        typer.echo(f"❌ Error: {str(e)}", err=True)
        raise typer.Exit(code=1)
    manifest = outcome.manifest
    singularity = manifest["singularity"]
    rich_table({config.stem: {"cause": manifest["cause"], "steps": manifest["steps"], "t": manifest["final_t"],
                              "T_est": singularity["T_est"], "type": singularity["typeI_verdict"],
                              "radius spread": manifest["roundness"]["radius_spread"]}},
               title="Run summary")
    if outcome.exit_code:
        typer.echo("❌ Monitored invariants violated:", err=True)
        for violation in outcome.violations:
            typer.echo(f"  • {violation}", err=True)
        raise typer.Exit(code=outcome.exit_code)
    typer.echo(f"✅ Run finished: {manifest['cause']}")


@app.command()
def sweep(
    config: Path = typer.Argument(
        ..., exists=True, file_okay=True, dir_okay=False, readable=True, help="Experiment config file"
    ),
    key: SweepKey = typer.Option(..., "--key", "-k", help="Scenario or flow parameter to vary"),
    values: str = typer.Option("", "--values", "-v", help="Comma separated values, e.g. 0.01,0.05,0.1"),
):
    """Run one experiment per value and write summary.csv."""
    out_dir = state["out"] / f"{config.stem}_sweep_{key.value}"
    try:
        scenario, flow, checks = parse_config(config)
        if state["seed"] is not None:
            scenario = scenario.model_validate({**scenario.model_dump(), "seed": state["seed"]})
        summary = run_sweep(scenario, flow, checks, key, sweep_values(values), out_dir)
    except McfLabError as e:
        typer.echo(f"❌ Error: {str(e)}", err=True)
        raise typer.Exit(code=1)
    rich_table({i: row for i, row in enumerate(summary.to_dict("records"))}, title=f"Sweep over {key.value}")
    typer.echo(f"✅ Sweep summary written to {out_dir / 'summary.csv'}")


@app.command()
def check(
    config: Optional[Path] = typer.Argument(
        None, exists=True, file_okay=True, dir_okay=False, readable=True,
        help="Optional config; its dimension n and [checks] section are used"
    ),
):
    """Evaluate the inequality suite on the fixed surface battery."""
    n, checks = 2, ChecksConfig()
    try:
        if config is not None:
            scenario, _, checks = parse_config(config)
            n = scenario.n
        report = run_check_suite(n, checks)
    except McfLabError as e:
        typer.echo(f"❌ Error: {str(e)}", err=True)
        raise typer.Exit(code=1)
    rich_table(report.rows, title=f"Inequality suite (n = {n})")
    rich_table({"max": report.maxima()}, title="Empirical maxima")
    if report.exit_code:
        typer.echo("❌ Hard inequalities violated:", err=True)
        for violation in report.violations:
            typer.echo(f"  • {violation}", err=True)
        raise typer.Exit(code=report.exit_code)
    typer.echo("✅ All hard inequalities hold within slack")


@app.command()
def export(
    run_dir: Path = typer.Argument(..., file_okay=False, dir_okay=True, help="Run directory with a manifest"),
    format: ExportFormat = typer.Option(ExportFormat.OBJ, "--format", "-f", help="Output format"),
):
    """Re-emit a run's snapshots in another format."""
    try:
        paths = export_run(run_dir, format)
    except McfLabError as e:
        typer.echo(f"❌ Error: {str(e)}", err=True)
        raise typer.Exit(code=1)
    typer.echo(f"✅ Exported {len(paths)} files to {run_dir / 'export' / format.value}")


if __name__ == "__main__":
    app()
