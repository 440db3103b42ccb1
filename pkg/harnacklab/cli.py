import json
import logging
import os
from typing import List, Optional, Sequence, Tuple

import click
from dotenv import load_dotenv

from . import __version__, configure_logging
from .config import FORMATS, ScenarioConfig, default_config, parse_batch, parse_config
from .errors import ConfigError, LabError
from .extensions import get_metrics_file
from .metrics import export_metrics
from .report import CLAIMS, LEMMA_HEADER, ReportRow, all_passed, summarize, write_report, write_table
from .scenarios import SCENARIOS, ScenarioOutcome, execute, run_batch

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


def _read(path: str) -> str:
    with open(path, encoding="utf-8") as f:
        return f.read()


def _resolve(target: str, config_path: Optional[str]) -> Tuple[List[ScenarioConfig], bool]:
    """Configs to run for a scenario name or a batch file, and whether it was a batch."""
    if target in SCENARIOS:
        if config_path is None:
            return [default_config(target)], False
        cfg = parse_config(_read(config_path))
        if cfg.name != target:
            raise ConfigError([("name", f"config is for {cfg.name!r}, not {target!r}")])
        return [cfg], False
    if os.path.isfile(target):
        return parse_batch(_read(target)), True
    raise click.UsageError(f"{target!r} is neither a registered scenario nor a batch file")


def _write_outputs(
    outcomes: Sequence[ScenarioOutcome], out_dir: str, fmt: str, batch: bool, include_runtime: bool
) -> str:
    for i, outcome in enumerate(outcomes):
        stem = f"{i:02d}-{outcome.name}" if batch else outcome.name
        for table, (header, rows) in outcome.tables.items():
            write_table(os.path.join(out_dir, f"{stem}-{table}.csv"), header, rows)
    rows: List[ReportRow] = [row for outcome in outcomes for row in outcome.rows]
    return write_report(rows, fmt, os.path.join(out_dir, f"report.{fmt}"), include_runtime)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="harnacklab")
def cli() -> None:
    """Numerical checks of boundary Harnack estimates."""


@cli.command("run")
@click.argument("target")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="Scenario config file.")
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), required=True, help="Master seed (unsigned 64-bit).")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None, help="Output directory.")
@click.option("--format", "fmt", type=click.Choice(FORMATS), default=None, help="Report format.")
@click.option("--parallel", is_flag=True, help="Run the scenarios of a batch in parallel.")
@click.option("--timings", is_flag=True, help="Add a runtime column to the report.")
def run_command(
    target: str,
    config_path: Optional[str],
    seed: int,
    out_dir: Optional[str],
    fmt: Optional[str],
    parallel: bool,
    timings: bool,
) -> int:
    """Run a scenario by name, or every scenario of a batch file."""
    configs, batch = _resolve(target, config_path)
    configs = [cfg.with_seed(seed) for cfg in configs]
    first = configs[0] if configs else None
    out = out_dir or (first.output_dir if first and not batch else ".")
    report_format = fmt or (first.output_format if first and not batch else "csv")

    outcomes = run_batch(configs, parallel=parallel)
    path = _write_outputs(outcomes, out, report_format, batch, timings)
    rows = [row for outcome in outcomes for row in outcome.rows]
    click.echo(summarize(rows))
    click.echo(f"Report written to {path}")
    return EXIT_PASS if all_passed(rows) else EXIT_FAIL


@cli.command("list")
def list_command() -> int:
    """Print the scenario registry with each claim and the result it checks."""
    for info in SCENARIOS.values():
        click.echo(f"{info.name}: {info.summary}")
        for tag in info.claims:
            click.echo(f"    {tag} [{CLAIMS[tag].anchor}]")
    return EXIT_PASS


@cli.command("check-lemmas")
@click.option("--dmax", type=click.IntRange(2, 10), default=10, show_default=True)
@click.option("--dmin", type=click.IntRange(2, 10), default=2, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=".", show_default=True)
def check_lemmas_command(dmax: int, dmin: int, out_dir: str) -> int:
    """Grid checks of the kernel inequalities; writes lemmas.csv."""
    if dmin > dmax:
        raise click.UsageError("--dmin must not exceed --dmax")
    cfg = parse_config(json.dumps({"name": "lemma-grid", "seed": 0, "params": {"dmin": dmin, "dmax": dmax}}))
    outcome = execute(cfg)
    header, rows = outcome.tables.get("lemmas", (LEMMA_HEADER, []))
    path = write_table(os.path.join(out_dir, "lemmas.csv"), header, rows)
    click.echo(summarize(outcome.rows))
    click.echo(f"Lemma table written to {path}")
    return EXIT_PASS if outcome.passed else EXIT_FAIL


@cli.command("validate")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--echo", is_flag=True, help="Print the configs with every default filled in.")
def validate_command(config_path: str, echo: bool) -> int:
    """Parse a config or batch file without running it."""
    configs = parse_batch(_read(config_path))
    click.echo(f"OK: {len(configs)} scenario config(s)")
    if echo:
        click.echo(json.dumps([cfg.to_dict() for cfg in configs], indent=2))
    return EXIT_PASS


def _report_config_error(e: ConfigError) -> None:
    if e.line is not None:
        click.echo(f"Config error at line {e.line}, column {e.column}:", err=True)
    else:
        click.echo("Config error:", err=True)
    for path, msg in e.errors:
        click.echo(f"  {path or '<root>'}: {msg}", err=True)


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    configure_logging()
    try:
        result = cli.main(args=list(argv) if argv is not None else None, prog_name="harnacklab", standalone_mode=False)
    except click.UsageError as e:
        e.show()
        return EXIT_USAGE
    except click.ClickException as e:
        e.show()
        return e.exit_code
    except click.Abort:
        click.echo("Aborted.", err=True)
        return EXIT_FAIL
    except ConfigError as e:
        _report_config_error(e)
        return EXIT_USAGE
    except LabError as e:
        logger.error(f"Run failed: {e}")
        click.echo(f"Error: {e}", err=True)
        return EXIT_FAIL
    finally:
        export_metrics(get_metrics_file())
    return result if isinstance(result, int) else EXIT_PASS


if __name__ == "__main__":
    raise SystemExit(main())
