"""Command line entry point.

Every option of ``extract`` can also be set through a ``FLOWTSA_*``
environment variable (e.g. ``FLOWTSA_ACTIVE=120``).
"""

from __future__ import annotations

import logging
import sys

import click

from .export import FORMATS, MODES, render_schema
from .features import BURSTINESS_SOURCES, FeatureConfig
from .ingest import LENGTH_MODES, CaptureError
from .pipeline import Config, run


def _env(name: str) -> str:
    return f"FLOWTSA_{name.upper()}"


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Extract time-series features from flows in packet captures."""


@main.command()
@click.argument("inputs", nargs=-1, required=True, type=click.Path(dir_okay=False))
@click.option("-o", "--output", default="-", show_default=True, envvar=_env("output"),
              help="Data output path ('-' for stdout).")
@click.option("--format", "fmt", type=click.Choice(FORMATS), default="csv", show_default=True,
              envvar=_env("format"))
@click.option("--mode", type=click.Choice(MODES), default="full", show_default=True, envvar=_env("mode"))
@click.option("--active", type=float, default=300.0, show_default=True, envvar=_env("active"),
              help="Active timeout in seconds.")
@click.option("--inactive", type=float, default=65.0, show_default=True, envvar=_env("inactive"),
              help="Inactive timeout in seconds.")
@click.option("--oversample", type=float, default=4.0, show_default=True, envvar=_env("oversample"),
              help="Frequency grid oversampling factor.")
@click.option("--length-mode", type=click.Choice(LENGTH_MODES), default="transport_payload",
              show_default=True, envvar=_env("length_mode"))
@click.option("--min-packets", type=int, default=1, show_default=True, envvar=_env("min_packets"))
@click.option("--burstiness-source", type=click.Choice(BURSTINESS_SOURCES), default="values",
              show_default=True, envvar=_env("burstiness_source"),
              help="Series the burstiness feature is computed on.")
@click.option("--workers", type=int, default=1, show_default=True, envvar=_env("workers"))
@click.option("--reset-per-file", is_flag=True, envvar=_env("reset_per_file"),
              help="Flush the flow table at the end of each input file.")
@click.option("--figures", type=click.Path(file_okay=False), default=None, envvar=_env("figures"),
              help="Also render overview figures into this directory.")
@click.option("-q", "--quiet", is_flag=True, help="Suppress progress and summary output.")
def extract(inputs, output, fmt, mode, active, inactive, oversample, length_mode, min_packets,
            burstiness_source, workers, reset_per_file, figures, quiet):
    """Write one feature row per flow found in INPUTS."""
    config = Config(
        inputs=list(inputs), output=output, format=fmt, mode=mode, active_timeout=active,
        inactive_timeout=inactive, oversample=oversample, length_mode=length_mode,
        min_packets=min_packets, workers=workers, reset_per_file=reset_per_file, figures=figures,
        features=FeatureConfig(burstiness_source=burstiness_source),
    )
    try:
        config.validate()
    except ValueError as exc:
        raise click.UsageError(str(exc)) from None
    if not quiet:
        logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    summary = run(config)
    if not quiet or summary.status:
        for line in summary.lines():
            click.echo(line, err=True)
    sys.exit(summary.status)


@main.command()
@click.argument("inputs", nargs=-1, required=True, type=click.Path(dir_okay=False))
@click.option("--flow", "selector", required=True,
              help="Flow selector, e.g. 'src=10.0.0.1,dport=443' (fields: addr, port, src, dst, "
                   "sport, dport, proto, start, index).")
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.option("--active", type=float, default=300.0, show_default=True, envvar=_env("active"))
@click.option("--inactive", type=float, default=65.0, show_default=True, envvar=_env("inactive"))
@click.option("--length-mode", type=click.Choice(LENGTH_MODES), default="transport_payload",
              envvar=_env("length_mode"))
def plot(inputs, selector, output, active, inactive, length_mode):
    """Render one flow's time series as a stem plot."""
    from .plotting import SelectorError, plot_sfts

    if not 0 < inactive <= active:
        raise click.UsageError("timeouts must satisfy 0 < inactive <= active")
    try:
        plot_sfts(list(inputs), selector, output, active, inactive, length_mode)
    except SelectorError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from None
    except CaptureError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(output, err=True)


@main.command()
def schema():
    """Print the output column schema."""
    click.echo(render_schema(), nl=False)


if __name__ == "__main__":
    main()
