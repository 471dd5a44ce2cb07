"""Command-line entry point.

    torusgas run <config.yaml> [--set key.path=value ...] [--out DIR]
    torusgas list-experiments [--json]

Exit codes: 0 all verdicts pass, 1 a statistical verdict failed, 2 config
error (the message names the field), 3 a runtime rate bound was violated.
"""

from __future__ import annotations

import json
import sys
import time

import click

from .config import EXPERIMENTS, ConfigError, apply_overrides, load_config, validate_config
from .experiments import RUNNERS, write_outputs
from .model import RateBoundError
from .quadrature import QuadratureError


@click.group()
def main():
    """Interacting-particle simulation lab on a periodic box."""


@main.command("run")
@click.argument("config_path", type=click.Path())
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
              help="Override a config field by dotted path.")
@click.option("--out", "out_dir", default=None,
              help="Output directory (defaults to the config's output.directory).")
def run_command(config_path, overrides, out_dir):
    """Execute the experiment named in a config file."""
    try:
        cfg = load_config(config_path)
        cfg = apply_overrides(cfg, list(overrides))
        rc = validate_config(cfg)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)

    target = out_dir or rc.output["directory"]
    t0 = time.perf_counter()
    try:
        out = RUNNERS[rc.experiment](rc)
    except RateBoundError as exc:
        click.echo(f"rate bound violated: {exc}", err=True)
        sys.exit(3)
    except QuadratureError as exc:
        click.echo(f"quadrature refused: {exc}", err=True)
        sys.exit(3)
    wall = time.perf_counter() - t0

    report_path = write_outputs(rc, out, target, wall)
    click.echo(f"report: {report_path}")
    for name, ok in out.verdicts.items():
        click.echo(f"  {'PASS' if ok else 'FAIL'}  {name}")
    if out.verdicts and not all(out.verdicts.values()):
        sys.exit(1)
    sys.exit(0)


@main.command("list-experiments")
@click.option("--json", "as_json", is_flag=True, help="Machine-readable catalog.")
def list_experiments(as_json):
    """Show the experiment catalog with required config blocks."""
    if as_json:
        catalog = {name: {"description": info["description"],
                          "required_blocks": info["blocks"]}
                   for name, info in EXPERIMENTS.items()}
        click.echo(json.dumps(catalog, indent=2, sort_keys=True))
        return
    for name, info in EXPERIMENTS.items():
        blocks = ", ".join(info["blocks"])
        click.echo(f"{name:16s} {info['description']}  [blocks: {blocks}]")


if __name__ == "__main__":
    main()
