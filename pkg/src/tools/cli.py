"""
Command-line front end.

Subcommands: validate, run, converge, oracle-compare. Reports go to standard
output as JSON (tables for converge); log records and diagnostics warnings go
to standard error. Exit codes: 0 ok, 1 invalid network, 2 bad arguments or
configuration, 3 numerical failure (including linear-algebra and floating-point
errors raised by numpy or scipy). Any other unexpected exception exits 1.
"""

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, TextIO

import numpy as np

from src.services.convergence import DT_MODES, convergence_study, rows_to_frame
from src.services.oracle import oracle_compare
from src.services.report_service import (
    build_run_summary,
    build_validation_report,
    records_to_frame,
    write_records_csv,
    write_snapshots,
)
from src.state.fields import build_grids
from src.state.network_spec import NetworkSpec
from src.state.run_store import OutputPaths, RunConfig
from src.tools import engine
from src.tools.network import parse_network
from src.utils.config_parser import load_run_config
from src.utils.errors import ConfigError, NetchemoError, NetworkValidationError, NumericalError

logger = logging.getLogger("netchemo-cli")

PRECEDENCE = "Values given as flags override the configuration file, which overrides built-in defaults."


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netchemo",
        description="Hyperbolic-parabolic chemotaxis simulator on oriented networks. " + PRECEDENCE,
    )
    commands = parser.add_subparsers(dest="command", required=True)

    validate = commands.add_parser("validate", help="check a network description and report its invariants")
    validate.add_argument("network", help="network description (JSON)")

    run = commands.add_parser("run", help="simulate to t_final and write diagnostics", description=PRECEDENCE)
    run.add_argument("config", help="run configuration (JSON)")
    run.add_argument("--t-final", type=float, help="final time")
    run.add_argument("--cfl", type=float, help="CFL number in (0, 1]")
    run.add_argument("--cells", type=int, help="cells on every arc")
    run.add_argument("--out", type=Path, help="directory for diagnostics.csv and snapshots/")

    converge = commands.add_parser("converge", help="grid-refinement study", description=PRECEDENCE)
    converge.add_argument("config", help="run configuration (JSON)")
    converge.add_argument("--levels", type=int, required=True, help="number of levels (>= 3)")
    converge.add_argument("--base-cells", type=int, help="cells per arc on the coarsest level")
    converge.add_argument("--t-final", type=float, help="final time")
    converge.add_argument("--cfl", type=float, help="CFL number in (0, 1]")
    converge.add_argument("--dt-mode", choices=DT_MODES, default="cfl", help="dt ~ h (cfl) or dt ~ h^2 (parabolic)")

    oracle = commands.add_parser(
        "oracle-compare", help="main solver against the RK4 reference", description=PRECEDENCE
    )
    oracle.add_argument("config", help="run configuration (JSON)")
    oracle.add_argument("--dt-oracle", type=float, required=True, help="reference time step")
    oracle.add_argument("--t-final", type=float, help="final time")
    oracle.add_argument("--cfl", type=float, help="CFL number of the main solver")
    oracle.add_argument("--cells", type=int, help="cells on every arc")
    oracle.add_argument("--no-refine", action="store_true", help="skip the run with halved main dt")
    oracle.add_argument(
        "--refine", type=int, choices=(0, 1, 2), default=1, help="how many times the main dt is halved (default 1)"
    )
    return parser


def _read(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read {path}: {e}")


def load_network(path) -> NetworkSpec:
    return parse_network(_read(path))


def apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    """Replace file values by the flags that were given."""
    changes = {}
    if getattr(args, "t_final", None) is not None:
        changes["t_final"] = args.t_final
    if getattr(args, "cfl", None) is not None:
        changes["cfl"] = args.cfl
    if getattr(args, "cells", None) is not None:
        changes["n_cells"] = args.cells
    sim = dataclasses.replace(config.sim, **changes) if changes else config.sim

    outputs = config.outputs
    out = getattr(args, "out", None)
    if out is not None:
        outputs = OutputPaths(
            csv=out / "diagnostics.csv",
            snapshots=out / "snapshots" if outputs.snapshots is not None else None,
        )
    return dataclasses.replace(config, sim=sim, outputs=outputs)


def _print_json(payload, stream: TextIO) -> None:
    stream.write(json.dumps(payload, indent=2) + "\n")


def cmd_validate(args: argparse.Namespace, stream: TextIO) -> int:
    report = build_validation_report(_read(args.network))
    _print_json(report, stream)
    return 0 if report["valid"] else 1


def cmd_run(args: argparse.Namespace, stream: TextIO) -> int:
    config = apply_overrides(load_run_config(args.config), args)
    spec = load_network(config.network_path)
    keep = config.outputs.snapshots is not None
    result = engine.run(spec, config.sim, config.initial, keep_snapshots=keep)

    if config.outputs.csv is None:
        # no destination: the CSV is the primary output
        records_to_frame(result.records, spec.nodes).to_csv(
            stream, index=False, float_format="%.16e", lineterminator="\n"
        )
        return 0

    write_records_csv(result.records, spec.nodes, config.outputs.csv)
    if keep:
        write_snapshots(spec, result.snapshots, config.outputs.snapshots)
    summary = build_run_summary(result.records, result.wall_steps)
    summary["csv"] = str(config.outputs.csv)
    summary["toggles"] = config.sim.toggles.to_dict()
    _print_json(summary, stream)
    return 0


def cmd_converge(args: argparse.Namespace, stream: TextIO) -> int:
    config = apply_overrides(load_run_config(args.config), args)
    spec = load_network(config.network_path)
    base = args.base_cells
    if base is None:
        base = config.sim.n_cells if isinstance(config.sim.n_cells, int) else config.sim.n_cells["default"]
    rows = convergence_study(
        spec,
        config.initial,
        levels=args.levels,
        base_cells=base,
        t_final=config.sim.t_final,
        cfl=config.sim.cfl,
        toggles=config.sim.toggles,
        dt_mode=args.dt_mode,
    )
    stream.write(rows_to_frame(rows).to_string(index=False) + "\n")
    return 0


def cmd_oracle_compare(args: argparse.Namespace, stream: TextIO) -> int:
    config = apply_overrides(load_run_config(args.config), args)
    spec = load_network(config.network_path)
    result = oracle_compare(
        spec,
        build_grids(spec, config.sim.n_cells),
        config.initial,
        t_final=config.sim.t_final,
        cfl=config.sim.cfl,
        dt_oracle=args.dt_oracle,
        toggles=config.sim.toggles,
        refine=0 if args.no_refine else args.refine,
    )
    _print_json(result, stream)
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "run": cmd_run,
    "converge": cmd_converge,
    "oracle-compare": cmd_oracle_compare,
}


def main(argv: Optional[List[str]] = None, stream: Optional[TextIO] = None) -> int:
    """
    Parse ``argv`` and dispatch to a subcommand.

    Returns:
        int: process exit code
    """
    stream = stream or sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # argparse exits with 2 on bad arguments and 0 after --help
        return int(e.code or 0)

    try:
        return COMMANDS[args.command](args, stream)
    except NetworkValidationError as e:
        logger.error(f"{e}: " + "; ".join(f"{v.code} {v.subject}: {v.message}" for v in e.violations))
        return e.exit_code
    except NetchemoError as e:
        logger.error(f"{args.command} failed: {e}")
        return e.exit_code
    except (np.linalg.LinAlgError, ArithmeticError) as e:
        logger.error(f"{args.command} failed in a numerical kernel: {e}", exc_info=True)
        return NumericalError.exit_code
    except Exception as e:
        logger.error(f"Unexpected error in {args.command}: {e}", exc_info=True)
        return 1
