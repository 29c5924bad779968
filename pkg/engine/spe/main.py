"""
main.py — Command-line entry point for the performance assessment toolkit.

Exposes:
    validate <model>                               — check a model document
    derive <model> [--dot] [--scenario NAME]       — execution graph of a scenario
    solve-static <model> [--scenario NAME]         — path metrics and device demands
    solve-system <model> --workload SPEC           — queueing-network solution
    simulate <model> --seed S --horizon H          — discrete-event simulation
    analyze <model> --objectives FILE              — the full assessment process
    compare <model>... --objectives FILE           — rank design alternatives
    schema                                         — JSON Schema of model documents

Exit codes: 0 proceed (or command succeeded), 1 objectives failed,
2 input or validation error. Reports go to standard output, log lines and
error messages to standard error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from spe import __version__
from spe.derive import derive_diagram
from spe.errors import SpeError, errors_only
from spe.execgraph import to_dot
from spe.loader import dump_canonical, load_model, to_document
from spe.pipeline import (
    PipelineConfig,
    compare_alternatives,
    load_objectives,
    run_pipeline,
    solve_static_model,
    solve_system_model,
    system_network,
)
from spe.report import FORMATS, render_comparison, render_report
from spe.scenario_ir import DesignModel, validate_model
from spe.simqnet import SimConfig, simulate
from spe.softmodel import check_declared_demands
from spe.sysmodel import ClosedWorkload, parse_workload_spec

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_OBJECTIVES_FAILED = 1
EXIT_INPUT_ERROR = 2

LOG_LEVEL_ENV = "SPE_LOG_LEVEL"


# ── Argument parsing ──────────────────────────────────────────────────────────

def _workload(text: str):
    try:
        return parse_workload_spec(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _add_simulation_options(p: argparse.ArgumentParser, required: bool) -> None:
    p.add_argument("--seed", type=int, required=required, default=None if required else 1,
                   help="64-bit unsigned seed")
    p.add_argument("--horizon", type=float, required=required, default=None if required else 1e5,
                   help="simulated time per replication")
    p.add_argument("--warmup", type=float, default=None,
                   help="discarded start-up time (default: 10%% of the horizon)")
    p.add_argument("--replications", type=int, default=10)
    p.add_argument("--workers", type=int, default=None,
                   help="run replications in this many processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spe-assess",
        description="Design-time software performance assessment of scenario models.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--log-level",
        default=os.environ.get(LOG_LEVEL_ENV, "WARNING"),
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        type=str.upper,
        help=f"logging threshold (default: ${LOG_LEVEL_ENV} or WARNING)",
    )
    parser.add_argument("--uniform-probs", action="store_true",
                        help="fill missing branch probabilities uniformly")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a model document")
    p.add_argument("model", type=Path)

    p = sub.add_parser("derive", help="print the execution graph of a scenario")
    p.add_argument("model", type=Path)
    p.add_argument("--scenario", default=None)
    p.add_argument("--dot", action="store_true", help="print DOT instead of the graph document")

    p = sub.add_parser("solve-static", help="solve the software execution model")
    p.add_argument("model", type=Path)
    p.add_argument("--scenario", default=None)

    p = sub.add_parser("solve-system", help="solve the system execution model")
    p.add_argument("model", type=Path)
    p.add_argument("--workload", type=_workload, required=True, help="open:LAMBDA or closed:N,Z")
    p.add_argument("--scenario", default=None)

    p = sub.add_parser("simulate", help="simulate the system execution model")
    p.add_argument("model", type=Path)
    p.add_argument("--workload", type=_workload, default=ClosedWorkload(population=1),
                   help="open:LAMBDA or closed:N,Z (default: closed:1,0)")
    p.add_argument("--scenario", default=None)
    _add_simulation_options(p, required=True)

    p = sub.add_parser("analyze", help="run the full assessment")
    p.add_argument("model", type=Path)
    p.add_argument("--objectives", type=Path, required=True)
    p.add_argument("--workload", type=_workload, default=None,
                   help="overrides the objectives file's workload")
    p.add_argument("--simulate", action="store_true", help="cross-check the analytic solution")
    p.add_argument("--format", choices=FORMATS, default="text")
    _add_simulation_options(p, required=False)

    p = sub.add_parser("compare", help="rank design alternatives")
    p.add_argument("models", type=Path, nargs="+")
    p.add_argument("--objectives", type=Path, required=True)
    p.add_argument("--workload", type=_workload, default=None)
    p.add_argument("--format", choices=FORMATS, default="text")
    p.add_argument("--workers", type=int, default=None)

    sub.add_parser("schema", help="print the JSON Schema of model documents")
    return parser


# ── Commands ──────────────────────────────────────────────────────────────────

def _validate(args) -> int:
    model = load_model(args.model, uniform_probs=args.uniform_probs)
    found = validate_model(model)
    if model.overhead is not None:
        found += check_declared_demands(model.annotations, model.overhead)
    for d in found:
        print(d, file=sys.stderr)
    if errors_only(found):
        return EXIT_INPUT_ERROR
    print(f"{args.model.name}: valid ({len(model.diagram_names())} diagram(s))")
    return EXIT_OK


def _derive(args) -> int:
    model = load_model(args.model, uniform_probs=args.uniform_probs)
    name = args.scenario or model.default_performance_scenario()
    if name is None:
        raise SpeError("the model has no scenario, activity or statechart")
    graph = derive_diagram(model, name)
    sys.stdout.write(to_dot(graph) if args.dot else to_document(graph))
    return EXIT_OK


def _solve_static(args) -> int:
    model = load_model(args.model, uniform_probs=args.uniform_probs)
    sys.stdout.write(to_document(solve_static_model(model, args.scenario)))
    return EXIT_OK


def _solve_system(args) -> int:
    model = load_model(args.model, uniform_probs=args.uniform_probs)
    sys.stdout.write(to_document(solve_system_model(model, args.workload, args.scenario)))
    return EXIT_OK


def _sim_config(args) -> SimConfig:
    return SimConfig(
        horizon=args.horizon,
        warmup=args.warmup,
        seed=args.seed,
        replications=args.replications,
    )


def _simulate(args) -> int:
    model = load_model(args.model, uniform_probs=args.uniform_probs)
    _, network = system_network(model, args.scenario)
    metrics = simulate(network, args.workload, _sim_config(args), workers=args.workers)
    sys.stdout.write(to_document(metrics))
    return EXIT_OK


def _analyze(args) -> int:
    objectives, workload = load_objectives(args.objectives)
    cfg = PipelineConfig(
        model_path=args.model,
        objectives=objectives,
        workload=args.workload or workload,
        simulate=args.simulate,
        sim_config=_sim_config(args) if args.simulate else None,
        output_format=args.format,
        uniform_probs=args.uniform_probs,
        workers=args.workers,
    )
    report = run_pipeline(cfg)
    sys.stdout.write(render_report(report, cfg.output_format))
    return EXIT_OK if report.recommendation == "proceed" else EXIT_OBJECTIVES_FAILED


def _compare(args) -> int:
    objectives, workload = load_objectives(args.objectives)
    cfgs = [
        PipelineConfig(
            model_path=path,
            objectives=objectives,
            workload=args.workload or workload,
            output_format=args.format,
            uniform_probs=args.uniform_probs,
        )
        for path in args.models
    ]
    comparison = compare_alternatives(cfgs, workers=args.workers)
    sys.stdout.write(render_comparison(comparison, args.format))
    best = comparison.alternatives[comparison.ranking[0].index]
    return EXIT_OK if best.recommendation == "proceed" else EXIT_OBJECTIVES_FAILED


def _schema(args) -> int:
    sys.stdout.write(dump_canonical(DesignModel.model_json_schema(by_alias=True)))
    return EXIT_OK


_COMMANDS = {
    "validate": _validate,
    "derive": _derive,
    "solve-static": _solve_static,
    "solve-system": _solve_system,
    "simulate": _simulate,
    "analyze": _analyze,
    "compare": _compare,
    "schema": _schema,
}


# ── Entry point ───────────────────────────────────────────────────────────────

def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one subcommand and return its exit code.

    Args:
        argv: Command-line arguments without the program name; sys.argv[1:]
              when None.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT_ERROR

    logging.basicConfig(
        level=args.log_level,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    logger.debug("Running %s", args.command)

    try:
        return _COMMANDS[args.command](args)
    except (SpeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
