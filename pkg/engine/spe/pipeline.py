"""
pipeline.py — The assessment process, from model document to recommendation.

Responsibilities:
    - run_pipeline: build and solve the software and system execution models
      for one design and judge them against its performance objectives.
    - compare_alternatives: run several designs against the same objectives
      and rank them.

Process steps as numbered in reports and errors:
    1   read the design model
    2   validate it and derive the performance scenario's execution graph
    3   derive the activity-model graphs
    4   rank components by collaboration load
    5   solve the software execution model (path metrics, device demands)
    6   derive the statechart graphs
    7   map device demands onto the deployment (queueing network)
    8   solve the system execution model, optionally simulate it
    9   check every objective
    10  recommend proceeding or revising the design
Steps whose diagrams or inputs are missing are skipped and listed in the report.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Literal, Optional, Union

from pydantic import Field, ValidationError, model_validator

from spe.derive import CombineRules, combine_annotation, derive_diagram, from_activity, from_statechart
from spe.errors import (
    Diagnostic,
    GraphError,
    ModelError,
    NetworkError,
    PipelineError,
    SpeError,
    errors_only,
)
from spe.execgraph import ExecutionGraph, validate_graph
from spe.loader import load_json_file, load_model
from spe.scenario_ir import DesignModel, derive_collaboration, rank_components, validate_model
from spe.simqnet import AgreementReport, SimConfig, SimMetrics, cross_validate, simulate
from spe.softmodel import (
    DemandVector,
    Objective,
    PathMetrics,
    ResultModel,
    Verdict,
    check_declared_demands,
    check_objective,
    device_demands,
    solve_static,
)
from spe.sysmodel import (
    BottleneckReport,
    ClosedWorkload,
    NodePA,
    OpenWorkload,
    QueueingNetwork,
    SystemMetrics,
    Workload,
    annotate_deployment,
    bottleneck_report,
    build_network,
    parse_workload_spec,
    solve,
)

logger = logging.getLogger(__name__)


# ── Configuration ─────────────────────────────────────────────────────────────

class PipelineConfig(ResultModel):
    model_path: Path
    objectives: tuple[Objective, ...]
    workload: Optional[Workload] = None
    simulate: bool = False
    sim_config: Optional[SimConfig] = None
    output_format: Literal["text", "structured", "dot"] = "text"
    uniform_probs: bool = False
    rel_tol: float = Field(default=0.05, ge=0)
    workers: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _simulation_settings(self) -> "PipelineConfig":
        if self.simulate != (self.sim_config is not None):
            raise ValueError("simConfig must be given exactly when simulate is set")
        if self.simulate and self.workload is None:
            raise ValueError("simulation needs a workload")
        return self


# ── Reports ───────────────────────────────────────────────────────────────────

class RankedComponent(ResultModel):
    component: str
    load_score: float


class SkippedStep(ResultModel):
    step: int
    reason: str


class AssessmentReport(ResultModel):
    model: str
    scenario: str
    graph: ExecutionGraph = Field(exclude=True)
    path_metrics: PathMetrics
    demand_vector: Optional[DemandVector] = None
    system_metrics: Optional[SystemMetrics] = None
    bottleneck: Optional[BottleneckReport] = None
    node_annotations: tuple[NodePA, ...] = ()
    sim: Optional[SimMetrics] = None
    agreement: Optional[AgreementReport] = None
    collaboration_ranking: tuple[RankedComponent, ...] = ()
    derived_graphs: tuple[str, ...] = ()
    verdicts: tuple[Verdict, ...] = ()
    recommendation: Literal["proceed", "revise"]
    skipped_steps: tuple[SkippedStep, ...] = ()
    diagnostics: tuple[Diagnostic, ...] = ()

    @property
    def passed(self) -> int:
        return sum(v.passed for v in self.verdicts)


class RankedAlternative(ResultModel):
    index: int
    model: str
    passed: int
    average: float


class ComparisonReport(ResultModel):
    alternatives: tuple[AssessmentReport, ...]
    ranking: tuple[RankedAlternative, ...]


class StaticReport(ResultModel):
    scenario: str
    path_metrics: PathMetrics
    demand_vector: Optional[DemandVector] = None


class SystemReport(ResultModel):
    scenario: str
    system_metrics: SystemMetrics
    bottleneck: BottleneckReport
    node_annotations: tuple[NodePA, ...]


class ObjectivesFile(ResultModel):
    """The objectives document: performance requirements and an optional workload spec."""

    objectives: tuple[Objective, ...]
    workload: Optional[str] = None


def load_objectives(path: Path | str) -> tuple[tuple[Objective, ...], Optional[Workload]]:
    """
    Read an objectives document.

    Raises:
        ModelError: If the file is missing or malformed.
        ValueError: If the workload spec is malformed.
    """
    raw = load_json_file(path)
    try:
        doc = ObjectivesFile.model_validate(raw)
    except ValidationError as exc:
        raise ModelError(f"invalid objectives file {path}: {exc}") from exc
    workload = parse_workload_spec(doc.workload) if doc.workload else None
    return doc.objectives, workload


# ── Solving one model ─────────────────────────────────────────────────────────

def performance_graph(model: DesignModel, scenario: Optional[str] = None) -> tuple[str, ExecutionGraph]:
    """Derive the graph of the named diagram, or of the model's performance scenario."""
    name = scenario or model.default_performance_scenario()
    if name is None:
        raise GraphError("the model has no scenario, activity or statechart to assess")
    return name, derive_diagram(model, name)


def solve_software(
    model: DesignModel,
    graph: ExecutionGraph,
) -> tuple[PathMetrics, Optional[DemandVector], list[Diagnostic]]:
    """
    Solve the software execution model of one graph.

    Combine groups get summed annotations first. Device demands need the
    processing-overhead matrix and are None without it.

    Returns:
        (path metrics, device demands, declared-demand warnings)
    """
    annotation = combine_annotation(model.annotations, CombineRules.of(model.combine))
    missing = errors_only(validate_graph(graph, annotation))
    if missing:
        raise GraphError("; ".join(str(d) for d in missing))
    metrics = solve_static(graph, annotation)
    if model.overhead is None:
        logger.warning("No processing-overhead matrix; device demands not computed")
        return metrics, None, []
    demands = device_demands(graph, annotation, model.overhead)
    return metrics, demands, check_declared_demands(annotation, model.overhead)


def solve_static_model(model: DesignModel, scenario: Optional[str] = None) -> StaticReport:
    name, graph = performance_graph(model, scenario)
    metrics, demands, _ = solve_software(model, graph)
    return StaticReport(scenario=name, path_metrics=metrics, demand_vector=demands)


def system_network(model: DesignModel, scenario: Optional[str] = None) -> tuple[str, QueueingNetwork]:
    """Build the queueing network of the model's performance scenario."""
    name, graph = performance_graph(model, scenario)
    _, demands, _ = solve_software(model, graph)
    if demands is None:
        raise NetworkError("the model has no processing-overhead matrix")
    if model.deployment is None:
        raise NetworkError("the model has no deployment")
    return name, build_network(demands, model.deployment)


def solve_system_model(
    model: DesignModel,
    workload: Union[OpenWorkload, ClosedWorkload],
    scenario: Optional[str] = None,
) -> SystemReport:
    name, network = system_network(model, scenario)
    metrics = solve(network, workload)
    return SystemReport(
        scenario=name,
        system_metrics=metrics,
        bottleneck=bottleneck_report(network, workload),
        node_annotations=tuple(annotate_deployment(model.deployment, metrics)),
    )


# ── Pipeline ──────────────────────────────────────────────────────────────────

@contextmanager
def _step(number: int) -> Iterator[None]:
    """Re-raise any model, graph or network error as a PipelineError for this step."""
    try:
        yield
    except PipelineError:
        raise
    except (SpeError, ValueError) as exc:
        logger.error("Step %d failed: %s", number, exc)
        raise PipelineError(number, str(exc)) from exc


def run_pipeline(cfg: PipelineConfig) -> AssessmentReport:
    """
    Assess one design against its objectives.

    Returns:
        The AssessmentReport. Its recommendation is "proceed" iff every
        objective passes.

    Raises:
        PipelineError: When a step fails (the step number is attached), or
                       when no objectives are given.
    """
    if not cfg.objectives:
        raise PipelineError(9, "no performance requirements given")

    skipped: list[SkippedStep] = []
    diagnostics: list[Diagnostic] = []

    def skip(step: int, reason: str) -> None:
        logger.info("Skipping step %d: %s", step, reason)
        skipped.append(SkippedStep(step=step, reason=reason))

    with _step(1):
        model = load_model(cfg.model_path, uniform_probs=cfg.uniform_probs)

    with _step(2):
        problems = validate_model(model)
        errors = errors_only(problems)
        if errors:
            raise ValueError("invalid model: " + "; ".join(str(d) for d in errors))
        diagnostics.extend(problems)
        scenario, graph = performance_graph(model)
        logger.info("Step 2: derived performance scenario %s", scenario)

    derived: list[str] = []
    with _step(3):
        if not model.activity:
            skip(3, "no activity models")
        for a in model.activity:
            found = errors_only(validate_graph(from_activity(a)))
            if found:
                raise ValueError(f"activity {a.name!r}: " + "; ".join(str(d) for d in found))
            derived.append(a.name)

    ranking: tuple[RankedComponent, ...] = ()
    with _step(4):
        sequence = model.find_scenario(scenario) or (model.scenario[0] if model.scenario else None)
        if sequence is None:
            skip(4, "no sequence scenarios")
        else:
            ranking = tuple(
                RankedComponent(component=c, load_score=score)
                for c, score in rank_components(derive_collaboration(sequence))
            )

    demands: Optional[DemandVector] = None
    with _step(5):
        metrics, demands, found = solve_software(model, graph)
        diagnostics.extend(found)

    with _step(6):
        if not model.statechart:
            skip(6, "no statecharts")
        for sc in model.statechart:
            found = errors_only(validate_graph(from_statechart(sc)))
            if found:
                raise ValueError(f"statechart {sc.name!r}: " + "; ".join(str(d) for d in found))
            derived.append(sc.name)

    network = None
    with _step(7):
        if model.deployment is None:
            skip(7, "no deployment model")
        elif demands is None:
            skip(7, "no device demands")
        elif cfg.workload is None:
            skip(7, "no workload")
        else:
            network = build_network(demands, model.deployment)

    system: Optional[SystemMetrics] = None
    bottleneck: Optional[BottleneckReport] = None
    annotations: tuple[NodePA, ...] = ()
    sim: Optional[SimMetrics] = None
    agreement: Optional[AgreementReport] = None
    with _step(8):
        if network is None:
            skip(8, "no queueing network")
        else:
            system = solve(network, cfg.workload)
            bottleneck = bottleneck_report(network, cfg.workload)
            annotations = tuple(annotate_deployment(model.deployment, system))
            if cfg.simulate:
                sim = simulate(network, cfg.workload, cfg.sim_config, workers=cfg.workers)
                agreement = cross_validate(system, sim, cfg.rel_tol)

    with _step(9):
        verdicts = tuple(check_objective(metrics, o) for o in cfg.objectives)
        for v in verdicts:
            logger.info(
                "Objective %s <= %g: %s (margin %g)",
                v.objective.metric, v.objective.threshold, v.status, v.margin,
            )

    recommendation = "proceed" if all(v.passed for v in verdicts) else "revise"
    logger.info("Step 10: recommendation for %s is %s", cfg.model_path, recommendation)

    return AssessmentReport(
        model=Path(cfg.model_path).name,
        scenario=scenario,
        graph=graph,
        path_metrics=metrics,
        demand_vector=demands,
        system_metrics=system,
        bottleneck=bottleneck,
        node_annotations=annotations,
        sim=sim,
        agreement=agreement,
        collaboration_ranking=ranking,
        derived_graphs=tuple(derived),
        verdicts=verdicts,
        recommendation=recommendation,
        skipped_steps=tuple(skipped),
        diagnostics=tuple(diagnostics),
    )


# ── Design alternatives ───────────────────────────────────────────────────────

def compare_alternatives(cfgs: list[PipelineConfig], workers: Optional[int] = None) -> ComparisonReport:
    """
    Assess several designs against the same objectives and rank them.

    Ranking: most objectives passed first, then lowest average elapsed time,
    then input order.

    Args:
        cfgs:    Two or more configurations sharing one objective list.
        workers: Assess alternatives in a process pool of this size; the
                 report order does not depend on it.

    Raises:
        PipelineError: On fewer than two alternatives, differing objective
                       lists, or a failing alternative.
    """
    if len(cfgs) < 2:
        raise PipelineError(10, "comparing designs needs at least two alternatives")
    if any(c.objectives != cfgs[0].objectives for c in cfgs[1:]):
        raise PipelineError(10, "alternatives must share the same objectives")

    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = tuple(pool.map(run_pipeline, cfgs))
    else:
        reports = tuple(run_pipeline(c) for c in cfgs)

    order = sorted(
        range(len(reports)),
        key=lambda i: (-reports[i].passed, reports[i].path_metrics.average, i),
    )
    ranking = tuple(
        RankedAlternative(
            index=i,
            model=reports[i].model,
            passed=reports[i].passed,
            average=reports[i].path_metrics.average,
        )
        for i in order
    )
    logger.info("Best alternative: #%d (%s)", ranking[0].index, ranking[0].model)
    return ComparisonReport(alternatives=reports, ranking=ranking)
