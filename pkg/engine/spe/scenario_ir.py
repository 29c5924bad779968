"""
scenario_ir.py — Design-model data types, model validation and
collaboration (interaction-count) analysis.

A DesignModel bundles every scenario-level diagram of one design:
    - sequence scenarios (participants + message steps),
    - activity models (actions, flows, decisions, fork/join pairs),
    - statecharts (states, transitions, composite states),
    - a deployment model (processing nodes, devices, allocation),
plus the performance annotations (node times, software resource requests)
and the processing-overhead matrix.

All types are frozen pydantic models; the JSON field names are the camelCase
aliases (`nodeTimes`, `speedFactor`, ...).
"""

from __future__ import annotations

import logging
import math
from typing import Annotated, Literal, Optional, Union

import networkx as nx
from pydantic import BaseModel, ConfigDict, Field, StringConstraints
from pydantic.alias_generators import to_camel

from spe.errors import Diagnostic

logger = logging.getLogger(__name__)

PROBABILITY_TOLERANCE = 1e-9

Identifier = Annotated[str, StringConstraints(pattern=r"^[A-Za-z_][A-Za-z0-9_]*$")]


class FrozenModel(BaseModel):
    """Base for every document type: immutable, strict keys, camelCase aliases."""

    model_config = ConfigDict(
        frozen=True,
        extra="forbid",
        alias_generator=to_camel,
        populate_by_name=True,
    )


# ── Sequence scenarios ────────────────────────────────────────────────────────

class Message(FrozenModel):
    step: Literal["message"] = "message"
    sender: Identifier = Field(alias="from")
    to: Identifier
    kind: Literal["sync", "async"] = "sync"
    action: Identifier


class SelfCall(FrozenModel):
    step: Literal["self"] = "self"
    on: Identifier
    action: Identifier
    repetitions: int = 1


class Loop(FrozenModel):
    step: Literal["loop"] = "loop"
    count: int
    body: tuple[Step, ...]


class AltBranch(FrozenModel):
    probability: float
    body: tuple[Step, ...]


class Alt(FrozenModel):
    step: Literal["alt"] = "alt"
    branches: tuple[AltBranch, ...]


class Par(FrozenModel):
    step: Literal["par"] = "par"
    branches: tuple[tuple[Step, ...], ...]


class Ref(FrozenModel):
    step: Literal["ref"] = "ref"
    scenario: Identifier


Step = Annotated[
    Union[Message, SelfCall, Loop, Alt, Par, Ref],
    Field(discriminator="step"),
]


class SequenceScenario(FrozenModel):
    name: Identifier
    participants: tuple[Identifier, ...]
    body: tuple[Step, ...]


# ── Activity models ───────────────────────────────────────────────────────────

class Edge(FrozenModel):
    source: Identifier = Field(alias="from")
    to: Identifier


class Outcome(FrozenModel):
    probability: float
    target: Identifier


class Decision(FrozenModel):
    """A decision node. `repetitions` annotates a loop-back outcome."""

    at: Identifier
    outcomes: tuple[Outcome, ...]
    repetitions: Optional[int] = None


class ForkJoin(FrozenModel):
    fork: Identifier
    join: Optional[Identifier] = None


class ActivityModel(FrozenModel):
    name: Identifier
    actions: tuple[Identifier, ...]
    edges: tuple[Edge, ...] = ()
    decisions: tuple[Decision, ...] = ()
    forks: tuple[ForkJoin, ...] = ()
    merges: tuple[Identifier, ...] = ()
    initial: Optional[Identifier] = None
    finals: tuple[Identifier, ...] = ()

    def node_ids(self) -> set[str]:
        """Every node the activity declares, of any kind."""
        nodes = set(self.actions) | set(self.merges) | set(self.finals)
        nodes |= {d.at for d in self.decisions}
        for pair in self.forks:
            nodes.add(pair.fork)
            if pair.join is not None:
                nodes.add(pair.join)
        if self.initial is not None:
            nodes.add(self.initial)
        return nodes


# ── Statecharts ───────────────────────────────────────────────────────────────

class Transition(FrozenModel):
    source: Identifier = Field(alias="from")
    to: Identifier
    event: Optional[Identifier] = None
    probability: Optional[float] = None


class Composite(FrozenModel):
    state: Identifier
    regions: tuple[tuple[Identifier, ...], ...]
    mode: Literal["sequential", "concurrent"] = "sequential"


class StateChartModel(FrozenModel):
    name: Identifier
    states: tuple[Identifier, ...]
    transitions: tuple[Transition, ...] = ()
    composites: tuple[Composite, ...] = ()
    initial: Optional[Identifier] = None
    finals: tuple[Identifier, ...] = ()


# ── Deployment ────────────────────────────────────────────────────────────────

class Device(FrozenModel):
    name: Identifier
    kind: Literal["cpu", "disk", "network", "delay"]
    scheduling: Literal["fcfs", "ps", "delay"] = "fcfs"
    speed_factor: float = 1.0


class ProcNode(FrozenModel):
    name: Identifier
    devices: tuple[Device, ...]


class DeploymentModel(FrozenModel):
    nodes: tuple[ProcNode, ...]
    allocation: dict[Identifier, Identifier] = Field(default_factory=dict)


# ── Annotations ───────────────────────────────────────────────────────────────

class PerformanceAnnotation(FrozenModel):
    """
    Attributes:
        node_times:        action -> elapsed time (abstract time units).
        resource_requests: action -> software resource -> request count.
        declared_demands:  action -> device -> published demand total, kept
                           only so it can be cross-checked against the matrix.
    """
    node_times: dict[Identifier, float] = Field(default_factory=dict)
    resource_requests: dict[Identifier, dict[Identifier, float]] = Field(default_factory=dict)
    declared_demands: dict[Identifier, dict[Identifier, float]] = Field(default_factory=dict)


class OverheadMatrix(FrozenModel):
    """per_request[k][j] = demand on device j per request of software resource k."""

    software_resources: tuple[Identifier, ...]
    devices: tuple[Identifier, ...]
    per_request: tuple[tuple[float, ...], ...]


class DesignModel(FrozenModel):
    performance_scenario: Optional[Identifier] = None
    scenario: tuple[SequenceScenario, ...] = ()
    activity: tuple[ActivityModel, ...] = ()
    statechart: tuple[StateChartModel, ...] = ()
    deployment: Optional[DeploymentModel] = None
    annotations: PerformanceAnnotation = Field(default_factory=PerformanceAnnotation)
    overhead: Optional[OverheadMatrix] = None
    combine: dict[Identifier, tuple[Identifier, ...]] = Field(default_factory=dict)

    def find_scenario(self, name: str) -> Optional[SequenceScenario]:
        return next((s for s in self.scenario if s.name == name), None)

    def diagram_names(self) -> list[str]:
        return (
            [s.name for s in self.scenario]
            + [a.name for a in self.activity]
            + [c.name for c in self.statechart]
        )

    def default_performance_scenario(self) -> Optional[str]:
        """The declared performance scenario, else the first diagram by kind."""
        if self.performance_scenario is not None:
            return self.performance_scenario
        names = self.diagram_names()
        return names[0] if names else None


for _model in (Loop, AltBranch, Alt, Par, SequenceScenario):
    _model.model_rebuild()


# ── Collaboration analysis ────────────────────────────────────────────────────

class InteractionMatrix(FrozenModel):
    components: tuple[Identifier, ...]
    in_count: dict[Identifier, float]
    out_count: dict[Identifier, float]


def derive_collaboration(s: SequenceScenario, weighted: bool = False) -> InteractionMatrix:
    """
    Count the arrows received and sent by every participant of a scenario.

    The default count is structural: every syntactic Message or SelfCall
    counts once, wherever it sits. With `weighted=True` each arrow counts
    as its expected number of executions (enclosing Loop counts and
    SelfCall repetitions multiply, Alt probabilities scale).

    A self-call adds one to both the in- and out-count of its participant.
    Ref steps are not expanded.
    """
    in_count = {c: 0.0 for c in s.participants}
    out_count = {c: 0.0 for c in s.participants}

    def visit(steps: tuple, weight: float) -> None:
        for step in steps:
            if isinstance(step, Message):
                in_count[step.to] = in_count.get(step.to, 0.0) + weight
                out_count[step.sender] = out_count.get(step.sender, 0.0) + weight
            elif isinstance(step, SelfCall):
                w = weight * step.repetitions if weighted else weight
                in_count[step.on] = in_count.get(step.on, 0.0) + w
                out_count[step.on] = out_count.get(step.on, 0.0) + w
            elif isinstance(step, Loop):
                visit(step.body, weight * step.count if weighted else weight)
            elif isinstance(step, Alt):
                for branch in step.branches:
                    visit(branch.body, weight * branch.probability if weighted else weight)
            elif isinstance(step, Par):
                for branch in step.branches:
                    visit(branch, weight)

    visit(s.body, 1.0)
    components = tuple(s.participants) + tuple(
        sorted(set(in_count) - set(s.participants))
    )
    return InteractionMatrix(components=components, in_count=in_count, out_count=out_count)


def rank_components(m: InteractionMatrix) -> list[tuple[str, float]]:
    """
    Order components by load score (in + out), highest first.

    Ties are broken by component name so the ranking is deterministic.
    """
    scores = [
        (c, m.in_count.get(c, 0.0) + m.out_count.get(c, 0.0))
        for c in m.components
    ]
    return sorted(scores, key=lambda item: (-item[1], item[0]))


# ── Validation ────────────────────────────────────────────────────────────────

def validate_model(m: DesignModel) -> list[Diagnostic]:
    """
    Check every invariant of a DesignModel.

    Returns:
        Diagnostics, empty iff the model is valid. Warnings do not make a
        model invalid; only error-severity entries do.
    """
    found: list[Diagnostic] = []
    scenarios = {s.name: s for s in m.scenario}

    for s in m.scenario:
        _validate_scenario(s, scenarios, found)
    _check_ref_cycles(m, found)
    for a in m.activity:
        _validate_activity(a, found)
    for sc in m.statechart:
        _validate_statechart(sc, found)
    if m.deployment is not None:
        _validate_deployment(m.deployment, found)
    _validate_annotations(m.annotations, found)
    if m.overhead is not None:
        _validate_overhead(m.overhead, m.annotations, found)
    for group, actions in m.combine.items():
        if len(actions) < 2:
            found.append(_error(f"combine/{group}", "a combine group needs at least two actions"))

    if m.performance_scenario is not None and m.performance_scenario not in m.diagram_names():
        found.append(_error(
            "performanceScenario",
            f"unknown diagram {m.performance_scenario!r}",
        ))

    logger.debug("validate_model: %d diagnostic(s)", len(found))
    return found


def _error(location: str, message: str) -> Diagnostic:
    return Diagnostic(severity="error", location=location, message=message)


def _check_probabilities(probabilities: list[float], location: str, found: list[Diagnostic]) -> None:
    for p in probabilities:
        if not (0.0 <= p <= 1.0) or math.isnan(p):
            found.append(_error(location, f"probability {p:g} outside [0, 1]"))
            return
    total = math.fsum(probabilities)
    if abs(total - 1.0) > PROBABILITY_TOLERANCE:
        found.append(_error(location, f"branch probabilities sum to {total:g}"))


def _validate_scenario(
    s: SequenceScenario,
    scenarios: dict[str, SequenceScenario],
    found: list[Diagnostic],
) -> None:
    where = f"scenario/{s.name}"
    if not s.participants:
        found.append(_error(where, "scenario has no participants"))
    seen: set[str] = set()
    for p in s.participants:
        if p in seen:
            found.append(_error(where, f"duplicate participant {p!r}"))
        seen.add(p)
    if not s.body:
        found.append(_error(where, "scenario body is empty"))

    names: set[str] = set()

    def claim(name: str, location: str) -> None:
        # Node names become execution-graph node names, unique per graph.
        if name in names:
            found.append(_error(location, f"node name {name!r} is used more than once"))
        names.add(name)

    def visit(steps: tuple, path: str) -> None:
        for i, step in enumerate(steps):
            here = f"{path}[{i}]"
            if isinstance(step, Message):
                for end in (step.sender, step.to):
                    if end not in seen:
                        found.append(_error(here, f"undeclared participant {end!r}"))
                claim(step.action, here)
            elif isinstance(step, SelfCall):
                if step.on not in seen:
                    found.append(_error(here, f"undeclared participant {step.on!r}"))
                if step.repetitions < 0:
                    found.append(_error(here, f"repetition count {step.repetitions} is negative"))
                claim(step.action, here)
            elif isinstance(step, Loop):
                if step.count < 0:
                    found.append(_error(here, f"repetition count {step.count} is negative"))
                visit(step.body, f"{here}/body")
            elif isinstance(step, Alt):
                if not step.branches:
                    found.append(_error(here, "alt has no branches"))
                else:
                    _check_probabilities([b.probability for b in step.branches], here, found)
                for j, branch in enumerate(step.branches):
                    visit(branch.body, f"{here}/branches[{j}]")
            elif isinstance(step, Par):
                if not step.branches:
                    found.append(_error(here, "par has no branches"))
                for j, branch in enumerate(step.branches):
                    visit(branch, f"{here}/branches[{j}]")
            elif isinstance(step, Ref):
                if step.scenario not in scenarios:
                    found.append(_error(here, f"reference to unknown scenario {step.scenario!r}"))
                claim(step.scenario, here)

    visit(s.body, f"{where}/body")


def _check_ref_cycles(m: DesignModel, found: list[Diagnostic]) -> None:
    def collect(steps: tuple, into: set[str]) -> None:
        for step in steps:
            if isinstance(step, Ref):
                into.add(step.scenario)
            elif isinstance(step, Loop):
                collect(step.body, into)
            elif isinstance(step, Alt):
                for branch in step.branches:
                    collect(branch.body, into)
            elif isinstance(step, Par):
                for branch in step.branches:
                    collect(branch, into)

    graph = nx.DiGraph()
    for s in m.scenario:
        targets: set[str] = set()
        collect(s.body, targets)
        graph.add_node(s.name)
        graph.add_edges_from((s.name, t) for t in sorted(targets))

    # One report per cyclic component, at the reference that closes the cycle.
    for component in sorted(nx.strongly_connected_components(graph), key=min):
        start = min(component)
        if len(component) == 1 and not graph.has_edge(start, start):
            continue
        *_, (source, target) = nx.find_cycle(graph.subgraph(component), source=start)
        found.append(_error(f"scenario/{source}", f"cyclic reference through {target!r}"))


def _validate_activity(a: ActivityModel, found: list[Diagnostic]) -> None:
    where = f"activity/{a.name}"
    nodes = a.node_ids()
    if a.initial is None:
        found.append(_error(where, "activity has no initial node"))
    if not a.finals:
        found.append(_error(where, "activity has no final node"))
    if len(set(a.actions)) != len(a.actions):
        found.append(_error(where, "duplicate action names"))
    for edge in a.edges:
        for end in (edge.source, edge.to):
            if end not in nodes:
                found.append(_error(f"{where}/edges", f"undeclared node {end!r}"))
    for d in a.decisions:
        here = f"{where}/decisions/{d.at}"
        if not d.outcomes:
            found.append(_error(here, "decision has no outcomes"))
            continue
        _check_probabilities([o.probability for o in d.outcomes], here, found)
        for o in d.outcomes:
            if o.target not in nodes:
                found.append(_error(here, f"undeclared node {o.target!r}"))
        if d.repetitions is not None and d.repetitions < 0:
            found.append(_error(here, f"repetition count {d.repetitions} is negative"))
    for pair in a.forks:
        if pair.join is None:
            found.append(_error(f"{where}/forks/{pair.fork}", f"fork {pair.fork!r} has no matching join"))


def _validate_statechart(sc: StateChartModel, found: list[Diagnostic]) -> None:
    where = f"statechart/{sc.name}"
    states = set(sc.states)
    if len(states) != len(sc.states):
        found.append(_error(where, "duplicate state names"))
    if sc.initial is None or sc.initial not in states:
        found.append(_error(where, f"initial state {sc.initial!r} is not declared"))
    for final in sc.finals:
        if final not in states:
            found.append(_error(where, f"final state {final!r} is not declared"))
    for t in sc.transitions:
        for end in (t.source, t.to):
            if end not in states:
                found.append(_error(f"{where}/transitions", f"undeclared state {end!r}"))
    substates: set[str] = set()
    for comp in sc.composites:
        here = f"{where}/composites/{comp.state}"
        if comp.state not in states:
            found.append(_error(here, f"composite state {comp.state!r} is not declared"))
        if comp.mode == "concurrent" and len(comp.regions) < 2:
            found.append(_error(here, "a concurrent composite needs at least two regions"))
        if not comp.regions:
            found.append(_error(here, "composite has no regions"))
        for region in comp.regions:
            for sub in region:
                if sub in substates or sub in states:
                    found.append(_error(here, f"sub-state {sub!r} is declared more than once"))
                substates.add(sub)


def _validate_deployment(dep: DeploymentModel, found: list[Diagnostic]) -> None:
    node_names = [n.name for n in dep.nodes]
    if len(set(node_names)) != len(node_names):
        found.append(_error("deployment", "duplicate processing node names"))
    for node in dep.nodes:
        seen: set[str] = set()
        for dev in node.devices:
            here = f"deployment/{node.name}/{dev.name}"
            if dev.name in seen:
                found.append(_error(here, f"duplicate device {dev.name!r} on node {node.name!r}"))
            seen.add(dev.name)
            if not dev.speed_factor > 0:
                found.append(_error(here, f"speed factor {dev.speed_factor:g} must be positive"))
    for component, node in dep.allocation.items():
        if node not in node_names:
            found.append(_error(
                f"deployment/allocation/{component}",
                f"component allocated to undeclared node {node!r}",
            ))


def _validate_annotations(ann: PerformanceAnnotation, found: list[Diagnostic]) -> None:
    for action, t in ann.node_times.items():
        if not t >= 0:
            found.append(_error(f"annotations/nodeTimes/{action}", f"time {t:g} is negative"))
    for action, requests in ann.resource_requests.items():
        for resource, count in requests.items():
            if not count >= 0:
                found.append(_error(
                    f"annotations/resourceRequests/{action}/{resource}",
                    f"request count {count:g} is negative",
                ))


def _validate_overhead(ov: OverheadMatrix, ann: PerformanceAnnotation, found: list[Diagnostic]) -> None:
    if len(ov.per_request) != len(ov.software_resources):
        found.append(_error(
            "overhead",
            f"{len(ov.per_request)} rows for {len(ov.software_resources)} software resources",
        ))
    for k, row in enumerate(ov.per_request):
        if len(row) != len(ov.devices):
            found.append(_error(f"overhead/perRequest[{k}]", f"{len(row)} columns for {len(ov.devices)} devices"))
        if any(not v >= 0 for v in row):
            found.append(_error(f"overhead/perRequest[{k}]", "overhead entries must be non-negative"))
    known = set(ov.software_resources)
    for action, requests in ann.resource_requests.items():
        for resource in requests:
            if resource not in known:
                found.append(_error(
                    f"annotations/resourceRequests/{action}",
                    f"unknown software resource {resource!r}",
                ))
