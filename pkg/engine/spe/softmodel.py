"""
softmodel.py — Solving the static software execution model.

Two results come out of an annotated execution graph:
    - PathMetrics: best, worst and average elapsed time, by graph reduction;
    - DemandVector: total device demand, by pushing each node's software
      resource requests through the processing-overhead matrix.

Reduction rules for elapsed time (shortest / longest / average):
    Basic        t(name)                       for all three
    sequence     sum of members
    Repetition   n × body
    Case         min / max / Σ p_i × branch average
    Pardo        max over branches, per metric
    Split        0 (spawned work is off the critical path)
    Expanded     the sub-graph's metrics

Shortest and longest ignore branch probabilities: a branch with
probability 0 still bounds the worst case.
"""

from __future__ import annotations

import logging
import math
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from pydantic.alias_generators import to_camel

from spe.errors import Diagnostic, GraphError, errors_only
from spe.execgraph import (
    Basic,
    Case,
    ExecutionGraph,
    Expanded,
    Pardo,
    Repetition,
    Split,
    validate_graph,
)
from spe.scenario_ir import OverheadMatrix, PerformanceAnnotation

logger = logging.getLogger(__name__)

# Relative tolerance used when comparing computed and declared totals.
DECLARED_TOLERANCE = 1e-9


class ResultModel(BaseModel):
    """Base for solver results: immutable, camelCase when serialized."""

    model_config = ConfigDict(
        frozen=True,
        alias_generator=to_camel,
        populate_by_name=True,
        protected_namespaces=(),
    )


class PathMetrics(ResultModel):
    shortest: float
    longest: float
    average: float

    def metric(self, name: str) -> float:
        return getattr(self, name)


class DemandVector(ResultModel):
    per_device: dict[str, float]


class Objective(ResultModel):
    metric: Literal["shortest", "average", "longest"]
    threshold: float = Field(ge=0)
    comparator: Literal["<="] = "<="


class Verdict(ResultModel):
    objective: Objective
    value: float
    status: Literal["pass", "fail"]
    margin: float

    @property
    def passed(self) -> bool:
        return self.status == "pass"


_ZERO = PathMetrics(shortest=0.0, longest=0.0, average=0.0)


# ── Elapsed time ──────────────────────────────────────────────────────────────

def _require_valid(g: ExecutionGraph) -> None:
    problems = errors_only(validate_graph(g))
    if problems:
        raise GraphError("invalid execution graph: " + "; ".join(str(p) for p in problems))


def _seq_metrics(seq: tuple, times: dict[str, float]) -> PathMetrics:
    shortest = longest = average = 0.0
    for n in seq:
        m = _node_metrics(n, times)
        shortest += m.shortest
        longest += m.longest
        average += m.average
    return PathMetrics(shortest=shortest, longest=longest, average=average)


def _node_metrics(n, times: dict[str, float]) -> PathMetrics:
    if isinstance(n, Basic):
        try:
            t = times[n.name]
        except KeyError:
            raise GraphError(f"no time annotation for node {n.name!r}") from None
        return PathMetrics(shortest=t, longest=t, average=t)

    if isinstance(n, Expanded):
        return _seq_metrics(n.sub.body, times)

    if isinstance(n, Repetition):
        body = _seq_metrics(n.body, times)
        return PathMetrics(
            shortest=n.count * body.shortest,
            longest=n.count * body.longest,
            average=n.count * body.average,
        )

    if isinstance(n, Case):
        branches = [(b.probability, _seq_metrics(b.body, times)) for b in n.branches]
        return PathMetrics(
            shortest=min(m.shortest for _, m in branches),
            longest=max(m.longest for _, m in branches),
            average=math.fsum(p * m.average for p, m in branches),
        )

    if isinstance(n, Pardo):
        branches = [_seq_metrics(b, times) for b in n.branches]
        return PathMetrics(
            shortest=max(m.shortest for m in branches),
            longest=max(m.longest for m in branches),
            average=max(m.average for m in branches),
        )

    if isinstance(n, Split):
        return _ZERO

    raise GraphError(f"unknown execution-graph node: {n!r}")


def solve_static(g: ExecutionGraph, ann: PerformanceAnnotation) -> PathMetrics:
    """
    Best, worst and average elapsed time of an execution graph.

    Raises:
        GraphError: If the graph is invalid or a Basic node has no time.
    """
    _require_valid(g)
    metrics = _seq_metrics(g.body, ann.node_times)
    logger.info(
        "Static solution for %s: shortest=%g longest=%g average=%g",
        g.name, metrics.shortest, metrics.longest, metrics.average,
    )
    return metrics


# ── Device demands ────────────────────────────────────────────────────────────

def request_vector(action: str, ann: PerformanceAnnotation, ov: OverheadMatrix) -> np.ndarray:
    """Requests of one action as a vector over ov.software_resources."""
    index = {r: k for k, r in enumerate(ov.software_resources)}
    vec = np.zeros(len(ov.software_resources))
    for resource, count in ann.resource_requests.get(action, {}).items():
        if resource not in index:
            raise GraphError(f"unknown software resource {resource!r} requested by {action!r}")
        vec[index[resource]] += count
    return vec


def _overhead_array(ov: OverheadMatrix) -> np.ndarray:
    matrix = np.asarray(ov.per_request, dtype=float).reshape(len(ov.software_resources), len(ov.devices))
    if (matrix < 0).any():
        raise GraphError("processing overhead entries must be non-negative")
    return matrix


def device_demands(g: ExecutionGraph, ann: PerformanceAnnotation, ov: OverheadMatrix) -> DemandVector:
    """
    Total device demand of one execution of the graph.

    Each Basic node contributes w × r(name) · overhead, where the execution
    weight w multiplies the enclosing Repetition counts and Case
    probabilities. Every Pardo and Split branch counts in full.

    Raises:
        GraphError: On an unknown software resource, a Basic node with no
                    annotation at all, or an invalid graph.
    """
    _require_valid(g)
    matrix = _overhead_array(ov)
    totals = np.zeros(len(ov.devices))

    def visit(seq: tuple, weight: float) -> None:
        nonlocal totals
        for n in seq:
            if isinstance(n, Basic):
                if n.name not in ann.node_times and n.name not in ann.resource_requests:
                    raise GraphError(f"no annotation for node {n.name!r}")
                totals = totals + weight * (request_vector(n.name, ann, ov) @ matrix)
            elif isinstance(n, Expanded):
                visit(n.sub.body, weight)
            elif isinstance(n, Repetition):
                visit(n.body, weight * n.count)
            elif isinstance(n, Case):
                for b in n.branches:
                    visit(b.body, weight * b.probability)
            elif isinstance(n, Pardo):
                for b in n.branches:
                    visit(b, weight)
            elif isinstance(n, Split):
                for b in n.spawned:
                    visit(b, weight)

    visit(g.body, 1.0)
    demands = DemandVector(per_device={d: float(v) for d, v in zip(ov.devices, totals)})
    logger.info("Device demands for %s: %s", g.name, demands.per_device)
    return demands


def check_declared_demands(ann: PerformanceAnnotation, ov: OverheadMatrix) -> list[Diagnostic]:
    """
    Compare every declared per-action demand total with the matrix product.

    Returns:
        One warning per (action, device) whose declared total differs from
        r(action) · overhead.
    """
    matrix = _overhead_array(ov)
    found: list[Diagnostic] = []
    for action, declared in sorted(ann.declared_demands.items()):
        computed = request_vector(action, ann, ov) @ matrix
        for device, value in sorted(declared.items()):
            if device not in ov.devices:
                found.append(Diagnostic(
                    severity="warning",
                    location=f"annotations/declaredDemands/{action}",
                    message=f"declared demand for unknown device {device!r}",
                ))
                continue
            actual = float(computed[ov.devices.index(device)])
            if not math.isclose(actual, value, rel_tol=DECLARED_TOLERANCE, abs_tol=DECLARED_TOLERANCE):
                logger.warning(
                    "Declared %s demand of %s is %g but the overhead matrix gives %g",
                    device, action, value, actual,
                )
                found.append(Diagnostic(
                    severity="warning",
                    location=f"annotations/declaredDemands/{action}/{device}",
                    message=f"declared total {value:g} does not follow from the overhead matrix ({actual:g})",
                ))
    return found


# ── Objectives ────────────────────────────────────────────────────────────────

def check_objective(m: PathMetrics, o: Objective) -> Verdict:
    """Pass iff the selected metric is within the threshold; margin = threshold − metric."""
    value = m.metric(o.metric)
    margin = o.threshold - value
    return Verdict(
        objective=o,
        value=value,
        status="pass" if value <= o.threshold else "fail",
        margin=margin,
    )
