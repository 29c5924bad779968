"""
report.py — Rendering assessment reports.

Formats:
    text        human-readable tables
    structured  the canonical JSON document (stable across runs)
    dot         the performance scenario's execution graph as a DOT digraph
"""

from __future__ import annotations

import logging
from typing import Literal

from spe.execgraph import to_dot
from spe.loader import to_document
from spe.pipeline import AssessmentReport, ComparisonReport

logger = logging.getLogger(__name__)

ReportFormat = Literal["text", "structured", "dot"]
FORMATS: tuple[str, ...] = ("text", "structured", "dot")


def _num(value: float) -> str:
    return f"{value:.6g}"


def _text(r: AssessmentReport) -> str:
    lines = [f"Assessment of {r.model} (performance scenario {r.scenario})", ""]

    m = r.path_metrics
    lines += [
        "Software execution model",
        f"  shortest path  {_num(m.shortest)}",
        f"  average path   {_num(m.average)}",
        f"  longest path   {_num(m.longest)}",
    ]
    if r.demand_vector is not None:
        lines.append("  device demands")
        for device, demand in sorted(r.demand_vector.per_device.items()):
            lines.append(f"    {device:<14} {_num(demand)}")

    if r.collaboration_ranking:
        lines += ["", "Collaboration load"]
        for rank, c in enumerate(r.collaboration_ranking, start=1):
            lines.append(f"  {rank:>2}. {c.component:<14} {_num(c.load_score)}")

    if r.system_metrics is not None:
        s = r.system_metrics
        lines += [
            "",
            "System execution model",
            f"  throughput     {_num(s.system_throughput)}",
            f"  response time  {_num(s.system_response_time)}",
            f"  bottleneck     {s.bottleneck}",
        ]
        if r.bottleneck is not None and r.bottleneck.largest_delay_center is not None:
            lines.append(f"  largest demand {r.bottleneck.largest_delay_center} (delay center, not a bottleneck)")
        lines.append(f"  {'center':<14} {'util':>10} {'resid':>12} {'queue':>10}")
        for name, c in s.per_center.items():
            lines.append(
                f"  {name:<14} {_num(c.utilization):>10} {_num(c.residence_time):>12} {_num(c.queue_length):>10}"
            )

    if r.sim is not None and r.agreement is not None:
        verdict = "agrees" if r.agreement.passed else "DISAGREES"
        lines += [
            "",
            f"Simulation ({r.sim.config.replications} replication(s), seed {r.sim.config.seed}): "
            f"{verdict} with the analytic model within {r.agreement.rel_tol:g}",
            f"  throughput     {_num(r.sim.system_throughput.mean)} ± {_num(r.sim.system_throughput.half_width95)}",
            f"  response time  {_num(r.sim.system_response_time.mean)} ± {_num(r.sim.system_response_time.half_width95)}",
        ]

    lines += ["", "Objectives"]
    if not r.verdicts:
        lines.append("  no objectives")
    for v in r.verdicts:
        lines.append(
            f"  {v.objective.metric} <= {_num(v.objective.threshold)}: "
            f"{v.status.upper()} (value {_num(v.value)}, margin {_num(v.margin)})"
        )

    if r.skipped_steps:
        lines += ["", "Skipped steps"]
        lines += [f"  {s.step}: {s.reason}" for s in r.skipped_steps]
    if r.diagnostics:
        lines += ["", "Diagnostics"]
        lines += [f"  {d}" for d in r.diagnostics]

    lines += ["", f"Recommendation: {r.recommendation}"]
    return "\n".join(lines) + "\n"


def render_report(r: AssessmentReport, format: ReportFormat = "text") -> str:
    """
    Render an assessment report.

    Raises:
        ValueError: On an unknown format.
    """
    if format == "structured":
        return to_document(r)
    if format == "dot":
        return to_dot(r.graph)
    if format == "text":
        return _text(r)
    raise ValueError(f"unknown report format {format!r}; expected one of {', '.join(FORMATS)}")


def render_comparison(c: ComparisonReport, format: ReportFormat = "text") -> str:
    """Render a comparison: ranking table (text) or the whole document (structured)."""
    if format == "structured":
        return to_document(c)
    if format == "dot":
        return "".join(to_dot(r.graph) for r in c.alternatives)
    lines = ["Design alternatives (best first)"]
    for rank, alt in enumerate(c.ranking, start=1):
        report = c.alternatives[alt.index]
        lines.append(
            f"  {rank}. #{alt.index} {alt.model:<24} passed {alt.passed}/{len(report.verdicts)}"
            f"  average {_num(alt.average)}  {report.recommendation}"
        )
    return "\n".join(lines) + "\n"
