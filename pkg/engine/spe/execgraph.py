"""
execgraph.py — Execution graphs: node types, flattening, validation and
DOT export.

An execution graph is kept as a structured tree: a graph is an ordered
sequence of nodes, and the control nodes (Repetition, Case, Pardo, Split)
own their bodies. Expanded nodes carry a whole sub-graph. DOT export
re-introduces explicit arcs for drawing.

Node kinds:
    Basic       one unit of work, bound to annotations by name
    Expanded    summarizes a sub-graph
    Repetition  body executed `count` times
    Case        exactly one branch, chosen with the given probability
    Pardo       all branches run concurrently and join
    Split       branches spawned asynchronously, never joined
"""

from __future__ import annotations

import logging
import math
from typing import Annotated, Literal, Optional, Union

import pydot
from pydantic import Field

from spe.errors import Diagnostic
from spe.scenario_ir import (
    PROBABILITY_TOLERANCE,
    FrozenModel,
    Identifier,
    PerformanceAnnotation,
)

logger = logging.getLogger(__name__)


# ── Node types ────────────────────────────────────────────────────────────────

class Basic(FrozenModel):
    node: Literal["basic"] = "basic"
    name: Identifier


class Expanded(FrozenModel):
    node: Literal["expanded"] = "expanded"
    name: Identifier
    sub: ExecutionGraph


class Repetition(FrozenModel):
    node: Literal["repetition"] = "repetition"
    count: int
    body: tuple[ExecNode, ...]


class CaseBranch(FrozenModel):
    probability: float
    body: tuple[ExecNode, ...]


class Case(FrozenModel):
    node: Literal["case"] = "case"
    branches: tuple[CaseBranch, ...]


class Pardo(FrozenModel):
    node: Literal["pardo"] = "pardo"
    branches: tuple[tuple[ExecNode, ...], ...]


class Split(FrozenModel):
    node: Literal["split"] = "split"
    spawned: tuple[tuple[ExecNode, ...], ...]


ExecNode = Annotated[
    Union[Basic, Expanded, Repetition, Case, Pardo, Split],
    Field(discriminator="node"),
]


class ExecutionGraph(FrozenModel):
    name: Identifier
    body: tuple[ExecNode, ...]


for _model in (Expanded, Repetition, CaseBranch, Case, Pardo, Split, ExecutionGraph):
    _model.model_rebuild()


def child_sequences(n) -> list[tuple]:
    """The node sequences directly owned by a control node (not Expanded subs)."""
    if isinstance(n, Repetition):
        return [n.body]
    if isinstance(n, Case):
        return [b.body for b in n.branches]
    if isinstance(n, Pardo):
        return list(n.branches)
    if isinstance(n, Split):
        return list(n.spawned)
    return []


def basic_names(g: ExecutionGraph) -> list[str]:
    """Names of every Basic node at any depth, in document order."""
    names: list[str] = []

    def visit(seq: tuple) -> None:
        for n in seq:
            if isinstance(n, Basic):
                names.append(n.name)
            elif isinstance(n, Expanded):
                visit(n.sub.body)
            else:
                for child in child_sequences(n):
                    visit(child)

    visit(g.body)
    return names


# ── Flattening ────────────────────────────────────────────────────────────────

def _flatten_seq(seq: tuple) -> tuple:
    out: list = []
    for n in seq:
        if isinstance(n, Expanded):
            out.extend(_flatten_seq(n.sub.body))
        elif isinstance(n, Repetition):
            out.append(Repetition(count=n.count, body=_flatten_seq(n.body)))
        elif isinstance(n, Case):
            out.append(Case(branches=tuple(
                CaseBranch(probability=b.probability, body=_flatten_seq(b.body))
                for b in n.branches
            )))
        elif isinstance(n, Pardo):
            out.append(Pardo(branches=tuple(_flatten_seq(b) for b in n.branches)))
        elif isinstance(n, Split):
            out.append(Split(spawned=tuple(_flatten_seq(b) for b in n.spawned)))
        else:
            out.append(n)
    return tuple(out)


def flatten(g: ExecutionGraph) -> ExecutionGraph:
    """Inline every Expanded node's sub-graph in place, at any depth."""
    return ExecutionGraph(name=g.name, body=_flatten_seq(g.body))


# ── Validation ────────────────────────────────────────────────────────────────

def validate_graph(
    g: ExecutionGraph,
    ann: Optional[PerformanceAnnotation] = None,
) -> list[Diagnostic]:
    """
    Check the node invariants at every depth.

    When `ann` is supplied, every Basic node must also have a time binding
    in ann.node_times.

    Returns:
        Diagnostics; empty iff the graph is valid.
    """
    found: list[Diagnostic] = []
    _validate_graph(g, ann, g.name, found)
    return found


def _validate_graph(
    g: ExecutionGraph,
    ann: Optional[PerformanceAnnotation],
    path: str,
    found: list[Diagnostic],
) -> None:
    if not g.body:
        found.append(Diagnostic(severity="error", location=path, message="graph body is empty"))
    names: set[str] = set()

    def err(location: str, message: str) -> None:
        found.append(Diagnostic(severity="error", location=location, message=message))

    def visit(seq: tuple, where: str) -> None:
        for i, n in enumerate(seq):
            here = f"{where}[{i}]"
            if isinstance(n, (Basic, Expanded)):
                if n.name in names:
                    err(here, f"duplicate node name {n.name!r}")
                names.add(n.name)
            if isinstance(n, Basic):
                if ann is not None and n.name not in ann.node_times:
                    err(here, f"no time annotation for node {n.name!r}")
            elif isinstance(n, Expanded):
                _validate_graph(n.sub, ann, f"{here}/{n.name}", found)
            elif isinstance(n, Repetition):
                if n.count < 0:
                    err(here, f"repetition count {n.count} is negative")
                visit(n.body, f"{here}/body")
            elif isinstance(n, Case):
                if not n.branches:
                    err(here, "case has no branches")
                    continue
                probabilities = [b.probability for b in n.branches]
                if any(not 0.0 <= p <= 1.0 for p in probabilities):
                    err(here, "case probability outside [0, 1]")
                total = math.fsum(probabilities)
                if abs(total - 1.0) > PROBABILITY_TOLERANCE:
                    err(here, f"case probabilities sum to {total:g}")
                for j, b in enumerate(n.branches):
                    visit(b.body, f"{here}/branches[{j}]")
            elif isinstance(n, (Pardo, Split)):
                branches = child_sequences(n)
                if not branches:
                    err(here, f"{n.node} has no branches")
                for j, b in enumerate(branches):
                    visit(b, f"{here}/branches[{j}]")

    visit(g.body, path)


# ── DOT export ────────────────────────────────────────────────────────────────

def _quoted(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


class _DotBuilder:
    """Walks a graph and emits nodes/edges with sequential ids (n0, n1, ...)."""

    def __init__(self, g: ExecutionGraph) -> None:
        self.dot = pydot.Dot(graph_name=g.name, graph_type="digraph", rankdir="TB")
        self.dot.set_node_defaults(fontname="Helvetica")
        self.counter = 0

    def _node(self, container, label: str, **attrs) -> str:
        node_id = f"n{self.counter}"
        self.counter += 1
        container.add_node(pydot.Node(node_id, label=_quoted(label), **attrs))
        return node_id

    @staticmethod
    def _edge(container, src: str, dst: str, **attrs) -> None:
        container.add_edge(pydot.Edge(src, dst, **attrs))

    def sequence(self, container, seq: tuple) -> Optional[tuple[str, str]]:
        """Emit a node sequence; return (entry id, exit id) or None if empty."""
        entry = exit_ = None
        for n in seq:
            ends = self.element(container, n)
            if ends is None:
                continue
            if exit_ is None:
                entry = ends[0]
            else:
                self._edge(container, exit_, ends[0])
            exit_ = ends[1]
        return None if entry is None else (entry, exit_)

    def element(self, container, n) -> Optional[tuple[str, str]]:
        if isinstance(n, Basic):
            node_id = self._node(container, n.name, shape="box")
            return node_id, node_id

        if isinstance(n, Expanded):
            cluster = pydot.Cluster(f"c{self.counter}", label=_quoted(n.name), style="dashed")
            self.counter += 1
            ends = self.sequence(cluster, n.sub.body)
            container.add_subgraph(cluster)
            if ends is None:
                node_id = self._node(container, n.name, shape="box", style="dashed")
                return node_id, node_id
            return ends

        if isinstance(n, Repetition):
            loop = self._node(container, f"×{n.count}", shape="circle")
            ends = self.sequence(container, n.body)
            if ends is not None:
                self._edge(container, loop, ends[0])
                self._edge(container, ends[1], loop, style="dashed", label=_quoted("repeat"))
            return loop, loop

        if isinstance(n, Case):
            decision = self._node(container, "case", shape="diamond")
            merge = self._node(container, "", shape="point")
            for b in n.branches:
                label = _quoted(f"{b.probability:.6g}")
                ends = self.sequence(container, b.body)
                if ends is None:
                    self._edge(container, decision, merge, label=label)
                else:
                    self._edge(container, decision, ends[0], label=label)
                    self._edge(container, ends[1], merge)
            return decision, merge

        if isinstance(n, Pardo):
            fork = self._node(container, "fork", shape="box", style="filled", fillcolor="black",
                              fontcolor="white", height="0.1")
            join = self._node(container, "join", shape="box", style="filled", fillcolor="black",
                              fontcolor="white", height="0.1")
            for branch in n.branches:
                ends = self.sequence(container, branch)
                if ends is None:
                    self._edge(container, fork, join)
                else:
                    self._edge(container, fork, ends[0])
                    self._edge(container, ends[1], join)
            return fork, join

        if isinstance(n, Split):
            split = self._node(container, "split", shape="triangle")
            for branch in n.spawned:
                ends = self.sequence(container, branch)
                if ends is not None:
                    self._edge(container, split, ends[0], style="dashed")
            return split, split

        raise TypeError(f"unknown execution-graph node: {n!r}")


def to_dot(g: ExecutionGraph) -> str:
    """
    Render a graph as a DOT digraph.

    Basic nodes are boxes labelled with their name; Repetition nodes are
    circles labelled ×n; Case arcs carry their probabilities; Pardo regions
    sit between fork and join bars; Expanded nodes become clusters.
    Node ids are assigned in document order, so output is deterministic.
    """
    builder = _DotBuilder(g)
    builder.sequence(builder.dot, g.body)
    return builder.dot.to_string()
