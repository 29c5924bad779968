"""
derive.py — Building execution graphs from sequence scenarios, activity
models and statecharts.

Sequence scenarios are walked step by step: each synchronous message becomes
a Basic node named by its action, control steps become control nodes, and
Ref steps become Expanded nodes holding the referenced scenario's graph.

Activity models and statecharts are flow graphs. They are reduced to the
structured form by a single walker (_FlowWalker):
    - a fork runs each outgoing path to its paired join        -> Pardo
    - a branching node whose outcomes all lead forward          -> Case
      (branches run until the nearest node reachable from all of them)
    - a decision with one outcome leading back into the current
      sequence                                                  -> Repetition
      over the nodes from the loop target up to the decision
Any other cycle is rejected.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional

import networkx as nx

from spe.errors import GraphError
from spe.execgraph import (
    Basic,
    Case,
    CaseBranch,
    ExecutionGraph,
    Expanded,
    Pardo,
    Repetition,
    Split,
)
from spe.scenario_ir import (
    ActivityModel,
    Alt,
    DesignModel,
    Loop,
    Message,
    Par,
    PerformanceAnnotation,
    Ref,
    SelfCall,
    SequenceScenario,
    StateChartModel,
)

logger = logging.getLogger(__name__)


# ── Combine rules ─────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class CombineRules:
    """
    Groups of consecutive actions to merge into one Basic node.

    Attributes:
        groups: group name -> member actions in execution order. A run of
                synchronous messages merges only when it is the whole group,
                in this order.
    """
    groups: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    @classmethod
    def of(cls, groups: Mapping[str, tuple[str, ...] | list[str]]) -> "CombineRules":
        return cls({name: tuple(members) for name, members in groups.items()})


def combine_annotation(ann: PerformanceAnnotation, rules: CombineRules) -> PerformanceAnnotation:
    """
    Add a binding for every combine group: its time and requests are the
    sums over its members. Groups with an unannotated member get no time.
    """
    times = dict(ann.node_times)
    requests = {a: dict(r) for a, r in ann.resource_requests.items()}
    for group, members in rules.groups.items():
        if all(m in ann.node_times for m in members):
            times.setdefault(group, sum(ann.node_times[m] for m in members))
        merged: dict[str, float] = {}
        for m in members:
            for resource, count in ann.resource_requests.get(m, {}).items():
                merged[resource] = merged.get(resource, 0.0) + count
        if merged:
            requests.setdefault(group, merged)
    return PerformanceAnnotation(
        node_times=times,
        resource_requests=requests,
        declared_demands=ann.declared_demands,
    )


# ── Sequence scenarios ────────────────────────────────────────────────────────

def from_sequence(
    s: SequenceScenario,
    combine: Optional[CombineRules] = None,
    scenarios: Optional[Mapping[str, SequenceScenario]] = None,
) -> ExecutionGraph:
    """
    Derive the execution graph of a sequence scenario.

    Args:
        s:         The scenario to translate.
        combine:   Action groups to merge into single Basic nodes.
        scenarios: Scenarios that Ref steps may name (by scenario name).

    Raises:
        GraphError: On a Ref to an unknown scenario or a cyclic Ref chain.
    """
    return _SequenceDeriver(combine or CombineRules(), scenarios or {}).graph(s, ())


class _SequenceDeriver:
    def __init__(self, combine: CombineRules, scenarios: Mapping[str, SequenceScenario]) -> None:
        self.combine = combine
        self.scenarios = scenarios

    def graph(self, s: SequenceScenario, chain: tuple[str, ...]) -> ExecutionGraph:
        chain = chain + (s.name,)
        body = self.steps(s.body, chain)
        logger.debug("Derived graph %s with %d top-level node(s)", s.name, len(body))
        return ExecutionGraph(name=s.name, body=body)

    def steps(self, steps: tuple, chain: tuple[str, ...]) -> tuple:
        out: list = []
        i = 0
        while i < len(steps):
            group = self._group_at(steps, i)
            if group is not None:
                name, size = group
                out.append(Basic(name=name))
                i += size
                continue
            out.append(self.step(steps[i], chain))
            i += 1
        return tuple(out)

    def _group_at(self, steps: tuple, i: int) -> Optional[tuple[str, int]]:
        for name, members in self.combine.groups.items():
            window = steps[i:i + len(members)]
            if len(window) == len(members) and all(
                isinstance(st, Message) and st.kind == "sync" and st.action == member
                for st, member in zip(window, members)
            ):
                return name, len(members)
        return None

    def step(self, st, chain: tuple[str, ...]):
        if isinstance(st, Message):
            if st.kind == "async":
                return Split(spawned=((Basic(name=st.action),),))
            return Basic(name=st.action)
        if isinstance(st, SelfCall):
            return Repetition(count=st.repetitions, body=(Basic(name=st.action),))
        if isinstance(st, Loop):
            return Repetition(count=st.count, body=self.steps(st.body, chain))
        if isinstance(st, Alt):
            return Case(branches=tuple(
                CaseBranch(probability=b.probability, body=self.steps(b.body, chain))
                for b in st.branches
            ))
        if isinstance(st, Par):
            return Pardo(branches=tuple(self.steps(b, chain) for b in st.branches))
        if isinstance(st, Ref):
            if st.scenario in chain:
                raise GraphError(
                    "cyclic scenario reference: " + " -> ".join(chain + (st.scenario,))
                )
            target = self.scenarios.get(st.scenario)
            if target is None:
                raise GraphError(f"reference to unknown scenario {st.scenario!r}")
            return Expanded(name=st.scenario, sub=self.graph(target, chain))
        raise GraphError(f"unknown scenario step: {st!r}")


# ── Flow-graph walker (activity models, statecharts) ──────────────────────────

Outgoing = list[tuple[Optional[float], str]]


class _FlowWalker:
    """
    Reduces a flow graph to a structured node sequence.

    Args:
        emit:        node -> ExecNode for nodes that do work, None for pseudo nodes.
        outgoing:    node -> [(probability or None, target)].
        join_of:     fork node -> its paired join, None for other nodes.
        repetitions: decision node -> loop count annotation, or None.
        is_final:    node -> True when the walk ends after this node.
        allow_loops: False rejects every cycle.
        nodes:       every node of the flow graph.
    """

    def __init__(
        self,
        emit: Callable[[str], object],
        outgoing: Callable[[str], Outgoing],
        join_of: Callable[[str], Optional[str]],
        repetitions: Callable[[str], Optional[int]],
        is_final: Callable[[str], bool],
        allow_loops: bool,
        nodes: Iterable[str],
    ) -> None:
        self.emit = emit
        self.outgoing = outgoing
        self.join_of = join_of
        self.repetitions = repetitions
        self.is_final = is_final
        self.allow_loops = allow_loops
        self.nodes = frozenset(nodes)
        self._flow: Optional[nx.DiGraph] = None

    def walk(self, start: Optional[str], stop: Optional[str] = None, active: frozenset = frozenset()) -> tuple:
        seq: list = []
        positions: dict[str, int] = {}
        node = start
        while node is not None and node != stop:
            if node in positions or node in active:
                raise GraphError(self._cycle_message(node))
            positions[node] = len(seq)
            here = active.union(positions)

            item = self.emit(node)
            if item is not None:
                seq.append(item)
            if self.is_final(node):
                break

            join = self.join_of(node)
            if join is not None:
                branches = tuple(self.walk(t, join, here) for _, t in self.outgoing(node))
                seq.append(Pardo(branches=branches))
                positions[join] = len(seq)
                node = self._single_successor(join)
                continue

            outs = self.outgoing(node)
            if not outs:
                break
            if len(outs) == 1:
                node = outs[0][1]
                continue

            back = [(p, t) for p, t in outs if t in positions]
            if back:
                node = self._close_loop(node, outs, back, seq, positions)
                continue

            if any(p is None for p, _ in outs):
                raise GraphError(
                    f"{node!r} has several outgoing transitions without probabilities"
                )
            merge = self._merge_point([t for _, t in outs], stop)
            seq.append(Case(branches=tuple(
                CaseBranch(probability=p, body=self.walk(t, merge, here))
                for p, t in outs
            )))
            node = merge
        return tuple(seq)

    def _cycle_message(self, node: str) -> str:
        if self.allow_loops:
            return f"unbounded loop at {node}"
        return f"cyclic transition structure at {node!r}"

    def _single_successor(self, node: str) -> Optional[str]:
        outs = self.outgoing(node)
        if len(outs) > 1:
            raise GraphError(f"join {node!r} has more than one outgoing flow")
        return outs[0][1] if outs else None

    def _close_loop(self, node: str, outs: Outgoing, back: Outgoing, seq: list, positions: dict) -> Optional[str]:
        if not self.allow_loops:
            raise GraphError(self._cycle_message(node))
        forward = [(p, t) for p, t in outs if t not in positions]
        if len(back) != 1 or len(forward) != 1:
            raise GraphError(f"decision {node!r} must have exactly one loop-back and one exit outcome")
        count = self.repetitions(node)
        if count is None:
            raise GraphError(f"unbounded loop at {node}")
        start = positions[back[0][1]]
        body = tuple(seq[start:])
        del seq[start:]
        seq.append(Repetition(count=count, body=body))
        return forward[0][1]

    def _merge_point(self, targets: list[str], stop: Optional[str]) -> Optional[str]:
        """Nearest node reachable from every branch target (by worst distance, then name)."""
        flow = self._flow_graph()
        if stop is not None and stop in flow:
            flow = nx.restricted_view(flow, [], list(flow.out_edges(stop)))
        distances = [nx.single_source_shortest_path_length(flow, t) for t in targets]
        common = set(distances[0])
        for d in distances[1:]:
            common &= set(d)
        if not common:
            return stop
        return min(common, key=lambda n: (max(d[n] for d in distances), n))

    def _flow_graph(self) -> nx.DiGraph:
        # Forks step straight to their join; finals have no successors.
        if self._flow is None:
            flow = nx.DiGraph()
            for node in sorted(self.nodes):
                flow.add_node(node)
                if self.is_final(node):
                    continue
                join = self.join_of(node)
                successors = [join] if join is not None else [t for _, t in self.outgoing(node)]
                flow.add_edges_from((node, nxt) for nxt in successors)
            self._flow = flow
        return self._flow


# ── Activity models ───────────────────────────────────────────────────────────

def from_activity(a: ActivityModel) -> ExecutionGraph:
    """
    Derive the execution graph of an activity model.

    Raises:
        GraphError: On a loop without a repetition annotation
                    ("unbounded loop at <node>"), an unmatched fork, or an
                    action with several outgoing flows.
    """
    actions = set(a.actions)
    decisions = {d.at: d for d in a.decisions}
    joins = {pair.fork: pair.join for pair in a.forks}
    finals = set(a.finals)

    flows: dict[str, list[str]] = {}
    for edge in a.edges:
        flows.setdefault(edge.source, []).append(edge.to)

    for fork, join in joins.items():
        if join is None:
            raise GraphError(f"fork {fork!r} has no matching join")

    def outgoing(node: str) -> Outgoing:
        if node in decisions:
            return [(o.probability, o.target) for o in decisions[node].outcomes]
        targets = flows.get(node, [])
        if len(targets) > 1 and node not in joins:
            raise GraphError(f"{node!r} has several outgoing flows; use a decision or a fork")
        return [(None, t) for t in targets]

    def repetitions(node: str) -> Optional[int]:
        d = decisions.get(node)
        return d.repetitions if d is not None else None

    walker = _FlowWalker(
        emit=lambda n: Basic(name=n) if n in actions else None,
        outgoing=outgoing,
        join_of=joins.get,
        repetitions=repetitions,
        is_final=lambda n: n in finals,
        allow_loops=True,
        nodes=a.node_ids() | set(flows) | {e.to for e in a.edges},
    )
    body = walker.walk(a.initial)
    logger.debug("Derived activity graph %s with %d top-level node(s)", a.name, len(body))
    return ExecutionGraph(name=a.name, body=body)


# ── Statecharts ───────────────────────────────────────────────────────────────

def from_statechart(sc: StateChartModel) -> ExecutionGraph:
    """
    Derive the execution graph of a statechart along its initial-to-final path.

    Sequential composite states become Expanded nodes whose sub-graph lists
    the region's sub-states; concurrent composites become a Pardo with one
    branch per region.

    Raises:
        GraphError: On a cyclic transition structure, or a state with several
                    outgoing transitions lacking probabilities.
    """
    composites = {c.state: c for c in sc.composites}
    finals = set(sc.finals)
    transitions: dict[str, Outgoing] = {}
    for t in sc.transitions:
        transitions.setdefault(t.source, []).append((t.probability, t.to))

    def emit(state: str):
        comp = composites.get(state)
        if comp is None:
            return Basic(name=state)
        regions = [tuple(Basic(name=s) for s in region) for region in comp.regions]
        if comp.mode == "concurrent":
            return Pardo(branches=tuple(regions))
        body = tuple(node for region in regions for node in region)
        return Expanded(name=state, sub=ExecutionGraph(name=state, body=body))

    walker = _FlowWalker(
        emit=emit,
        outgoing=lambda s: transitions.get(s, []),
        join_of=lambda s: None,
        repetitions=lambda s: None,
        is_final=lambda s: s in finals,
        allow_loops=False,
        nodes=set(sc.states) | set(transitions) | {t.to for t in sc.transitions},
    )
    if sc.initial is None:
        raise GraphError(f"statechart {sc.name!r} has no initial state")
    body = walker.walk(sc.initial)
    logger.debug("Derived statechart graph %s with %d top-level node(s)", sc.name, len(body))
    return ExecutionGraph(name=sc.name, body=body)


# ── Model-level helpers ───────────────────────────────────────────────────────

def derive_diagram(m: DesignModel, name: str) -> ExecutionGraph:
    """
    Derive the graph of the named scenario, activity model or statechart.

    Sequence scenarios use the model's combine rules and resolve Refs
    against the model's other scenarios.
    """
    scenarios = {s.name: s for s in m.scenario}
    if name in scenarios:
        return from_sequence(scenarios[name], CombineRules.of(m.combine), scenarios)
    for a in m.activity:
        if a.name == name:
            return from_activity(a)
    for sc in m.statechart:
        if sc.name == name:
            return from_statechart(sc)
    raise GraphError(f"unknown diagram {name!r}")
