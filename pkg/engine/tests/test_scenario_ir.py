"""
test_scenario_ir.py — Unit tests for model validation and collaboration analysis.

Coverage:
    - validate_model: valid ATM model, probability sums, forks without joins,
      undeclared participants, cyclic Refs (one report per cycle),
      deployment and overhead checks
    - derive_collaboration: structural and weighted counts, self-loops,
      insensitivity to step order
    - rank_components: ordering, tie-break, permutation property
"""

from __future__ import annotations

import json

import pytest
from hypothesis import given, strategies as st

from spe.loader import parse_model
from spe.scenario_ir import (
    InteractionMatrix,
    Loop,
    Message,
    SelfCall,
    SequenceScenario,
    derive_collaboration,
    rank_components,
    validate_model,
)


def _model(doc: dict):
    return parse_model(json.dumps(doc))


def _alt_doc(p1: float, p2: float) -> dict:
    return {"scenario": [{
        "name": "Choice",
        "participants": ["A", "B"],
        "body": [{"step": "alt", "branches": [
            {"probability": p1, "body": [{"step": "message", "from": "A", "to": "B", "action": "left"}]},
            {"probability": p2, "body": [{"step": "message", "from": "A", "to": "B", "action": "right"}]},
        ]}],
    }]}


# ════════════════════════════════════════════════════════════════
#  validate_model
# ════════════════════════════════════════════════════════════════

class TestValidateModel:

    def test_atm_model_is_valid(self, atm_model):
        assert validate_model(atm_model) == []

    def test_alt_probabilities_must_sum_to_one(self):
        found = validate_model(_model(_alt_doc(0.5, 0.4)))
        assert len(found) == 1
        assert found[0].severity == "error"
        assert found[0].message == "branch probabilities sum to 0.9"

    def test_alt_probabilities_within_tolerance_accepted(self):
        assert validate_model(_model(_alt_doc(0.7, 0.3))) == []

    def test_fork_without_join_names_the_fork(self):
        doc = {"activity": [{
            "name": "Flow",
            "initial": "start",
            "actions": ["a1", "a2"],
            "forks": [{"fork": "f"}],
            "edges": [
                {"from": "start", "to": "f"},
                {"from": "f", "to": "a1"},
                {"from": "f", "to": "a2"},
                {"from": "a1", "to": "done"},
                {"from": "a2", "to": "done"},
            ],
            "finals": ["done"],
        }]}
        found = validate_model(_model(doc))
        assert len(found) == 1
        assert "'f'" in found[0].message

    def test_undeclared_participant(self):
        doc = {"scenario": [{
            "name": "S",
            "participants": ["A"],
            "body": [{"step": "message", "from": "A", "to": "Ghost", "action": "call"}],
        }]}
        found = validate_model(_model(doc))
        assert any("Ghost" in d.message for d in found)

    def test_repeated_action_rejected(self):
        doc = {"scenario": [{
            "name": "S",
            "participants": ["A", "B"],
            "body": [
                {"step": "message", "from": "A", "to": "B", "action": "call"},
                {"step": "message", "from": "B", "to": "A", "action": "call"},
            ],
        }]}
        found = validate_model(_model(doc))
        assert any("used more than once" in d.message for d in found)

    def test_cyclic_references_reported(self):
        doc = {"scenario": [
            {"name": "One", "participants": ["A"], "body": [{"step": "ref", "scenario": "Two"}]},
            {"name": "Two", "participants": ["A"], "body": [{"step": "ref", "scenario": "One"}]},
        ]}
        found = validate_model(_model(doc))
        assert any("cyclic reference" in d.message for d in found)

    def test_one_report_per_reference_cycle(self):
        doc = {"scenario": [
            {"name": "One", "participants": ["A"], "body": [{"step": "ref", "scenario": "Two"}]},
            {"name": "Two", "participants": ["A"], "body": [{"step": "ref", "scenario": "One"}]},
            {"name": "Self", "participants": ["A"], "body": [{"step": "ref", "scenario": "Self"}]},
            {"name": "Top", "participants": ["A"], "body": [{"step": "ref", "scenario": "One"}]},
        ]}
        cyclic = [d for d in validate_model(_model(doc)) if "cyclic reference" in d.message]
        assert [(d.location, d.message) for d in cyclic] == [
            ("scenario/Two", "cyclic reference through 'One'"),
            ("scenario/Self", "cyclic reference through 'Self'"),
        ]

    def test_acyclic_reference_chain_accepted(self):
        doc = {"scenario": [
            {"name": "Top", "participants": ["A"], "body": [{"step": "ref", "scenario": "Mid"}]},
            {"name": "Mid", "participants": ["A"], "body": [{"step": "ref", "scenario": "Leaf"}]},
            {"name": "Leaf", "participants": ["A", "B"], "body": [
                {"step": "message", "from": "A", "to": "B", "action": "call"},
            ]},
        ]}
        assert validate_model(_model(doc)) == []

    def test_negative_loop_count(self):
        doc = {"scenario": [{
            "name": "S",
            "participants": ["A", "B"],
            "body": [{"step": "loop", "count": -1, "body": [
                {"step": "message", "from": "A", "to": "B", "action": "call"},
            ]}],
        }]}
        assert any("negative" in d.message for d in validate_model(_model(doc)))

    def test_concurrent_composite_needs_two_regions(self):
        doc = {"statechart": [{
            "name": "Chart",
            "states": ["Idle", "Busy"],
            "transitions": [{"from": "Idle", "to": "Busy"}],
            "composites": [{"state": "Busy", "mode": "concurrent", "regions": [["Only"]]}],
            "initial": "Idle",
            "finals": ["Busy"],
        }]}
        assert any("two regions" in d.message for d in validate_model(_model(doc)))

    def test_allocation_to_unknown_node(self):
        doc = {"deployment": {
            "nodes": [{"name": "Server", "devices": [{"name": "CPU", "kind": "cpu"}]}],
            "allocation": {"Bank": "Mainframe"},
        }}
        assert any("Mainframe" in d.message for d in validate_model(_model(doc)))

    def test_non_positive_speed_factor(self):
        doc = {"deployment": {
            "nodes": [{"name": "Server", "devices": [{"name": "CPU", "kind": "cpu", "speedFactor": 0}]}],
        }}
        assert any("speed factor" in d.message for d in validate_model(_model(doc)))

    def test_overhead_dimensions_checked(self):
        doc = {"overhead": {
            "softwareResources": ["WorkUnit", "DataBase"],
            "devices": ["CPU", "IO"],
            "perRequest": [[20, 0]],
        }}
        assert any("rows" in d.message for d in validate_model(_model(doc)))

    def test_unknown_software_resource_requested(self, overhead):
        doc = {
            "annotations": {"resourceRequests": {"send": {"Threads": 1}}},
            "overhead": overhead.model_dump(by_alias=True),
        }
        assert any("Threads" in d.message for d in validate_model(_model(doc)))

    def test_unknown_performance_scenario(self):
        doc = {**_alt_doc(0.5, 0.5), "performanceScenario": "Missing"}
        assert any("Missing" in d.message for d in validate_model(_model(doc)))


# ════════════════════════════════════════════════════════════════
#  derive_collaboration
# ════════════════════════════════════════════════════════════════

class TestDeriveCollaboration:

    def test_collaboration_example_counts(self, collaboration_doc):
        m = derive_collaboration(_model(collaboration_doc).scenario[0])
        assert m.in_count == {"CompA": 0, "CompB": 2, "CompC": 2, "CompD": 2}
        assert m.out_count == {"CompA": 1, "CompB": 1, "CompC": 2, "CompD": 2}

    def test_totals_match(self, collaboration_doc):
        m = derive_collaboration(_model(collaboration_doc).scenario[0])
        assert sum(m.in_count.values()) == sum(m.out_count.values()) == 6

    def test_single_message(self):
        s = SequenceScenario(
            name="S",
            participants=("A", "B", "C"),
            body=(Message(sender="A", to="B", action="call"),),
        )
        m = derive_collaboration(s)
        assert m.in_count == {"A": 0, "B": 1, "C": 0}

    def test_self_loops_only(self):
        s = SequenceScenario(
            name="S",
            participants=("A",),
            body=tuple(SelfCall(on="A", action=f"work{i}") for i in range(3)),
        )
        m = derive_collaboration(s)
        assert m.in_count["A"] == 3
        assert m.out_count["A"] == 3

    def test_structural_count_ignores_loops(self):
        s = SequenceScenario(
            name="S",
            participants=("A", "B"),
            body=(Loop(count=5, body=(Message(sender="A", to="B", action="call"),)),),
        )
        assert derive_collaboration(s).in_count["B"] == 1

    def test_weighted_count_follows_loops_and_branches(self, atm_model):
        session = atm_model.find_scenario("ProcessTransaction")
        m = derive_collaboration(session, weighted=True)
        assert m.in_count["Bank"] == pytest.approx(2.0)

    @given(st.permutations([("A", "B"), ("B", "C"), ("C", "B"), ("C", "D"), ("D", "C")]))
    def test_insensitive_to_step_order(self, pairs):
        body = tuple(
            Message(sender=src, to=dst, action=f"m{src}{dst}")
            for src, dst in pairs
        )
        s = SequenceScenario(name="S", participants=("A", "B", "C", "D"), body=body)
        m = derive_collaboration(s)
        assert m.in_count == {"A": 0, "B": 2, "C": 2, "D": 1}
        assert m.out_count == {"A": 1, "B": 1, "C": 2, "D": 1}


# ════════════════════════════════════════════════════════════════
#  rank_components
# ════════════════════════════════════════════════════════════════

class TestRankComponents:

    def test_busiest_components_rank_first(self, collaboration_doc):
        ranking = rank_components(derive_collaboration(_model(collaboration_doc).scenario[0]))
        assert [c for c, _ in ranking[:2]] == ["CompC", "CompD"]

    def test_all_zero_is_lexicographic(self):
        m = InteractionMatrix(
            components=("b", "a", "c"),
            in_count={"a": 0, "b": 0, "c": 0},
            out_count={"a": 0, "b": 0, "c": 0},
        )
        assert rank_components(m) == [("a", 0), ("b", 0), ("c", 0)]

    def test_tie_broken_by_name(self):
        m = InteractionMatrix(
            components=("Y", "X"),
            in_count={"X": 5, "Y": 5},
            out_count={"X": 0, "Y": 0},
        )
        assert [c for c, _ in rank_components(m)] == ["X", "Y"]

    @given(st.dictionaries(
        st.sampled_from(["A", "B", "C", "D", "E", "F"]),
        st.tuples(st.integers(0, 20), st.integers(0, 20)),
        min_size=1,
    ))
    def test_ranking_is_a_sorted_permutation(self, counts):
        m = InteractionMatrix(
            components=tuple(counts),
            in_count={c: i for c, (i, _) in counts.items()},
            out_count={c: o for c, (_, o) in counts.items()},
        )
        ranking = rank_components(m)
        assert sorted(c for c, _ in ranking) == sorted(counts)
        scores = [s for _, s in ranking]
        assert scores == sorted(scores, reverse=True)
