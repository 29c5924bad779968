"""
conftest.py — Shared pytest fixtures for the performance assessment test suite.

Provides:
    - Paths to the shipped model documents and the golden files.
    - The ATM example: its loaded DesignModel, the transaction sub-graph
      and the node-time annotations.
    - The processing-overhead matrix for CPU / physical I/O / network messages.
    - Small scenario documents (four-component sync/async example,
      collaboration example) as plain JSON-ready dicts.
"""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from spe.execgraph import Basic, Case, CaseBranch, ExecutionGraph
from spe.loader import load_model
from spe.scenario_ir import DesignModel, OverheadMatrix, PerformanceAnnotation
from spe.sysmodel import QueueingNetwork, ServiceCenter

DATA_DIR = Path(__file__).resolve().parent.parent / "data"
GOLDEN_DIR = Path(__file__).resolve().parent / "golden"


# ── Shipped documents ─────────────────────────────────────────────────────────

@pytest.fixture
def atm_model_path() -> Path:
    return DATA_DIR / "atm_model.json"


@pytest.fixture
def atm_model(atm_model_path) -> DesignModel:
    return load_model(atm_model_path)


@pytest.fixture
def golden_model_path() -> Path:
    """Transaction scenario with branch weights 0.5 / 0.25 / 0.25 (exact in binary)."""
    return DATA_DIR / "golden_weights.json"


@pytest.fixture
def write_json(tmp_path):
    """Write a dict as a JSON file under tmp_path and return its path."""
    def _write(name: str, data: dict) -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return path
    return _write


# ── ATM example ───────────────────────────────────────────────────────────────

@pytest.fixture
def atm_times() -> PerformanceAnnotation:
    """Node times of the ATM example, in abstract time units."""
    return PerformanceAnnotation(node_times={
        "getCardInfo": 50,
        "getPIN": 20,
        "ProcessTransaction": 30,
        "processDeposit": 500,
        "processWithdrawal": 200,
        "processBalanceInquiry": 50,
        "terminateSession": 100,
    })


def transaction_graph(probabilities=(1 / 3, 1 / 3, 1 / 3)) -> ExecutionGraph:
    """ProcessTransaction followed by the three-way transaction-type case."""
    deposit, withdrawal, inquiry = probabilities
    return ExecutionGraph(name="ProcessTransaction", body=(
        Basic(name="ProcessTransaction"),
        Case(branches=(
            CaseBranch(probability=deposit, body=(Basic(name="processDeposit"),)),
            CaseBranch(probability=withdrawal, body=(Basic(name="processWithdrawal"),)),
            CaseBranch(probability=inquiry, body=(Basic(name="processBalanceInquiry"),)),
        )),
    ))


@pytest.fixture
def pt_graph() -> ExecutionGraph:
    return transaction_graph()


# ── Processing overhead ───────────────────────────────────────────────────────

@pytest.fixture
def overhead() -> OverheadMatrix:
    """WorkUnit 20/0/0, DataBase 100/2/0, Messages 5/2/1 over CPU, IO, Network."""
    return OverheadMatrix(
        software_resources=("WorkUnit", "DataBase", "Messages"),
        devices=("CPU", "IO", "Network"),
        per_request=((20, 0, 0), (100, 2, 0), (5, 2, 1)),
    )


# ── Scenario documents ────────────────────────────────────────────────────────

@pytest.fixture
def four_component_doc() -> dict:
    """A→B sync, B→C sync, C→D async, then D's self-delegation loop."""
    return {
        "scenario": [{
            "name": "Interaction",
            "participants": ["CompA", "CompB", "CompC", "CompD"],
            "body": [
                {"step": "message", "from": "CompA", "to": "CompB", "kind": "sync", "action": "requestB"},
                {"step": "message", "from": "CompB", "to": "CompC", "kind": "sync", "action": "requestC"},
                {"step": "message", "from": "CompC", "to": "CompD", "kind": "async", "action": "notifyD"},
                {"step": "self", "on": "CompD", "action": "refineD", "repetitions": 3},
            ],
        }],
    }


@pytest.fixture
def collaboration_doc() -> dict:
    """A→B, B→C, C→B, C→D, D→C and a self-loop on D."""
    return {
        "scenario": [{
            "name": "Collaboration",
            "participants": ["CompA", "CompB", "CompC", "CompD"],
            "body": [
                {"step": "message", "from": "CompA", "to": "CompB", "action": "m1"},
                {"step": "message", "from": "CompB", "to": "CompC", "action": "m2"},
                {"step": "message", "from": "CompC", "to": "CompB", "action": "m3"},
                {"step": "message", "from": "CompC", "to": "CompD", "action": "m4"},
                {"step": "message", "from": "CompD", "to": "CompC", "action": "m5"},
                {"step": "self", "on": "CompD", "action": "m6"},
            ],
        }],
    }


# ── Queueing networks ─────────────────────────────────────────────────────────

def network(*demands: float, names=None, scheduling: str = "fcfs") -> QueueingNetwork:
    names = names or [f"c{i}" for i in range(len(demands))]
    return QueueingNetwork(centers=tuple(
        ServiceCenter(name=n, demand=d, scheduling=scheduling) for n, d in zip(names, demands)
    ))
