"""
loader.py — Reading and writing design-model documents.

Responsible for:
    - Parsing the JSON model document into a DesignModel (parse_model).
    - Canonical serialization: sorted keys, 2-space indent (serialize_model,
      dump_canonical), so golden files stay byte-stable.
    - Loading documents from disk with logging (load_model).
    - Parsing execution graphs written in the same document format.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ValidationError

from spe.errors import ModelError, ModelSyntaxError
from spe.execgraph import ExecutionGraph
from spe.scenario_ir import DesignModel

logger = logging.getLogger(__name__)

# ── Document sections ─────────────────────────────────────────────────────────
SECTIONS = frozenset({
    "performanceScenario",
    "scenario",
    "activity",
    "statechart",
    "deployment",
    "annotations",
    "overhead",
    "combine",
})


# ── Canonical output ──────────────────────────────────────────────────────────

def dump_canonical(data: Any) -> str:
    """Render plain JSON data canonically (sorted keys, 2-space indent, trailing newline)."""
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def to_document(model: BaseModel) -> str:
    """Canonical document text for any of the toolkit's pydantic types."""
    return dump_canonical(model.model_dump(mode="json", by_alias=True, exclude_none=True))


def serialize_model(m: DesignModel) -> str:
    """Canonical document text for a DesignModel; parse_model reads it back unchanged."""
    return to_document(m)


# ── Parsing ───────────────────────────────────────────────────────────────────

def _read_json(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelSyntaxError(exc.msg, exc.lineno, exc.colno) from exc


def _describe(exc: ValidationError) -> str:
    """Flatten a pydantic ValidationError into one readable line per problem."""
    parts = []
    for err in exc.errors():
        where = "/".join(str(p) for p in err["loc"]) or "document"
        parts.append(f"{where}: {err['msg']}")
    return "; ".join(parts)


def _fill_uniform(choices: list[dict], key: str = "probability") -> None:
    """Give choices without a probability an equal share of the remaining mass."""
    missing = [c for c in choices if isinstance(c, dict) and c.get(key) is None]
    if not missing:
        return
    given = sum(float(c[key]) for c in choices if isinstance(c, dict) and c.get(key) is not None)
    share = max(0.0, 1.0 - given) / len(missing)
    for c in missing:
        c[key] = share


def _fill_steps(steps: Any) -> None:
    if not isinstance(steps, list):
        return
    for step in steps:
        if not isinstance(step, dict):
            continue
        if step.get("step") == "alt" and isinstance(step.get("branches"), list):
            _fill_uniform(step["branches"])
            for branch in step["branches"]:
                if isinstance(branch, dict):
                    _fill_steps(branch.get("body"))
        elif step.get("step") == "loop":
            _fill_steps(step.get("body"))
        elif step.get("step") == "par" and isinstance(step.get("branches"), list):
            for branch in step["branches"]:
                _fill_steps(branch)


def _fill_uniform_probabilities(raw: dict) -> None:
    for scenario in raw.get("scenario") or []:
        if isinstance(scenario, dict):
            _fill_steps(scenario.get("body"))
    for activity in raw.get("activity") or []:
        if isinstance(activity, dict):
            for decision in activity.get("decisions") or []:
                if isinstance(decision, dict) and isinstance(decision.get("outcomes"), list):
                    _fill_uniform(decision["outcomes"])
    for chart in raw.get("statechart") or []:
        if not isinstance(chart, dict):
            continue
        by_source: dict[str, list[dict]] = {}
        for t in chart.get("transitions") or []:
            if isinstance(t, dict):
                by_source.setdefault(str(t.get("from")), []).append(t)
        for group in by_source.values():
            if len(group) > 1:
                _fill_uniform(group)


def _check_identifiers(m: DesignModel) -> None:
    """Reject duplicate diagram names and scenarios without participants."""
    seen: set[str] = set()
    for name in m.diagram_names():
        if name in seen:
            raise ModelError(f"duplicate identifier {name!r}")
        seen.add(name)
    for s in m.scenario:
        if not s.participants:
            raise ModelError(f"scenario has no participants: {s.name!r}")
    if m.deployment is not None:
        nodes = [n.name for n in m.deployment.nodes]
        duplicates = sorted({n for n in nodes if nodes.count(n) > 1})
        if duplicates:
            raise ModelError(f"duplicate identifier {duplicates[0]!r}")


def parse_model(text: str, uniform_probs: bool = False) -> DesignModel:
    """
    Parse a model document into a DesignModel.

    Args:
        text:          The UTF-8 JSON document.
        uniform_probs: Fill missing branch/outcome probabilities with
                       uniform values instead of rejecting the document.

    Returns:
        The parsed DesignModel.

    Raises:
        ModelSyntaxError: If the text is not well-formed JSON.
        ModelError:       On an unknown diagram kind, a duplicate identifier,
                          a scenario without participants, or any field that
                          does not match the document types.
    """
    raw = _read_json(text)
    if not isinstance(raw, dict):
        raise ModelSyntaxError("a model document must be a JSON object", 1, 1)

    unknown = sorted(set(raw) - SECTIONS)
    if unknown:
        raise ModelError(f"unknown diagram kind {unknown[0]!r}")

    if uniform_probs:
        _fill_uniform_probabilities(raw)

    try:
        model = DesignModel.model_validate(raw)
    except ValidationError as exc:
        raise ModelError(_describe(exc)) from exc

    _check_identifiers(model)
    logger.debug(
        "Parsed model: %d scenario(s), %d activity model(s), %d statechart(s)",
        len(model.scenario), len(model.activity), len(model.statechart),
    )
    return model


def load_model(path: Path | str, uniform_probs: bool = False) -> DesignModel:
    """
    Load and parse a model document from disk.

    Raises:
        ModelError: If the file is missing, unreadable or invalid.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        logger.error("Model file not found: %s", path)
        raise ModelError(f"model file not found: {path}") from exc
    except UnicodeDecodeError as exc:
        raise ModelError(f"model file is not UTF-8: {path}") from exc

    model = parse_model(text, uniform_probs=uniform_probs)
    logger.info("Loaded model %s (%d diagram(s))", path.name, len(model.diagram_names()))
    return model


def parse_graph(text: str) -> ExecutionGraph:
    """Parse an execution graph written as a canonical document."""
    raw = _read_json(text)
    try:
        return ExecutionGraph.model_validate(raw)
    except ValidationError as exc:
        raise ModelError(_describe(exc)) from exc


def load_json_file(path: Path | str) -> Any:
    """Read an auxiliary JSON file (objectives, workloads)."""
    path = Path(path)
    try:
        return _read_json(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        logger.error("File not found: %s", path)
        raise ModelError(f"file not found: {path}") from exc
