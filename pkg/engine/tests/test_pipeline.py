"""
test_pipeline.py — Tests for the assessment process and report rendering.

Coverage:
    - load_objectives: objectives with and without a workload, malformed files
    - PipelineConfig: simulation settings
    - run_pipeline: the ATM design (proceed / revise), skipped steps,
      step-numbered failures, empty objectives, simulation cross-check
    - solve_static_model / solve_system_model / system_network
    - compare_alternatives: ranking, shared objectives, worker pool
    - render_report / render_comparison: text, structured and DOT output
"""

from __future__ import annotations

import json

import pytest
from pydantic import ValidationError

import spe.pipeline as pipeline_module
from spe.errors import ModelError, NetworkError, PipelineError
from spe.execgraph import to_dot
from spe.loader import load_model
from spe.pipeline import (
    PipelineConfig,
    compare_alternatives,
    load_objectives,
    run_pipeline,
    solve_static_model,
    solve_system_model,
    system_network,
)
from spe.report import render_comparison, render_report
from spe.simqnet import SimConfig
from spe.softmodel import Objective
from spe.sysmodel import ClosedWorkload, OpenWorkload
from tests.conftest import DATA_DIR

LONGEST_600 = (Objective(metric="longest", threshold=600),)
LONGEST_500 = (Objective(metric="longest", threshold=500),)
LIGHT_LOAD = OpenWorkload(arrival_rate=0.001)


def _config(path, objectives=LONGEST_600, **kwargs) -> PipelineConfig:
    return PipelineConfig(model_path=path, objectives=objectives, **kwargs)


# ════════════════════════════════════════════════════════════════
#  Objectives and configuration
# ════════════════════════════════════════════════════════════════

class TestObjectives:

    def test_objectives_with_workload(self):
        objectives, workload = load_objectives(DATA_DIR / "objectives_pass.json")
        assert objectives == LONGEST_600
        assert workload == LIGHT_LOAD

    def test_objectives_without_workload(self, write_json):
        path = write_json("o.json", {"objectives": [{"metric": "average", "threshold": 300}]})
        objectives, workload = load_objectives(path)
        assert objectives[0].metric == "average"
        assert workload is None

    def test_malformed_objective(self, write_json):
        path = write_json("o.json", {"objectives": [{"metric": "median", "threshold": 1}]})
        with pytest.raises(ModelError, match="invalid objectives file"):
            load_objectives(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ModelError, match="file not found"):
            load_objectives(tmp_path / "none.json")

    def test_bad_workload_spec(self, write_json):
        path = write_json("o.json", {"objectives": [], "workload": "sometimes"})
        with pytest.raises(ValueError, match="invalid workload"):
            load_objectives(path)


class TestPipelineConfig:

    def test_simulation_needs_sim_config(self, atm_model_path):
        with pytest.raises(ValidationError):
            _config(atm_model_path, workload=LIGHT_LOAD, simulate=True)

    def test_sim_config_needs_simulation(self, atm_model_path):
        with pytest.raises(ValidationError):
            _config(atm_model_path, workload=LIGHT_LOAD, sim_config=SimConfig(horizon=10, seed=1))

    def test_simulation_needs_workload(self, atm_model_path):
        with pytest.raises(ValidationError):
            _config(atm_model_path, simulate=True, sim_config=SimConfig(horizon=10, seed=1))


# ════════════════════════════════════════════════════════════════
#  run_pipeline
# ════════════════════════════════════════════════════════════════

class TestRunPipeline:

    def test_atm_design_proceeds(self, atm_model_path):
        r = run_pipeline(_config(atm_model_path, workload=LIGHT_LOAD))
        assert r.recommendation == "proceed"
        assert r.scenario == "ProcessTransaction"
        assert r.path_metrics.longest == pytest.approx(530)
        (verdict,) = r.verdicts
        assert verdict.margin == pytest.approx(70)
        assert r.passed == 1

    def test_tighter_objective_revises(self, atm_model_path):
        r = run_pipeline(_config(atm_model_path, LONGEST_500, workload=LIGHT_LOAD))
        assert r.recommendation == "revise"
        assert r.verdicts[0].margin == pytest.approx(-30)

    def test_every_step_runs_with_full_model(self, atm_model_path):
        r = run_pipeline(_config(atm_model_path, workload=LIGHT_LOAD))
        assert r.skipped_steps == ()
        assert r.derived_graphs == ("SessionActivity", "ATMStates")
        assert r.demand_vector.per_device["CPU"] == pytest.approx(295)
        assert r.system_metrics.bottleneck == "CPU"
        assert r.system_metrics.per_center["CPU"].utilization == pytest.approx(0.295)
        assert r.bottleneck.center == "CPU"
        assert [n.node for n in r.node_annotations] == ["ATMTerminal", "BankServer"]
        assert [c.component for c in r.collaboration_ranking] == ["ATM", "Bank"]

    def test_declared_demand_warnings_reported(self, atm_model_path):
        r = run_pipeline(_config(atm_model_path))
        assert [d.severity for d in r.diagnostics] == ["warning", "warning"]

    def test_missing_workload_skips_system_steps(self, atm_model_path):
        r = run_pipeline(_config(atm_model_path))
        assert [(s.step, s.reason) for s in r.skipped_steps] == [
            (7, "no workload"),
            (8, "no queueing network"),
        ]
        assert r.system_metrics is None
        assert r.recommendation == "proceed"

    def test_missing_overhead_skips_demands(self, write_json):
        doc = json.loads((DATA_DIR / "atm_model.json").read_text())
        del doc["overhead"]
        r = run_pipeline(_config(write_json("m.json", doc), workload=LIGHT_LOAD))
        assert r.demand_vector is None
        assert (7, "no device demands") in [(s.step, s.reason) for s in r.skipped_steps]

    def test_invalid_model_fails_at_step_two(self, write_json):
        doc = json.loads((DATA_DIR / "golden_weights.json").read_text())
        doc["scenario"][0]["body"][1]["branches"][0]["probability"] = 0.25
        with pytest.raises(PipelineError, match="invalid model") as exc:
            run_pipeline(_config(write_json("m.json", doc)))
        assert exc.value.step == 2
        assert "branch probabilities sum to 0.75" in str(exc.value)

    def test_unreadable_model_fails_at_step_one(self, tmp_path):
        with pytest.raises(PipelineError) as exc:
            run_pipeline(_config(tmp_path / "absent.json"))
        assert exc.value.step == 1

    def test_missing_time_fails_at_step_five(self, write_json):
        doc = json.loads((DATA_DIR / "golden_weights.json").read_text())
        del doc["annotations"]["nodeTimes"]["processWithdrawal"]
        with pytest.raises(PipelineError) as exc:
            run_pipeline(_config(write_json("m.json", doc)))
        assert exc.value.step == 5

    def test_saturating_workload_fails_at_step_eight(self, atm_model_path):
        with pytest.raises(PipelineError) as exc:
            run_pipeline(_config(atm_model_path, workload=OpenWorkload(arrival_rate=0.01)))
        assert exc.value.step == 8
        assert "saturated" in str(exc.value)

    def test_no_objectives(self, atm_model_path):
        with pytest.raises(PipelineError, match="no performance requirements given") as exc:
            run_pipeline(_config(atm_model_path, ()))
        assert exc.value.step == 9

    def test_simulation_cross_check(self, atm_model_path):
        cfg = _config(
            atm_model_path,
            workload=ClosedWorkload(population=2, think_time=1000),
            simulate=True,
            sim_config=SimConfig(horizon=2e5, seed=11, replications=3),
            rel_tol=0.1,
        )
        r = run_pipeline(cfg)
        assert r.sim.config.replications == 3
        assert r.agreement.rel_tol == 0.1
        assert len(r.agreement.checks) == 3 * 3 + 2
        throughput = next(c for c in r.agreement.checks if c.metric == "system.throughput")
        assert throughput.passed

    def test_simulation_uses_worker_pool(self, atm_model_path, monkeypatch):
        seen = []
        real = pipeline_module.simulate

        def recording(*args, **kwargs):
            seen.append(kwargs.get("workers"))
            return real(*args, **kwargs)

        monkeypatch.setattr(pipeline_module, "simulate", recording)
        cfg = _config(
            atm_model_path,
            workload=ClosedWorkload(population=1, think_time=1000),
            simulate=True,
            sim_config=SimConfig(horizon=5e4, seed=3, replications=2),
            workers=2,
        )
        pooled = run_pipeline(cfg)
        serial = run_pipeline(cfg.model_copy(update={"workers": None}))
        assert seen == [2, None]
        assert pooled.sim == serial.sim


# ════════════════════════════════════════════════════════════════
#  Single-stage helpers
# ════════════════════════════════════════════════════════════════

class TestStageHelpers:

    def test_static_report(self, golden_model_path):
        r = solve_static_model(load_model(golden_model_path))
        assert r.scenario == "ProcessTransaction"
        assert r.path_metrics.average == 342.5
        assert r.demand_vector.per_device == {"CPU": 313.75, "IO": 8.5, "Network": 1.75}

    def test_static_report_for_named_diagram(self, atm_model):
        r = solve_static_model(atm_model, "ATMSession")
        assert r.path_metrics.longest == pytest.approx(1230)

    def test_system_report(self, atm_model):
        r = solve_system_model(atm_model, ClosedWorkload(population=1))
        assert r.system_metrics.system_response_time == pytest.approx(295 + 8 + 5 / 3)
        assert r.bottleneck.center == "CPU"

    def test_network_needs_deployment(self, golden_model_path):
        with pytest.raises(NetworkError, match="no deployment"):
            system_network(load_model(golden_model_path))


# ════════════════════════════════════════════════════════════════
#  compare_alternatives
# ════════════════════════════════════════════════════════════════

class TestCompareAlternatives:

    def _configs(self, objectives=LONGEST_600):
        return [
            _config(DATA_DIR / "atm_model.json", objectives),
            _config(DATA_DIR / "atm_fast_deposit.json", objectives),
        ]

    def test_faster_design_ranks_first(self):
        c = compare_alternatives(self._configs())
        assert [a.index for a in c.ranking] == [1, 0]
        assert c.ranking[0].model == "atm_fast_deposit.json"
        assert c.alternatives[1].path_metrics.longest == pytest.approx(280)

    def test_passing_design_ranks_first(self):
        c = compare_alternatives(self._configs(LONGEST_500))
        assert [(a.index, a.passed) for a in c.ranking] == [(1, 1), (0, 0)]
        assert c.alternatives[0].recommendation == "revise"

    def test_equal_designs_keep_input_order(self):
        path = DATA_DIR / "atm_model.json"
        c = compare_alternatives([_config(path), _config(path), _config(path)])
        assert [a.index for a in c.ranking] == [0, 1, 2]

    def test_needs_two_alternatives(self):
        with pytest.raises(PipelineError, match="at least two alternatives"):
            compare_alternatives(self._configs()[:1])

    def test_objectives_must_match(self):
        first, second = self._configs()
        second = second.model_copy(update={"objectives": LONGEST_500})
        with pytest.raises(PipelineError, match="same objectives"):
            compare_alternatives([first, second])

    def test_worker_pool_gives_same_report(self):
        assert compare_alternatives(self._configs(), workers=2) == compare_alternatives(self._configs())


# ════════════════════════════════════════════════════════════════
#  Rendering
# ════════════════════════════════════════════════════════════════

class TestRenderReport:

    @pytest.fixture
    def report(self, atm_model_path):
        return run_pipeline(_config(atm_model_path, workload=LIGHT_LOAD))

    def test_text_report(self, report):
        text = render_report(report)
        assert text.startswith("Assessment of atm_model.json (performance scenario ProcessTransaction)")
        assert "longest path   530" in text
        assert "longest <= 600: PASS (value 530, margin 70)" in text
        assert "bottleneck     CPU" in text
        assert text.endswith("Recommendation: proceed\n")

    def test_text_names_dominant_delay_center(self, report):
        assert "delay center" not in render_report(report)
        bottleneck = report.bottleneck.model_copy(update={"largest_delay_center": "Users"})
        text = render_report(report.model_copy(update={"bottleneck": bottleneck}))
        assert "  largest demand Users (delay center, not a bottleneck)\n" in text

    def test_text_without_objectives(self, report):
        text = render_report(report.model_copy(update={"verdicts": ()}))
        assert "Objectives\n  no objectives\n" in text

    def test_structured_report(self, report):
        data = json.loads(render_report(report, "structured"))
        assert data["recommendation"] == "proceed"
        assert data["pathMetrics"]["longest"] == pytest.approx(530)
        assert "graph" not in data
        assert data["systemMetrics"]["workload"] == {"arrivalRate": 0.001, "type": "open"}

    def test_dot_report_is_the_graph(self, report):
        assert render_report(report, "dot") == to_dot(report.graph)

    def test_unknown_format(self, report):
        with pytest.raises(ValueError, match="unknown report format"):
            render_report(report, "pdf")

    def test_comparison_text(self):
        c = compare_alternatives([
            _config(DATA_DIR / "atm_model.json"),
            _config(DATA_DIR / "atm_fast_deposit.json"),
        ])
        lines = render_comparison(c).splitlines()
        assert lines[0] == "Design alternatives (best first)"
        assert "#1 atm_fast_deposit.json" in lines[1]
        assert lines[2].endswith("proceed")
