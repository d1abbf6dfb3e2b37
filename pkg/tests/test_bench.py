from __future__ import annotations

from dataclasses import replace

import pytest

from skillgraph import corpus
from skillgraph.bench import (
    aggregate,
    aggregate_from_files,
    degrade_library,
    episode_row,
    format_table,
    run_corpus,
    sweep_degradation,
    sweep_memory_size,
    sweep_repair_budget,
    sweep_retrieval_width,
    write_rows_csv,
)
from skillgraph.orchestrator import RuntimeConfig, run_episode
from skillgraph.simenv import inject


class TestDegradeLibrary:
    def test_rate_zero_is_identity(self, household):
        out = degrade_library(household, 0.0, seed=1)
        assert out.schemas == household.schemas

    def test_rate_one_strips_everything(self, household):
        out = degrade_library(household, 1.0, seed=1)
        for schema in out.sorted_schemas():
            assert len(schema.pre_template) == 0
            assert len(schema.description.split()) == 1  # one token kept as a stub

    def test_seeded_determinism(self, household):
        a = degrade_library(household, 0.5, seed=3)
        b = degrade_library(household, 0.5, seed=3)
        assert a.schemas == b.schemas
        c = degrade_library(household, 0.5, seed=4)
        assert c.schemas != a.schemas

    def test_bad_rate_rejected(self, household):
        with pytest.raises(ValueError):
            degrade_library(household, 1.5, seed=0)

    def test_effects_untouched(self, household):
        out = degrade_library(household, 0.9, seed=5)
        for name, schema in out.schemas.items():
            assert schema.eff_template == household.get(name).eff_template


class TestAggregation:
    @pytest.fixture()
    def traces(self, household):
        scenarios = [
            (corpus.potato_scenario(), household),
            (corpus.potato_no_fault_scenario(), household),
        ]
        return run_corpus(scenarios, RuntimeConfig(), modes=("grasp", "flat"), seeds=1)

    def test_rows_and_table(self, traces):
        rows = [episode_row(t) for t in traces]
        assert len(rows) == 4
        table = aggregate(traces)
        assert set(table) == {"grasp", "flat"}
        assert table["grasp"]["episodes"] == 2
        assert table["grasp"]["success_rate"] == 100.0
        # grasp: one direct (no-fault), one local repair (fault)
        assert table["grasp"]["escalation"]["direct"] == 1
        assert table["grasp"]["escalation"]["local_repair"] == 1

    def test_table_formats(self, traces):
        text = format_table(aggregate(traces))
        assert "grasp" in text and "success%" in text

    def test_file_recomputation_matches(self, household, tmp_path):
        scenarios = [(corpus.potato_scenario(), household)]
        traces = run_corpus(
            scenarios, RuntimeConfig(), modes=("grasp",), seeds=2, out_dir=tmp_path
        )
        direct = aggregate(traces)
        from_files = aggregate_from_files(sorted((tmp_path / "traces").glob("*.jsonl")))
        assert direct == from_files

    def test_csv_written(self, traces, tmp_path):
        rows = [episode_row(t) for t in traces]
        path = write_rows_csv(rows, tmp_path / "episodes.csv")
        header = path.read_text().splitlines()[0]
        assert header.startswith("scenario,mode,seed,success,env_steps")


class TestSweeps:
    def test_retrieval_width_rows(self, household):
        scenarios = [(corpus.potato_no_fault_scenario(), household)]
        rows = sweep_retrieval_width(scenarios, RuntimeConfig(), (4, 5), ("grasp",), seeds=1)
        assert {r["M"] for r in rows} == {4, 5}
        assert all(r["success_rate"] == 100.0 for r in rows)

    def test_repair_budget_zero_escalates_instead_of_repairing(self, household):
        # plain full-DAG route so the budget is not silently inflated
        config = RuntimeConfig(tau_high=0.40)
        with_repairs = run_episode(
            corpus.potato_scenario(), household, replace(config, r_max=2), mode="grasp"
        )
        without = run_episode(
            corpus.potato_scenario(), household, replace(config, r_max=0), mode="grasp"
        )
        from skillgraph.trace import escalation_layer

        assert escalation_layer(with_repairs.trace) == "local_repair"
        assert escalation_layer(without.trace) == "fallback"
        assert without.result.replan_count == 1  # replanned, then fell back

    def test_repair_budget_sweep_rows(self, household):
        scenarios = [(corpus.potato_scenario(), household)]
        config = RuntimeConfig(tau_high=0.40)
        rows = sweep_repair_budget(scenarios, config, (0, 2), ("grasp",), seeds=1)
        by_budget = {r["R_max"]: r["success_rate"] for r in rows}
        assert by_budget[2] == 100.0
        assert by_budget[0] == 100.0  # rescued by the reactive fallback layer

    def test_memory_size_sweep_shape(self, household):
        scenarios = [(corpus.potato_no_fault_scenario(), household)]
        rows = sweep_memory_size(scenarios, RuntimeConfig(), (0, 5), ("grasp",), seeds=1)
        assert {r["k"] for r in rows} == {0, 5}

    def test_degradation_sweep_directional(self, household):
        scenarios = [
            (corpus.move_scenario("vase", "table", "shelf"), household),
            (corpus.move_scenario("book", "desk", "shelf"), household),
        ]
        rows = sweep_degradation(scenarios, RuntimeConfig(), (0.5,), ("grasp", "flat"), seeds=3)
        rates = {r["mode"]: r["success_rate"] for r in rows}
        assert rates["grasp"] >= rates["flat"]


class TestFaultCorpusComparisons:
    def test_grasp_steps_at_most_flat_when_both_succeed(self, pipeline_library):
        config = RuntimeConfig(m=20)
        for length in (5, 7, 9):
            for k in range(1, length - 3):
                scenario = replace(corpus.chain_scenario(length), faults=())
                scenario = inject(scenario, corpus.chain_fault(k))
                grasp = run_episode(scenario, pipeline_library, config, mode="grasp")
                flat = run_episode(scenario, pipeline_library, config, mode="flat")
                assert grasp.result.outcome == "success"
                if flat.result.outcome == "success":
                    assert grasp.result.env_steps <= flat.result.env_steps

    def test_monolithic_pays_more_provider_payload(self, household):
        config = RuntimeConfig()
        grasp = run_episode(corpus.potato_scenario(), household, config, mode="grasp")
        mono = run_episode(corpus.potato_scenario(), household, config, mode="monolithic")
        grasp_payload = len(grasp.trace.events_of("retrieval")[0]["skills"])
        mono_payload = len(mono.trace.events_of("retrieval")[0]["skills"])
        assert mono_payload > grasp_payload
        assert mono.result.provider_calls >= grasp.result.provider_calls
        assert mono.result.env_steps >= grasp.result.env_steps


class TestPlots:
    def test_figures_render(self, household, tmp_path):
        from skillgraph import plots

        scenarios = [(corpus.potato_scenario(), household)]
        traces = run_corpus(scenarios, RuntimeConfig(), modes=("grasp", "flat"), seeds=1)
        table = aggregate(traces)
        assert plots.save_mode_bars(table, tmp_path / "bars.png").exists()
        assert plots.save_escalation_stack(table, tmp_path / "stack.png").exists()
        rows = [
            {"M": 3, "mode": "flat", "success_rate": 100.0},
            {"M": 8, "mode": "flat", "success_rate": 40.0},
            {"M": 3, "mode": "grasp", "success_rate": 100.0},
            {"M": 8, "mode": "grasp", "success_rate": 100.0},
        ]
        assert plots.save_sweep_curve(rows, tmp_path / "curve.png").exists()
        points = [
            {"mode": "grasp", "plan_length": 6, "re_executed": 2},
            {"mode": "flat", "plan_length": 6, "re_executed": 4},
        ]
        assert plots.save_locality_scatter(points, tmp_path / "scatter.png").exists()
