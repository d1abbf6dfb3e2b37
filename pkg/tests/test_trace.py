from __future__ import annotations

import pytest

from skillgraph import corpus
from skillgraph.orchestrator import RuntimeConfig, run_episode
from skillgraph.trace import (
    EpisodeTrace,
    TraceError,
    config_hash,
    escalation_histogram,
    escalation_layer,
    load_trace,
)


def run_potato(household, **kwargs):
    return run_episode(corpus.potato_scenario(), household, RuntimeConfig(), **kwargs)


class TestTraceFormat:
    def test_round_trip_byte_exact(self, household, tmp_path):
        out = run_potato(household)
        path = tmp_path / "potato.trace.jsonl"
        out.trace.save(path)
        loaded = load_trace(path)
        rebuilt = EpisodeTrace(header=loaded.header, events=loaded.events)
        rebuilt.footer = loaded.footer
        assert rebuilt.dumps() == out.trace.dumps()

    def test_header_first_footer_last(self, household):
        out = run_potato(household)
        lines = out.trace.lines()
        assert '"type":"header"' in lines[0]
        assert '"type":"footer"' in lines[-1]
        assert '"version":1' in lines[0]

    def test_header_fields(self, household):
        out = run_potato(household)
        head = out.trace.header
        assert head["scenario"] == "potato"
        assert head["mode"] == "grasp"
        assert head["seed"] == 0
        assert head["config_hash"] == RuntimeConfig().hash()

    def test_event_ordering_matches_execution(self, household):
        out = run_potato(household)
        kinds = [e["type"] for e in out.trace.events]
        assert kinds[0] == "retrieval"
        assert kinds[1] == "route"
        assert "compile" in kinds
        assert kinds.index("compile") < kinds.index("node_attempt")

    def test_replay_reproduces_bytes(self, household):
        first = run_potato(household)
        again = run_potato(household)
        assert first.trace.dumps() == again.trace.dumps()

    def test_malformed_file_reports_line(self, tmp_path):
        path = tmp_path / "broken.trace.jsonl"
        path.write_text('{"type":"header","scenario":"x"}\nnot json\n')
        with pytest.raises(TraceError, match="line 2"):
            load_trace(path)

    def test_missing_header_rejected(self, tmp_path):
        path = tmp_path / "headless.trace.jsonl"
        path.write_text('{"type":"footer","result":{}}\n')
        with pytest.raises(TraceError, match="header"):
            load_trace(path)


class TestConfigHash:
    def test_sensitive_to_every_table_parameter(self):
        base = RuntimeConfig()
        seen = {base.hash()}
        variants = [
            {"lam": 0.6},
            {"k": 6},
            {"m": 6},
            {"eta": 0.8},
            {"tau_low": 0.35},
            {"tau_high": 0.7},
            {"h": 3},
            {"l_max": 4},
            {"e_max": 6},
            {"r_max": 3},
            {"p_max": 2},
            {"max_env_steps": 25},
        ]
        from dataclasses import replace

        for change in variants:
            digest = replace(base, **change).hash()
            assert digest not in seen, change
            seen.add(digest)

    def test_insensitive_to_seed(self):
        from dataclasses import replace

        base = RuntimeConfig()
        assert replace(base, seed=999).hash() == base.hash()

    def test_direct_params_api(self):
        params = RuntimeConfig().to_params()
        assert config_hash(params) == RuntimeConfig().hash()


class TestEscalation:
    def test_layer_classification(self, household, lab_library):
        direct = run_episode(
            corpus.potato_no_fault_scenario(), household, RuntimeConfig(), mode="grasp"
        )
        assert escalation_layer(direct.trace) == "direct"

        local = run_potato(household)
        assert escalation_layer(local.trace) == "local_repair"

        fallback = run_episode(
            corpus.potato_scenario(), household, RuntimeConfig(), mode="fallback"
        )
        assert escalation_layer(fallback.trace) == "fallback"

        fail = run_episode(corpus.potato_scenario(), household, RuntimeConfig(), mode="flat")
        assert escalation_layer(fail.trace) == "fail"

    def test_replan_layer(self, pipeline_library):
        from dataclasses import replace
        from skillgraph.simenv import inject

        scenario = replace(corpus.chain_scenario(7), faults=())
        scenario = inject(scenario, corpus.chain_fault(2))
        out = run_episode(scenario, pipeline_library, RuntimeConfig(m=20), mode="flat")
        assert out.result.outcome == "success" and out.result.replan_count == 1
        assert escalation_layer(out.trace) == "replan"

    def test_histogram_matches_hand_count(self, household):
        traces = [
            run_episode(corpus.potato_no_fault_scenario(), household, RuntimeConfig()).trace,
            run_potato(household).trace,
            run_episode(corpus.potato_scenario(), household, RuntimeConfig(), mode="flat").trace,
        ]
        hist = escalation_histogram(traces)
        assert hist == {
            "direct": 1,
            "local_repair": 1,
            "replan": 0,
            "fallback": 0,
            "fail": 1,
        }

    def test_empty_bundle(self):
        hist = escalation_histogram([])
        assert sum(hist.values()) == 0
