from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from skillgraph.conditions import Condition, WorldState
from skillgraph.library import parse_library
from skillgraph.memory import MemoryRecord, MemoryStore
from skillgraph.retrieval import (
    CalibrationState,
    ConfidenceFeatures,
    EmptyLibrary,
    SupportMismatch,
    confidence_features,
    direct_distribution,
    fuse,
    jensen_shannon,
    logistic,
    memory_distribution,
    retrieval_confidence,
    retrieve,
    update_calibration,
)


def tiny_library(names=("alpha", "beta"), descriptions=None):
    descriptions = descriptions or {n: n for n in names}
    return parse_library(
        {
            "predicates": [{"name": "done", "arity": 0, "sorts": []}],
            "skills": [
                {
                    "name": n,
                    "description": descriptions[n],
                    "params": [],
                    "pre": [],
                    "eff": ["done()"],
                    "base_confidence": 0.5,
                }
                for n in names
            ],
        }
    )


def success_record(skills, task="task", rho_facts=()):
    return MemoryRecord(
        task_text=task,
        initial_facts=frozenset(rho_facts),
        skill_sequence=tuple(skills),
        outcome="success",
        reward=1.0,
        steps=3,
    )


class TestDirectDistribution:
    def test_single_skill_gets_all_mass(self):
        lib = tiny_library(("alpha",))
        dist = direct_distribution("anything", WorldState.of(), lib)
        assert dist == {"alpha": 1.0}

    def test_zero_overlap_is_uniform(self):
        lib = tiny_library(("alpha", "beta"))
        dist = direct_distribution("quux corge", WorldState.of(), lib)
        assert dist["alpha"] == pytest.approx(0.5)
        assert dist["beta"] == pytest.approx(0.5)

    def test_empty_library_rejected(self):
        with pytest.raises(EmptyLibrary):
            direct_distribution("x", WorldState.of(), tiny_library(()))

    def test_potato_ranks_heating_over_gardening(self, household):
        dist = direct_distribution(
            "heat some potato and put it on a countertop", WorldState.of(), household
        )
        assert dist["heat-object"] > dist["grow-plant"]


class TestFuse:
    def test_lambda_one_returns_direct(self):
        p_dir = {"a": 0.7, "b": 0.3}
        records = [(success_record(["b"]), 1.0)]
        assert fuse(p_dir, records, 1.0) == pytest.approx(p_dir)

    def test_lambda_zero_pure_memory(self):
        # one record with rho=1 and trajectory [A, A, B] -> {A: 2/3, B: 1/3}
        p_dir = {"a": 0.5, "b": 0.5}
        records = [(success_record(["a", "a", "b"]), 1.0)]
        out = fuse(p_dir, records, 0.0)
        assert out["a"] == pytest.approx(2 / 3)
        assert out["b"] == pytest.approx(1 / 3)

    def test_half_mixture_hand_value(self):
        p_dir = {"a": 0.5, "b": 0.5}
        records = [(success_record(["a", "a", "b"]), 1.0)]
        out = fuse(p_dir, records, 0.5)
        assert out["a"] == pytest.approx(0.5 * 0.5 + 0.5 * (2 / 3))
        assert out["a"] == pytest.approx(0.5833333333333)
        assert out["b"] == pytest.approx(0.4166666666666)

    def test_no_records_returns_direct_for_any_lambda(self):
        p_dir = {"a": 0.9, "b": 0.1}
        for lam in (0.0, 0.3, 1.0):
            assert fuse(p_dir, [], lam) == pytest.approx(p_dir)

    def test_zero_in_support_mass_returns_direct(self):
        p_dir = {"a": 0.9, "b": 0.1}
        records = [(success_record(["zz"]), 1.0)]  # trajectory outside the library
        assert fuse(p_dir, records, 0.0) == pytest.approx(p_dir)

    @given(
        st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6),
        st.floats(0.0, 1.0),
        st.lists(
            st.tuples(
                st.lists(st.integers(0, 5), min_size=1, max_size=6),
                st.floats(0.0, 1.0),
            ),
            max_size=4,
        ),
    )
    @settings(max_examples=200, deadline=None)
    def test_output_is_valid_distribution(self, weights, lam, raw_records):
        names = [f"s{i}" for i in range(len(weights))]
        total = sum(weights)
        p_dir = {n: w / total for n, w in zip(names, weights)}
        records = [
            (success_record([f"s{i % len(names)}" for i in traj]), rho)
            for traj, rho in raw_records
        ]
        out = fuse(p_dir, records, lam)
        assert all(v >= 0 for v in out.values())
        assert sum(out.values()) == pytest.approx(1.0, abs=1e-9)

    def test_matches_bruteforce_oracle_on_random_inputs(self):
        # independent renormalization oracle over 500 random draws
        rng = random.Random(42)
        for _ in range(500):
            n = rng.randint(1, 6)
            names = [f"s{i}" for i in range(n)]
            raw = [rng.random() + 1e-9 for _ in names]
            z = sum(raw)
            p_dir = {k: v / z for k, v in zip(names, raw)}
            records = []
            for _ in range(rng.randint(0, 4)):
                traj = [rng.choice(names + ["ghost"]) for _ in range(rng.randint(1, 5))]
                records.append((success_record(traj), rng.random()))
            lam = rng.random()

            mem_raw = {k: 0.0 for k in names}
            for rec, rho in records:
                seq = rec.skill_sequence
                for k in names:
                    mem_raw[k] += rho * (seq.count(k) / len(seq))
            mem_z = sum(mem_raw.values())
            if records and mem_z > 0:
                expected = {k: lam * p_dir[k] + (1 - lam) * mem_raw[k] / mem_z for k in names}
            else:
                expected = dict(p_dir)

            out = fuse(p_dir, records, lam)
            for k in names:
                assert abs(out[k] - expected[k]) < 1e-9


class TestJsd:
    def test_identical_distributions(self):
        p = {"a": 0.5, "b": 0.5}
        assert jensen_shannon(p, dict(p)) == pytest.approx(0.0)

    def test_disjoint_support_is_one(self):
        p = {"a": 1.0, "b": 0.0}
        q = {"a": 0.0, "b": 1.0}
        assert jensen_shannon(p, q) == pytest.approx(1.0)

    def test_support_mismatch_rejected(self):
        with pytest.raises(SupportMismatch):
            jensen_shannon({"a": 1.0}, {"b": 1.0})

    def test_known_value(self):
        # direct numeric evaluation of JSD({1,0},{0.5,0.5}) in bits
        p = {"a": 1.0, "b": 0.0}
        q = {"a": 0.5, "b": 0.5}
        m = {"a": 0.75, "b": 0.25}
        h = lambda d: -sum(v * math.log2(v) for v in d.values() if v > 0)
        expected = h(m) - (h(p) + h(q)) / 2
        assert jensen_shannon(p, q) == pytest.approx(expected)


class TestConfidenceFeatures:
    def test_agreement_one_when_identical(self):
        p = {"a": 0.6, "b": 0.4}
        f = confidence_features(p, dict(p), [], [], Condition())
        assert f.agreement == pytest.approx(1.0)

    def test_agreement_zero_on_disjoint_support(self):
        p = {"a": 1.0, "b": 0.0}
        q = {"a": 0.0, "b": 1.0}
        f = confidence_features(p, q, [], [], Condition())
        assert f.agreement == pytest.approx(0.0)

    def test_empty_memory_defaults_to_direct_prior(self):
        p = {"a": 0.8, "b": 0.2}
        zeros = {"a": 0.0, "b": 0.0}
        f = confidence_features(p, zeros, [], [], Condition())
        assert f.agreement == pytest.approx(1.0)
        assert f.mean_rho == 0.0

    def test_margin_from_fused(self):
        p = {"a": 0.7, "b": 0.3}
        f = confidence_features(p, dict(p), [], [], Condition(), fused=p)
        assert f.margin == pytest.approx(0.4)

    def test_margin_single_skill_support(self):
        p = {"a": 1.0}
        f = confidence_features(p, dict(p), [], [], Condition())
        assert f.margin == 1.0

    def test_mean_rho(self):
        recs = [(success_record(["a"]), 0.2), (success_record(["a"]), 0.6)]
        p = {"a": 1.0}
        f = confidence_features(p, dict(p), recs, [], Condition())
        assert f.mean_rho == pytest.approx(0.4)

    def test_coverage_full(self, household):
        goal = Condition.of("hot(potato)", "at(potato,counter1)")
        selected = [household.get("heat-object"), household.get("place-object")]
        f = confidence_features({"x": 1.0}, {"x": 1.0}, [], selected, goal)
        assert f.coverage == 1.0

    def test_coverage_partial_and_empty_goal(self, household):
        goal = Condition.of("hot(potato)", "at(potato,counter1)")
        f = confidence_features({"x": 1.0}, {"x": 1.0}, [], [household.get("heat-object")], goal)
        assert f.coverage == pytest.approx(0.5)
        f2 = confidence_features({"x": 1.0}, {"x": 1.0}, [], [], Condition())
        assert f2.coverage == 1.0

    def test_coverage_matches_bruteforce_enumeration(self, household):
        # oracle: try every schema x goal atom, unify effect templates directly
        goal = Condition.of("hot(potato)", "grown(fern)", "kit_done()")
        selected = [household.get("heat-object"), household.get("assemble-kit")]
        f = confidence_features({"x": 1.0}, {"x": 1.0}, [], selected, goal)

        def producible(atom):
            for schema in selected:
                params = dict(schema.params)
                for tmpl in schema.eff_template.positives():
                    if tmpl.predicate != atom.predicate or len(tmpl.args) != len(atom.args):
                        continue
                    consistent = {}
                    ok = True
                    for t, g in zip(tmpl.args, atom.args):
                        if t in params:
                            if consistent.setdefault(t, g) != g:
                                ok = False
                                break
                        elif t != g:
                            ok = False
                            break
                    if ok:
                        return True
            return False

        atoms = sorted(goal.positives(), key=str)
        expected = sum(producible(a) for a in atoms) / len(atoms)
        assert f.coverage == pytest.approx(expected)
        assert f.coverage == pytest.approx(2 / 3)


class TestRetrievalConfidence:
    def test_neutral_inputs_give_half(self):
        calib = CalibrationState(weights=(0.0, 0.0, 0.0, 0.0), bias=0.0, eta=0.7)
        f = ConfidenceFeatures(0.0, 0.0, 0.0, 0.0)
        c, raw = retrieval_confidence(f, calib)
        assert raw == pytest.approx(0.5)  # logistic(0)
        assert c == pytest.approx(0.7 * 0.5 + 0.3 * 0.5)
        assert c == pytest.approx(0.5)

    def test_all_ones_features(self):
        calib = CalibrationState(weights=(1.0, 1.0, 1.0, 1.0), bias=0.0, eta=0.7)
        f = ConfidenceFeatures(1.0, 1.0, 1.0, 1.0)
        c, raw = retrieval_confidence(f, calib)
        assert raw == pytest.approx(logistic(4.0))
        assert raw == pytest.approx(0.9820137900379085)
        assert c == pytest.approx(0.7 * raw + 0.3 * 0.5)

    def test_eta_one_is_pure_logistic(self):
        calib = CalibrationState(weights=(1.0, 1.0, 1.0, 1.0), bias=-2.0, eta=1.0)
        f = ConfidenceFeatures(0.25, 0.5, 0.125, 1.0)
        c, raw = retrieval_confidence(f, calib)
        assert c == pytest.approx(raw)

    def test_history_bins_blend_in(self):
        calib = CalibrationState(weights=(0.0, 0.0, 0.0, 0.0), bias=0.0, eta=0.7)
        for _ in range(10):
            calib = update_calibration(calib, 0.5, True)
        f = ConfidenceFeatures(0.0, 0.0, 0.0, 0.0)
        c, raw = retrieval_confidence(f, calib)
        assert raw == pytest.approx(0.5)
        assert c == pytest.approx(0.7 * 0.5 + 0.3 * 1.0)

    def test_matches_bruteforce_numeric_oracle(self):
        rng = random.Random(7)
        for _ in range(500):
            weights = tuple(rng.uniform(-2, 2) for _ in range(4))
            bias = rng.uniform(-3, 3)
            eta = rng.random()
            bins = tuple(
                (rng.randint(0, 5), rng.randint(0, 9)) for _ in range(10)
            )
            bins = tuple((min(s, t), t) for s, t in bins)
            calib = CalibrationState(bins=bins, weights=weights, bias=bias, eta=eta)
            f = ConfidenceFeatures(*(rng.random() for _ in range(4)))
            c, raw = retrieval_confidence(f, calib)
            z = sum(w * x for w, x in zip(weights, f.as_tuple())) + bias
            expected_raw = 1.0 / (1.0 + math.exp(-z))
            idx = min(int(expected_raw * 10), 9)
            s, t = bins[idx]
            hist = 0.5 if t == 0 else s / t
            expected = min(1.0, max(0.0, eta * expected_raw + (1 - eta) * hist))
            assert abs(raw - expected_raw) < 1e-9
            assert abs(c - expected) < 1e-9


class TestCalibrationUpdates:
    def test_bin_increment(self):
        calib = CalibrationState()
        out = update_calibration(calib, 0.42, True)
        assert out.bins[4] == (1, 1)
        out = update_calibration(out, 0.42, False)
        assert out.bins[4] == (1, 2)

    def test_edge_scores(self):
        calib = update_calibration(CalibrationState(), 1.0, True)
        assert calib.bins[9] == (1, 1)
        calib = update_calibration(calib, 0.0, False)
        assert calib.bins[0] == (0, 1)

    def test_round_trip(self):
        calib = update_calibration(CalibrationState(), 0.77, True)
        again = CalibrationState.from_dict(calib.to_dict())
        assert again == calib


class TestRetrieve:
    def test_empty_memory_uses_direct(self, household):
        state = WorldState.of("at(potato,counter2)")
        goal = Condition.of("hot(potato)")
        out = retrieve("heat some potato", state, household, MemoryStore(), goal, m=4)
        assert len(out.skills) == 4
        assert out.features.mean_rho == 0.0
        direct = direct_distribution("heat some potato", state, household)
        ranked = sorted(direct.items(), key=lambda kv: (-kv[1], kv[0]))
        assert list(out.skills) == [n for n, _ in ranked[:4]]

    def test_m_at_least_library_returns_everything(self, household):
        out = retrieve(
            "anything", WorldState.of(), household, MemoryStore(), Condition(), m=999
        )
        assert len(out.skills) == len(household)
        assert len(set(out.skills)) == len(out.skills)

    def test_seeded_memory_boosts_case_study_skills(self, household, potato):
        store = MemoryStore()
        store.append(
            MemoryRecord(
                task_text=potato.task,
                initial_facts=frozenset(str(a) for a in potato.initial_state().facts),
                skill_sequence=("find-object", "pick-up", "heat-object", "place-object"),
                outcome="success",
                reward=1.0,
                steps=6,
            )
        )
        out = retrieve(potato.task, potato.initial_state(), household, store, potato.goal, m=4)
        assert set(out.skills) == {"find-object", "pick-up", "heat-object", "place-object"}
        assert out.features.mean_rho == pytest.approx(1.0)

    def test_deterministic_byte_for_byte(self, household, potato):
        import json

        runs = []
        for _ in range(2):
            out = retrieve(potato.task, potato.initial_state(), household, MemoryStore(), potato.goal)
            runs.append(json.dumps(out.to_dict(), sort_keys=True))
        assert runs[0] == runs[1]

    def test_summary_carries_precedence_hints(self, household):
        store = MemoryStore()
        store.append(success_record(["find-object", "pick-up"], task="move things"))
        out = retrieve("move things", WorldState.of(), household, store, Condition())
        assert out.summary == (("find-object", "pick-up"),)


class TestMemoryDistribution:
    def test_outside_support_mass_ignored(self):
        records = [(success_record(["x", "a"]), 1.0)]
        dist = memory_distribution(records, ["a", "b"])
        assert dist["a"] == pytest.approx(1.0)
        assert dist["b"] == 0.0


class TestFeatureInvariants:
    @given(
        st.lists(st.floats(0.001, 1.0), min_size=1, max_size=8),
        st.lists(st.floats(0.001, 1.0), min_size=1, max_size=8),
    )
    @settings(max_examples=150, deadline=None)
    def test_margin_always_in_unit_interval(self, raw_dir, raw_mem):
        n = max(len(raw_dir), len(raw_mem))
        raw_dir = (raw_dir * n)[:n]
        raw_mem = (raw_mem * n)[:n]
        names = [f"s{i}" for i in range(n)]
        zd, zm = sum(raw_dir), sum(raw_mem)
        p_dir = {k: v / zd for k, v in zip(names, raw_dir)}
        p_mem = {k: v / zm for k, v in zip(names, raw_mem)}
        f = confidence_features(p_dir, p_mem, [], [], Condition())
        assert 0.0 <= f.margin <= 1.0
        assert 0.0 <= f.agreement <= 1.0

    def test_coverage_one_whenever_goal_in_reachable_effects(self, household):
        # brute-force effect enumeration over random goal subsets
        rng = random.Random(31)
        producible_atoms = [
            "hot(potato)", "cold(potato)", "clean(cup)", "visible(vase)",
            "holding(book)", "at(pan,shelf)", "stowed(jar)", "kit_done()",
            "supplies_ready()", "grown(fern)", "sliced(bread)", "examined(mug)",
        ]
        selected = household.sorted_schemas()
        for _ in range(50):
            picked = rng.sample(producible_atoms, rng.randint(1, 5))
            goal = Condition.of(*picked)
            f = confidence_features({"x": 1.0}, {"x": 1.0}, [], selected, goal)
            assert f.coverage == 1.0  # the full library produces all of these

    def test_coverage_zero_when_nothing_produces_goal(self, household):
        goal = Condition.of("examined(mug)")
        trimmed = [household.get("place-object")]
        f = confidence_features({"x": 1.0}, {"x": 1.0}, [], trimmed, goal)
        assert f.coverage == 0.0
