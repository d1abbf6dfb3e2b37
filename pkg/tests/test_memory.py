from __future__ import annotations

import random

import pytest

from skillgraph.conditions import WorldState
from skillgraph.memory import (
    EpisodeSummary,
    MemoryRecord,
    MemoryStore,
    append_memory,
    jaccard,
    load_memory,
    record_episode,
    similarity,
    skill_frequency,
    tokenize,
    top_k,
)


def record(task="heat the potato", facts=("at(potato,counter2)",), skills=("heat-object",),
           outcome="success", steps=5):
    return MemoryRecord(
        task_text=task,
        initial_facts=frozenset(facts),
        skill_sequence=tuple(skills),
        outcome=outcome,
        reward=1.0 if outcome == "success" else 0.0,
        steps=steps,
    )


class TestSimilarity:
    def test_identical_is_one(self):
        rec = record()
        assert similarity(rec.task_text, rec.initial_facts, rec) == 1.0

    def test_disjoint_is_zero(self):
        rec = record(task="water garden plants", facts=("grown(fern)",))
        assert similarity("assemble rocket engine", frozenset({"holding(bolt)"}), rec) == 0.0

    def test_weighted_blend_hand_value(self):
        # task jaccard 2/4, fact jaccard 1/2 -> 0.6*0.5 + 0.4*0.5 = 0.5
        rec = record(task="heat potato quickly now", facts=("f1()", "f2()"))
        value = similarity("heat potato later maybe", frozenset({"f1()", "f3()"}), rec)
        task_j = jaccard(tokenize("heat potato later maybe"), tokenize(rec.task_text))
        fact_j = jaccard(frozenset({"f1()", "f3()"}), rec.initial_facts)
        assert task_j == pytest.approx(2 / 6)  # set-overlap oracle on the actual token sets
        assert fact_j == pytest.approx(1 / 3)
        assert value == pytest.approx(0.6 * task_j + 0.4 * fact_j)

    def test_symmetry(self):
        a = record(task="wash cup in sink", facts=("clean(cup)",))
        b = record(task="wash plate in sink", facts=("clean(plate)",))
        ab = similarity(a.task_text, a.initial_facts, b)
        ba = similarity(b.task_text, b.initial_facts, a)
        assert ab == pytest.approx(ba)

    def test_exact_half_blend(self):
        rec = record(task="alpha beta gamma delta", facts=("x()", "y()"))
        # craft query: token jaccard exactly 0.5, fact jaccard exactly 0.5
        value = similarity("alpha beta epsilon zeta", frozenset({"x()", "z()"}), rec)
        # tokens: inter {alpha,beta}=2, union 6 -> 1/3 ; facts: 1/3
        assert value == pytest.approx(0.6 * (2 / 6) + 0.4 * (1 / 3))


class TestTopK:
    def test_empty_store(self):
        assert top_k("any", WorldState.of(), MemoryStore(), 5) == []

    def test_k_zero(self):
        store = MemoryStore([record()])
        assert top_k("any", WorldState.of(), store, 0) == []

    def test_failures_excluded(self):
        store = MemoryStore([record(outcome="failure", skills=()), record()])
        hits = top_k("heat the potato", WorldState.of(), store, 5)
        assert len(hits) == 1 and hits[0][0].outcome == "success"

    def test_matches_full_sort_oracle(self):
        rng = random.Random(4)
        words = ["heat", "cool", "move", "potato", "cup", "shelf", "wash", "slice"]
        for _ in range(20):
            store = MemoryStore()
            for i in range(rng.randint(1, 100)):
                outcome = "success" if rng.random() < 0.7 else "failure"
                skills = ("s",) if outcome == "success" else ()
                store.append(
                    record(
                        task=" ".join(rng.sample(words, rng.randint(1, 4))),
                        facts=tuple(rng.sample(words, rng.randint(0, 3))),
                        skills=skills,
                        outcome=outcome,
                    )
                )
            state = WorldState.of()
            query = "heat the potato on shelf"
            facts = frozenset(str(a) for a in state.facts)
            oracle = [
                (rec, similarity(query, facts, rec))
                for rec in store
                if rec.outcome == "success"
            ]
            oracle.sort(key=lambda p: -p[1])
            k = rng.randint(0, 10)
            got = top_k(query, state, store, k)
            assert got == oracle[:k]
            # prefix property: results are a prefix of the full descending sort
            assert [g[1] for g in got] == [o[1] for o in oracle[: len(got)]]


class TestSkillFrequency:
    def test_absent_is_zero(self):
        assert skill_frequency("x", ("a", "b")) == 0.0

    def test_counting_oracle(self):
        seq = ("a", "a", "b")
        assert skill_frequency("a", seq) == pytest.approx(seq.count("a") / len(seq))
        assert skill_frequency("a", seq) == pytest.approx(2 / 3)

    def test_singleton(self):
        assert skill_frequency("a", ("a",)) == 1.0

    def test_empty_sequence(self):
        assert skill_frequency("a", ()) == 0.0

    def test_distinct_frequencies_sum_to_one(self):
        rng = random.Random(9)
        for _ in range(25):
            seq = tuple(rng.choice("abcd") for _ in range(rng.randint(1, 12)))
            total = sum(skill_frequency(s, seq) for s in sorted(set(seq)))
            assert total == pytest.approx(1.0)


class TestStore:
    def test_fifo_cap(self):
        store = MemoryStore(cap=3)
        for i in range(5):
            store.append(record(task=f"task {i}"))
        assert len(store) == 3
        assert [r.task_text for r in store] == ["task 2", "task 3", "task 4"]

    def test_record_episode_appends(self):
        store = MemoryStore()
        out = record_episode(
            store,
            EpisodeSummary(
                task_text="heat potato",
                initial_state=WorldState.of("at(potato,counter2)"),
                executed_skills=("find-object", "pick-up"),
                success=True,
                env_steps=6,
                reward=1.0,
            ),
        )
        assert out is not None and len(store) == 1
        assert store.records()[0].outcome == "success"

    def test_reactive_only_success_not_stored(self):
        store = MemoryStore()
        out = record_episode(
            store,
            EpisodeSummary(
                task_text="heat potato",
                initial_state=WorldState.of(),
                executed_skills=(),
                success=True,
                env_steps=9,
            ),
        )
        assert out is None and len(store) == 0

    def test_failure_with_no_skills_is_stored(self):
        store = MemoryStore()
        record_episode(
            store,
            EpisodeSummary(
                task_text="heat potato",
                initial_state=WorldState.of(),
                executed_skills=(),
                success=False,
                env_steps=30,
            ),
        )
        assert len(store) == 1 and store.records()[0].outcome == "failure"

    def test_success_requires_skill_sequence(self):
        with pytest.raises(ValueError):
            record(skills=(), outcome="success")

    def test_jsonl_round_trip(self, tmp_path):
        path = tmp_path / "memory.jsonl"
        first = record()
        second = record(task="cool the egg", skills=("cool-object",))
        append_memory(path, first)
        append_memory(path, second)
        loaded = load_memory(path)
        assert loaded.records() == [first, second]

    def test_jsonl_error_names_line(self, tmp_path):
        path = tmp_path / "memory.jsonl"
        path.write_text('{"task": "x"}\n')
        with pytest.raises(ValueError, match=":1:"):
            load_memory(path)
