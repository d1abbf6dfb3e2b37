from __future__ import annotations

import json

import pytest

from skillgraph.conditions import Condition
from skillgraph.library import (
    LibraryFormatError,
    MissingBinding,
    SortMismatch,
    UnknownParam,
    bind_schema,
    check_binding_sorts,
    ground_actions,
    infer_object_sorts,
    parse_library,
)


def minimal_doc():
    return {
        "predicates": [
            {"name": "holding", "arity": 1, "sorts": ["object"]},
            {"name": "open", "arity": 1, "sorts": ["appliance"]},
            {"name": "hot", "arity": 1, "sorts": ["object"]},
        ],
        "skills": [
            {
                "name": "heat-object",
                "description": "heat a held object in an open appliance",
                "params": [["obj", "object"], ["appliance", "appliance"]],
                "pre": ["holding(obj)", "open(appliance)"],
                "eff": ["hot(obj)"],
                "base_confidence": 0.8,
                "actions": ["heat {obj} with {appliance}"],
            },
            {
                "name": "noop",
                "description": "do nothing",
                "params": [],
                "pre": [],
                "eff": [],
                "base_confidence": 0.5,
            },
        ],
    }


class TestBindSchema:
    def test_textual_substitution(self, household):
        schema = household.get("heat-object")
        pre, eff = bind_schema(schema, {"obj": "potato", "appliance": "mw"})
        assert pre == Condition.of("holding(potato)", "open(mw)", "heats(mw)")
        assert eff == Condition.of("hot(potato)")

    def test_zero_param_schema_verbatim(self):
        lib = parse_library(minimal_doc())
        schema = lib.get("noop")
        pre, eff = bind_schema(schema, {})
        assert pre == Condition() and eff == Condition()

    def test_missing_binding(self):
        lib = parse_library(minimal_doc())
        with pytest.raises(MissingBinding) as err:
            bind_schema(lib.get("heat-object"), {"obj": "potato"})
        assert err.value.param == "appliance"

    def test_unknown_param(self):
        lib = parse_library(minimal_doc())
        with pytest.raises(UnknownParam):
            bind_schema(lib.get("heat-object"), {"obj": "potato", "appliance": "mw", "x": "y"})

    def test_sort_mismatch_against_object_table(self):
        lib = parse_library(minimal_doc())
        with pytest.raises(SortMismatch):
            check_binding_sorts(
                lib.get("heat-object"),
                {"obj": "potato", "appliance": "potato"},
                {"potato": "object"},
            )

    def test_ground_actions(self, household):
        schema = household.get("heat-object")
        acts = ground_actions(schema, {"obj": "potato", "appliance": "mw"})
        assert acts == ["go to mw", "heat potato with mw"]


class TestStrictParsing:
    def test_unknown_top_level_key(self):
        doc = minimal_doc()
        doc["extras"] = []
        with pytest.raises(LibraryFormatError, match=r"\$\.extras"):
            parse_library(doc)

    def test_unknown_skill_key_names_path(self):
        doc = minimal_doc()
        doc["skills"][0]["outputz"] = []
        with pytest.raises(LibraryFormatError, match=r"\$\.skills\[0\]\.outputz"):
            parse_library(doc)

    def test_arity_mismatch(self):
        doc = minimal_doc()
        doc["predicates"][0]["arity"] = 2
        with pytest.raises(LibraryFormatError, match="arity"):
            parse_library(doc)

    def test_atom_arity_checked_against_registry(self):
        doc = minimal_doc()
        doc["skills"][0]["pre"] = ["holding(obj,appliance)"]
        with pytest.raises(LibraryFormatError, match="arity mismatch"):
            parse_library(doc)

    def test_undeclared_predicate(self):
        doc = minimal_doc()
        doc["skills"][0]["eff"] = ["warm(obj)"]
        with pytest.raises(LibraryFormatError, match="undeclared predicate"):
            parse_library(doc)

    def test_confidence_bounds(self):
        doc = minimal_doc()
        doc["skills"][0]["base_confidence"] = 1.5
        with pytest.raises(LibraryFormatError, match="base_confidence"):
            parse_library(doc)

    def test_unknown_sort(self):
        doc = minimal_doc()
        doc["predicates"][0]["sorts"] = ["widget"]
        with pytest.raises(LibraryFormatError, match="unknown sort"):
            parse_library(doc)

    def test_shipped_library_loads(self, household):
        assert len(household) >= 12
        assert household.get("heat-object") is not None

    def test_load_from_disk(self, tmp_path):
        path = tmp_path / "lib.json"
        path.write_text(json.dumps(minimal_doc()))
        from skillgraph.library import load_library

        assert len(load_library(path)) == 2


class TestObjectSorts:
    def test_inferred_from_facts_and_goal(self, household):
        from skillgraph.conditions import WorldState

        state = WorldState.of("at(potato,counter2)", "open(microwave)")
        goal = Condition.of("at(potato,counter1)")
        table = infer_object_sorts(household, state, goal)
        assert table == {
            "potato": "object",
            "counter2": "location",
            "counter1": "location",
            "microwave": "appliance",
        }
