"""Deterministic text-world environment: scenario files, guarded transitions,
and scripted fault injection.

Actions are plain strings matched against transition patterns with typed
placeholders, e.g. ``take {obj:object} from {loc:location}``. An action whose
guard fails observes "Nothing happens" and still consumes a step. Faults are
the only scripted surprises; everything is replayable.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace

from .conditions import Atom, Condition, WorldState, parse_atom, satisfies

FORMAT_VERSION = 1
NOTHING_HAPPENS = "Nothing happens"


class ScenarioError(ValueError):
    """Parse failure; the message names the offending path."""


class AmbiguousPattern(ScenarioError):
    pass


@dataclass(frozen=True)
class TransitionRule:
    pattern: str
    guard: Condition
    effect: Condition
    placeholders: tuple[tuple[str, str], ...]  # (name, sort) in pattern order
    tokens: tuple[str, ...]  # pattern split on spaces, placeholders as {name}

    @property
    def literal_count(self) -> int:
        return sum(1 for t in self.tokens if not t.startswith("{"))


@dataclass(frozen=True)
class FaultSpec:
    """A scripted world mutation. Exactly one trigger field is set."""

    mutation: Condition
    on_action: str | None = None
    at_step: int | None = None
    on_state: Condition | None = None
    once: bool = True

    def to_dict(self) -> dict:
        trigger: dict = {}
        if self.on_action is not None:
            trigger["on_action"] = self.on_action
        if self.at_step is not None:
            trigger["at_step"] = self.at_step
        if self.on_state is not None:
            trigger["on_state"] = self.on_state.to_strings()
        return {"trigger": trigger, "mutation": self.mutation.to_strings(), "once": self.once}


@dataclass(frozen=True)
class Scenario:
    name: str
    task: str
    objects: dict[str, str]  # name -> sort
    init: Condition
    goal: Condition
    transitions: tuple[TransitionRule, ...]
    faults: tuple[FaultSpec, ...]
    budget: int
    library_ref: str | None = None

    def initial_state(self) -> WorldState:
        return WorldState(frozenset(self.init.positives()), 0)


def _compile_pattern(pattern: str, objects: dict[str, str], path: str) -> tuple[tuple[str, ...], tuple[tuple[str, str], ...]]:
    tokens = []
    placeholders = []
    for tok in pattern.split():
        if tok.startswith("{") and tok.endswith("}"):
            inner = tok[1:-1]
            if ":" not in inner:
                raise ScenarioError(f"placeholder {tok!r} needs a sort at {path}")
            name, sort = inner.split(":", 1)
            placeholders.append((name, sort))
            tokens.append("{" + name + "}")
        else:
            tokens.append(tok)
    return tuple(tokens), tuple(placeholders)


def _match_rule(rule: TransitionRule, action_tokens: list[str], objects: dict[str, str]) -> dict[str, str] | None:
    if len(rule.tokens) != len(action_tokens):
        return None
    sorts = dict(rule.placeholders)
    bound: dict[str, str] = {}
    for pat_tok, act_tok in zip(rule.tokens, action_tokens):
        if pat_tok.startswith("{"):
            name = pat_tok[1:-1]
            if objects.get(act_tok) != sorts[name]:
                return None
            if bound.setdefault(name, act_tok) != act_tok:
                return None
        elif pat_tok != act_tok:
            return None
    return bound


def ground_template(cond: Condition, bound: dict[str, str]) -> Condition:
    atoms = []
    for atom in cond.atoms:
        args = tuple(bound.get(a, a) for a in atom.args)
        atoms.append(Atom(atom.predicate, args, atom.negated))
    return Condition(frozenset(atoms))


def ground_actions(scenario: Scenario) -> list[tuple[str, TransitionRule, dict[str, str]]]:
    """Every instantiation of every pattern over the scenario's objects."""
    out = []
    by_sort: dict[str, list[str]] = {}
    for name in sorted(scenario.objects):
        by_sort.setdefault(scenario.objects[name], []).append(name)
    for rule in scenario.transitions:
        pools = [by_sort.get(sort, []) for _, sort in rule.placeholders]
        names = [n for n, _ in rule.placeholders]
        for combo in itertools.product(*pools):
            bound = dict(zip(names, combo))
            if len(set(combo)) != len(combo):
                continue  # one object cannot fill two placeholders of one action
            text = " ".join(
                bound[t[1:-1]] if t.startswith("{") else t for t in rule.tokens
            )
            out.append((text, rule, bound))
    return out


def check_unambiguous(scenario: Scenario) -> None:
    best: dict[str, tuple[int, int, str]] = {}  # text -> (literal_count, rule id, pattern)
    for text, rule, _ in ground_actions(scenario):
        count = rule.literal_count
        if text not in best:
            best[text] = (count, id(rule), rule.pattern)
            continue
        prev_count, prev_id, prev_pattern = best[text]
        if prev_id == id(rule):
            continue
        if count == prev_count:
            raise AmbiguousPattern(
                f"action {text!r} matches both {prev_pattern!r} and {rule.pattern!r}"
            )
        if count > prev_count:
            best[text] = (count, id(rule), rule.pattern)


class SimEnvironment:
    """One environment instance per episode. Deterministic given the scenario."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self._state = scenario.initial_state()
        self._fired: set[int] = set()
        self._done = False
        self._apply_faults(action=None)

    # -- environment contract --

    def reset(self) -> WorldState:
        self._state = self.scenario.initial_state()
        self._fired = set()
        self._done = False
        self._apply_faults(action=None)
        return self._state

    @property
    def state(self) -> WorldState:
        return self._state

    @property
    def step_count(self) -> int:
        return self._state.step_count

    @property
    def budget(self) -> int:
        return self.scenario.budget

    @property
    def done(self) -> bool:
        return self._done

    def perform(self, action: str) -> tuple[str, WorldState, bool]:
        """Run one action: match, check guard, apply effect, then faults."""
        if self._done:
            return (NOTHING_HAPPENS, self._state, True)
        steps = self._state.step_count + 1
        tokens = action.split()
        matched: TransitionRule | None = None
        bound: dict[str, str] = {}
        candidates = []
        for rule in self.scenario.transitions:
            b = _match_rule(rule, tokens, self.scenario.objects)
            if b is not None:
                candidates.append((rule, b))
        if candidates:
            candidates.sort(key=lambda rb: -rb[0].literal_count)
            matched, bound = candidates[0]

        facts = set(self._state.facts)
        obs = NOTHING_HAPPENS
        if matched is not None:
            guard = ground_template(matched.guard, bound)
            if satisfies(self._state, guard):
                effect = ground_template(matched.effect, bound)
                facts -= {a.positive() for a in effect.negatives()}
                facts |= set(effect.positives())
                obs = f"You {action}."
        self._state = WorldState(frozenset(facts), steps)
        self._apply_faults(action=action)
        if self._state.step_count >= self.scenario.budget:
            self._done = True
        return (obs, self._state, self._done)

    # -- faults --

    def _apply_faults(self, action: str | None) -> None:
        for idx, fault in enumerate(self.scenario.faults):
            if fault.once and idx in self._fired:
                continue
            if not self._fault_triggered(fault, action):
                continue
            facts = set(self._state.facts)
            facts -= {a.positive() for a in fault.mutation.negatives()}
            facts |= set(fault.mutation.positives())
            self._state = WorldState(frozenset(facts), self._state.step_count)
            self._fired.add(idx)

    def _fault_triggered(self, fault: FaultSpec, action: str | None) -> bool:
        if fault.on_action is not None:
            if action is None:
                return False
            if action == fault.on_action:
                return True
            tokens, placeholders = _compile_pattern(fault.on_action, self.scenario.objects, "fault")
            probe = TransitionRule(fault.on_action, Condition(), Condition(), placeholders, tokens)
            return _match_rule(probe, action.split(), self.scenario.objects) is not None
        if fault.at_step is not None:
            return self._state.step_count >= fault.at_step
        if fault.on_state is not None:
            return satisfies(self._state, fault.on_state)
        return False


def inject(scenario: Scenario, fault: FaultSpec) -> Scenario:
    """A copy of the scenario with one more fault appended."""
    return replace(scenario, faults=scenario.faults + (fault,))


# --- strict parsing ---------------------------------------------------------

_SCENARIO_KEYS = {
    "format": True,
    "name": True,
    "task": True,
    "objects": True,
    "init": True,
    "goal": True,
    "transitions": True,
    "faults": False,
    "budget": True,
    "library": False,
}


def _parse_cond(items, path: str) -> Condition:
    if not isinstance(items, list):
        raise ScenarioError(f"expected a list of atoms at {path}")
    atoms = []
    for i, text in enumerate(items):
        try:
            atoms.append(parse_atom(text))
        except ValueError as exc:
            raise ScenarioError(f"bad atom at {path}[{i}]: {exc}") from exc
    return Condition(frozenset(atoms))


def parse_scenario(doc: dict, name_hint: str = "scenario") -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a JSON object")
    for key in doc:
        if key not in _SCENARIO_KEYS:
            raise ScenarioError(f"unknown key at $.{key}")
    for key, required in _SCENARIO_KEYS.items():
        if required and key not in doc:
            raise ScenarioError(f"missing key at $.{key}")
    if doc["format"] != FORMAT_VERSION:
        raise ScenarioError(f"unsupported format {doc['format']!r} at $.format")
    if not (isinstance(doc["budget"], int) and doc["budget"] > 0):
        raise ScenarioError("budget must be a positive integer at $.budget")

    objects = dict(doc["objects"])
    transitions = []
    for i, rec in enumerate(doc["transitions"]):
        path = f"$.transitions[{i}]"
        for key in rec:
            if key not in ("pattern", "guard", "effect"):
                raise ScenarioError(f"unknown key at {path}.{key}")
        tokens, placeholders = _compile_pattern(rec["pattern"], objects, path)
        transitions.append(
            TransitionRule(
                pattern=rec["pattern"],
                guard=_parse_cond(rec.get("guard", []), f"{path}.guard"),
                effect=_parse_cond(rec.get("effect", []), f"{path}.effect"),
                placeholders=placeholders,
                tokens=tokens,
            )
        )

    faults = []
    for i, rec in enumerate(doc.get("faults", [])):
        path = f"$.faults[{i}]"
        for key in rec:
            if key not in ("trigger", "mutation", "once"):
                raise ScenarioError(f"unknown key at {path}.{key}")
        trigger = rec.get("trigger", {})
        kinds = [k for k in ("on_action", "at_step", "on_state") if k in trigger]
        if len(kinds) != 1:
            raise ScenarioError(f"exactly one trigger kind required at {path}.trigger")
        faults.append(
            FaultSpec(
                mutation=_parse_cond(rec["mutation"], f"{path}.mutation"),
                on_action=trigger.get("on_action"),
                at_step=trigger.get("at_step"),
                on_state=_parse_cond(trigger["on_state"], f"{path}.trigger.on_state")
                if "on_state" in trigger
                else None,
                once=rec.get("once", True),
            )
        )

    scenario = Scenario(
        name=doc["name"],
        task=doc["task"],
        objects=objects,
        init=_parse_cond(doc["init"], "$.init"),
        goal=_parse_cond(doc["goal"], "$.goal"),
        transitions=tuple(transitions),
        faults=tuple(faults),
        budget=doc["budget"],
        library_ref=doc.get("library"),
    )
    if scenario.init.negatives():
        raise ScenarioError("initial facts must be positive atoms at $.init")
    check_unambiguous(scenario)
    return scenario


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"invalid JSON in {path}: {exc}") from exc
    return parse_scenario(doc)


def scenario_to_dict(s: Scenario) -> dict:
    doc = {
        "format": FORMAT_VERSION,
        "name": s.name,
        "task": s.task,
        "objects": {k: s.objects[k] for k in sorted(s.objects)},
        "init": s.init.to_strings(),
        "goal": s.goal.to_strings(),
        "transitions": [
            {"pattern": t.pattern, "guard": t.guard.to_strings(), "effect": t.effect.to_strings()}
            for t in s.transitions
        ],
        "faults": [f.to_dict() for f in s.faults],
        "budget": s.budget,
    }
    if s.library_ref is not None:
        doc["library"] = s.library_ref
    return doc


def save_scenario(s: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(s), fh, indent=2, sort_keys=True)
        fh.write("\n")
