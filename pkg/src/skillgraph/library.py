"""Skill library: predicate registry, skill schemas, binding, and strict file loading.

A library file is a JSON document with exactly two top-level keys:
``predicates`` (name, arity, per-argument sorts) and ``skills`` (schema
records). Unknown keys anywhere are rejected with a diagnostic naming the
offending path.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .conditions import Atom, Condition, is_identifier, parse_atom

SORTS = ("object", "location", "appliance", "value")


class LibraryFormatError(ValueError):
    """Malformed library document; the message names the offending path."""


class BindingError(ValueError):
    """Base class for schema binding failures."""


class MissingBinding(BindingError):
    def __init__(self, param: str):
        super().__init__(f"no binding for parameter {param!r}")
        self.param = param


class UnknownParam(BindingError):
    def __init__(self, param: str):
        super().__init__(f"binding names undeclared parameter {param!r}")
        self.param = param


class SortMismatch(BindingError):
    def __init__(self, param: str, expected: str, value: str):
        super().__init__(f"binding {param!r}={value!r} violates sort {expected!r}")
        self.param = param
        self.expected = expected
        self.value = value


@dataclass(frozen=True)
class PredicateSpec:
    name: str
    arity: int
    sorts: tuple[str, ...]


@dataclass(frozen=True)
class SkillSchema:
    """A parameterized skill: pre/effect templates, I/O slots, and an action script.

    Template atoms may reference parameter names (substituted at binding time)
    or constants. Action templates are environment command strings with
    ``{param}`` placeholders.
    """

    name: str
    params: tuple[tuple[str, str], ...] = ()
    pre_template: Condition = field(default_factory=Condition)
    eff_template: Condition = field(default_factory=Condition)
    output_slots: tuple[tuple[str, str], ...] = ()
    input_slots: tuple[tuple[str, str], ...] = ()
    base_confidence: float = 0.5
    description: str = ""
    actions: tuple[str, ...] = ()
    forbidden: Condition = field(default_factory=Condition)

    def param_sorts(self) -> dict[str, str]:
        return dict(self.params)

    def param_names(self) -> list[str]:
        return [p for p, _ in self.params]


@dataclass(frozen=True)
class SkillLibrary:
    predicates: dict[str, PredicateSpec]
    schemas: dict[str, SkillSchema]

    def get(self, name: str) -> SkillSchema | None:
        return self.schemas.get(name)

    def sorted_schemas(self) -> list[SkillSchema]:
        return [self.schemas[n] for n in sorted(self.schemas)]

    def __len__(self) -> int:
        return len(self.schemas)

    def with_schemas(self, schemas: dict[str, SkillSchema]) -> "SkillLibrary":
        return SkillLibrary(self.predicates, schemas)


def _substitute(atom: Atom, bindings: dict[str, str], params: dict[str, str]) -> Atom:
    args = []
    for a in atom.args:
        if a in params:
            args.append(bindings[a])
        else:
            args.append(a)
    return Atom(atom.predicate, tuple(args), atom.negated)


def bind_schema(schema: SkillSchema, bindings: dict[str, str]) -> tuple[Condition, Condition]:
    """Ground the schema's templates under ``bindings``.

    Every declared parameter must be bound, bindings may not name undeclared
    parameters, and values must carry the declared sort tag implicitly (sort
    agreement is checked by the caller against an object table when one is
    available; here values only need to be identifiers).
    """
    params = schema.param_sorts()
    for key in sorted(bindings):
        if key not in params:
            raise UnknownParam(key)
    for name in schema.param_names():
        if name not in bindings:
            raise MissingBinding(name)
        if not is_identifier(bindings[name]):
            raise SortMismatch(name, params[name], bindings[name])
    pre = Condition(frozenset(_substitute(a, bindings, params) for a in schema.pre_template.atoms))
    eff = Condition(frozenset(_substitute(a, bindings, params) for a in schema.eff_template.atoms))
    return pre, eff


def ground_condition(schema: SkillSchema, cond: Condition, bindings: dict[str, str]) -> Condition:
    """Substitute parameter bindings into any template condition of the schema."""
    params = schema.param_sorts()
    return Condition(frozenset(_substitute(a, bindings, params) for a in cond.atoms))


def check_binding_sorts(schema: SkillSchema, bindings: dict[str, str], object_sorts: dict[str, str]) -> None:
    """Raise SortMismatch when a bound object's known sort disagrees with the parameter's."""
    for param, sort in schema.params:
        value = bindings.get(param)
        if value is None:
            continue
        known = object_sorts.get(value)
        if known is not None and known != sort:
            raise SortMismatch(param, sort, value)


def ground_actions(schema: SkillSchema, bindings: dict[str, str]) -> list[str]:
    return [a.format(**bindings) for a in schema.actions]


def infer_object_sorts(library: SkillLibrary, *conditions) -> dict[str, str]:
    """Derive an object -> sort table from grounded atoms via the predicate registry.

    Accepts WorldState facts or Conditions; first sighting wins on conflict.
    """
    table: dict[str, str] = {}
    for source in conditions:
        atoms = source.facts if hasattr(source, "facts") else source.atoms
        for atom in sorted(atoms, key=str):
            spec = library.predicates.get(atom.predicate)
            if spec is None or len(atom.args) != spec.arity:
                continue
            for value, sort in zip(atom.args, spec.sorts):
                table.setdefault(value, sort)
    return table


# --- strict JSON loading -------------------------------------------------

def _require_keys(obj: dict, allowed: dict[str, bool], path: str) -> None:
    for key in obj:
        if key not in allowed:
            raise LibraryFormatError(f"unknown key at {path}.{key}")
    for key, required in allowed.items():
        if required and key not in obj:
            raise LibraryFormatError(f"missing key at {path}.{key}")


def _parse_condition(items, path: str) -> Condition:
    if not isinstance(items, list):
        raise LibraryFormatError(f"expected a list of atoms at {path}")
    atoms = []
    for i, text in enumerate(items):
        try:
            atoms.append(parse_atom(text))
        except ValueError as exc:
            raise LibraryFormatError(f"bad atom at {path}[{i}]: {exc}") from exc
    return Condition(frozenset(atoms))


def _parse_slots(items, path: str) -> tuple[tuple[str, str], ...]:
    out = []
    seen = set()
    for i, pair in enumerate(items):
        if not (isinstance(pair, list) and len(pair) == 2):
            raise LibraryFormatError(f"expected [name, sort] at {path}[{i}]")
        name, sort = pair
        if sort not in SORTS:
            raise LibraryFormatError(f"unknown sort {sort!r} at {path}[{i}]")
        if name in seen:
            raise LibraryFormatError(f"duplicate slot name {name!r} at {path}[{i}]")
        seen.add(name)
        out.append((name, sort))
    return tuple(out)


def parse_library(doc: dict) -> SkillLibrary:
    if not isinstance(doc, dict):
        raise LibraryFormatError("library document must be a JSON object")
    _require_keys(doc, {"predicates": True, "skills": True}, "$")

    predicates: dict[str, PredicateSpec] = {}
    for i, rec in enumerate(doc["predicates"]):
        path = f"$.predicates[{i}]"
        _require_keys(rec, {"name": True, "arity": True, "sorts": True}, path)
        name = rec["name"]
        if not is_identifier(name):
            raise LibraryFormatError(f"bad predicate name at {path}.name")
        if name in predicates:
            raise LibraryFormatError(f"duplicate predicate at {path}.name")
        sorts = tuple(rec["sorts"])
        if rec["arity"] != len(sorts):
            raise LibraryFormatError(f"arity/sorts mismatch at {path}.arity")
        for s in sorts:
            if s not in SORTS:
                raise LibraryFormatError(f"unknown sort {s!r} at {path}.sorts")
        predicates[name] = PredicateSpec(name, rec["arity"], sorts)

    def check_atoms(cond: Condition, path: str) -> None:
        for atom in cond.sorted_atoms():
            spec = predicates.get(atom.predicate)
            if spec is None:
                raise LibraryFormatError(f"undeclared predicate {atom.predicate!r} at {path}")
            if len(atom.args) != spec.arity:
                raise LibraryFormatError(
                    f"arity mismatch for {atom.predicate!r} at {path}: "
                    f"got {len(atom.args)}, declared {spec.arity}"
                )

    schemas: dict[str, SkillSchema] = {}
    for i, rec in enumerate(doc["skills"]):
        path = f"$.skills[{i}]"
        _require_keys(
            rec,
            {
                "name": True,
                "description": True,
                "params": True,
                "pre": True,
                "eff": True,
                "base_confidence": True,
                "actions": False,
                "input_slots": False,
                "output_slots": False,
                "forbidden": False,
            },
            path,
        )
        name = rec["name"]
        if not is_identifier(name):
            raise LibraryFormatError(f"bad skill name at {path}.name")
        if name in schemas:
            raise LibraryFormatError(f"duplicate skill at {path}.name")
        params = _parse_slots(rec["params"], f"{path}.params")
        pre = _parse_condition(rec["pre"], f"{path}.pre")
        eff = _parse_condition(rec["eff"], f"{path}.eff")
        check_atoms(pre, f"{path}.pre")
        check_atoms(eff, f"{path}.eff")
        conf = rec["base_confidence"]
        if not (isinstance(conf, (int, float)) and 0.0 <= conf <= 1.0):
            raise LibraryFormatError(f"base_confidence out of [0,1] at {path}.base_confidence")
        forbidden = _parse_condition(rec.get("forbidden", []), f"{path}.forbidden")
        check_atoms(forbidden, f"{path}.forbidden")
        schemas[name] = SkillSchema(
            name=name,
            params=params,
            pre_template=pre,
            eff_template=eff,
            output_slots=_parse_slots(rec.get("output_slots", []), f"{path}.output_slots"),
            input_slots=_parse_slots(rec.get("input_slots", []), f"{path}.input_slots"),
            base_confidence=float(conf),
            description=rec["description"],
            actions=tuple(rec.get("actions", [])),
            forbidden=forbidden,
        )
    return SkillLibrary(predicates, schemas)


def load_library(path) -> SkillLibrary:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise LibraryFormatError(f"invalid JSON in {path}: {exc}") from exc
    return parse_library(doc)
