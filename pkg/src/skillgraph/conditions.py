"""Grounded condition language: atoms, conjunctive conditions, and world states.

Closed-world semantics throughout: an atom is false unless present in the
state's fact set. All types are immutable values.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

IDENTIFIER_RE = re.compile(r"^[a-z][a-z0-9_-]*$")


class ConditionError(ValueError):
    """Raised for malformed atoms or contradictory conditions."""


def is_identifier(text: str) -> bool:
    return bool(IDENTIFIER_RE.match(text))


@dataclass(frozen=True, order=True)
class Atom:
    """A grounded, optionally negated predicate over identifier arguments."""

    predicate: str
    args: tuple[str, ...] = ()
    negated: bool = False

    def __post_init__(self):
        if not is_identifier(self.predicate):
            raise ConditionError(f"bad predicate identifier: {self.predicate!r}")
        for a in self.args:
            if not is_identifier(a):
                raise ConditionError(f"bad argument identifier: {a!r} in {self.predicate}")

    def negate(self) -> "Atom":
        return Atom(self.predicate, self.args, not self.negated)

    def positive(self) -> "Atom":
        return Atom(self.predicate, self.args, False)

    def __str__(self) -> str:
        body = f"{self.predicate}({','.join(self.args)})"
        return f"!{body}" if self.negated else body


def parse_atom(text: str) -> Atom:
    """Parse the canonical text form, e.g. ``at(potato,counter2)`` or ``!open(mw)``.

    Zero-arity atoms may be written ``pred`` or ``pred()``.
    """
    raw = text.strip()
    negated = raw.startswith("!")
    if negated:
        raw = raw[1:].strip()
    m = re.match(r"^([a-z][a-z0-9_-]*)\s*(?:\(\s*([^)]*)\s*\))?$", raw)
    if not m:
        raise ConditionError(f"unparseable atom: {text!r}")
    predicate, argtext = m.group(1), m.group(2)
    args: tuple[str, ...] = ()
    if argtext:
        args = tuple(a.strip() for a in argtext.split(",") if a.strip())
    return Atom(predicate, args, negated)


@dataclass(frozen=True)
class Condition:
    """A conjunction of grounded atoms. The empty condition is always satisfied."""

    atoms: frozenset[Atom] = field(default_factory=frozenset)

    def __post_init__(self):
        positives = {a.positive() for a in self.atoms if not a.negated}
        negatives = {a.positive() for a in self.atoms if a.negated}
        clash = positives & negatives
        if clash:
            names = ", ".join(sorted(str(a) for a in clash))
            raise ConditionError(f"condition asserts and denies the same atom(s): {names}")

    @classmethod
    def of(cls, *atoms: Atom | str) -> "Condition":
        parsed = [a if isinstance(a, Atom) else parse_atom(a) for a in atoms]
        return cls(frozenset(parsed))

    def positives(self) -> frozenset[Atom]:
        return frozenset(a for a in self.atoms if not a.negated)

    def negatives(self) -> frozenset[Atom]:
        return frozenset(a.positive() for a in self.atoms if a.negated)

    def is_empty(self) -> bool:
        return not self.atoms

    def sorted_atoms(self) -> list[Atom]:
        return sorted(self.atoms, key=str)

    def to_strings(self) -> list[str]:
        return [str(a) for a in self.sorted_atoms()]

    @classmethod
    def from_strings(cls, items) -> "Condition":
        return cls.of(*items)

    def __iter__(self):
        return iter(self.sorted_atoms())

    def __len__(self) -> int:
        return len(self.atoms)

    def __str__(self) -> str:
        return "{" + ", ".join(self.to_strings()) + "}"


EMPTY_CONDITION = Condition()


@dataclass(frozen=True)
class WorldState:
    """A set of grounded positive facts plus the episode step counter."""

    facts: frozenset[Atom] = field(default_factory=frozenset)
    step_count: int = 0

    def __post_init__(self):
        for a in self.facts:
            if a.negated:
                raise ConditionError(f"world state may not contain negated facts: {a}")
        if self.step_count < 0:
            raise ConditionError("step_count must be non-negative")

    @classmethod
    def of(cls, *atoms: Atom | str, step_count: int = 0) -> "WorldState":
        parsed = frozenset(a if isinstance(a, Atom) else parse_atom(a) for a in atoms)
        return cls(parsed, step_count)

    def with_step(self, step_count: int) -> "WorldState":
        return WorldState(self.facts, step_count)

    def to_strings(self) -> list[str]:
        return sorted(str(a) for a in self.facts)


def satisfies(state: WorldState, cond: Condition) -> bool:
    """Closed-world entailment: every positive atom present, no negated atom present."""
    for atom in cond.atoms:
        if atom.negated:
            if atom.positive() in state.facts:
                return False
        elif atom not in state.facts:
            return False
    return True


def unsatisfied_atoms(state: WorldState, cond: Condition) -> frozenset[Atom]:
    """The literals of ``cond`` that do not hold in ``state``."""
    out = set()
    for atom in cond.atoms:
        if atom.negated:
            if atom.positive() in state.facts:
                out.add(atom)
        elif atom not in state.facts:
            out.add(atom)
    return frozenset(out)


def apply_effects(state: WorldState, eff: Condition) -> WorldState:
    """Add positive effect atoms, remove negated ones. Step count is unchanged."""
    facts = set(state.facts)
    facts -= {a.positive() for a in eff.atoms if a.negated}
    facts |= {a for a in eff.atoms if not a.negated}
    return WorldState(frozenset(facts), state.step_count)
