"""Deterministic binding search shared by the planner and the repair operators.

Unification is first-order-free: template arguments are either declared
parameters or constants. Free parameters are completed greedily against a
sorted object table, preferring bindings whose ground precondition is closest
to satisfied in the current state; ties fall to the lexicographically first
assignment.
"""
from __future__ import annotations

import itertools

from .conditions import Atom, Condition, WorldState
from .library import SkillSchema, bind_schema


def unify_atom(template: Atom, target: Atom, params: dict[str, str]) -> dict[str, str] | None:
    """Match a template atom against a grounded one; returns partial bindings."""
    if template.negated != target.negated:
        return None
    if template.predicate != target.predicate or len(template.args) != len(target.args):
        return None
    bound: dict[str, str] = {}
    for t_arg, g_arg in zip(template.args, target.args):
        if t_arg in params:
            if bound.setdefault(t_arg, g_arg) != g_arg:
                return None
        elif t_arg != g_arg:
            return None
    return bound


def _pre_score(schema: SkillSchema, bindings: dict[str, str], state: WorldState) -> int:
    pre, _ = bind_schema(schema, bindings)
    score = 0
    for atom in pre.atoms:
        if atom.negated:
            if atom.positive() not in state.facts:
                score += 1
        elif atom in state.facts:
            score += 1
    return score


def complete_binding(
    schema: SkillSchema,
    partial: dict[str, str],
    object_sorts: dict[str, str],
    state: WorldState,
) -> dict[str, str] | None:
    """Extend a partial binding over all parameters, or None when some sort
    has no candidate objects. Deterministic: best precondition score, then
    lexicographic assignment order."""
    free = [(p, s) for p, s in schema.params if p not in partial]
    pools = []
    for _, sort in free:
        candidates = sorted(o for o, s in object_sorts.items() if s == sort)
        if not candidates:
            return None
        pools.append(candidates)
    if not free:
        return dict(partial)
    best: dict[str, str] | None = None
    best_score = -1
    for combo in itertools.product(*pools):
        bindings = dict(partial)
        bindings.update({p: v for (p, _), v in zip(free, combo)})
        score = _pre_score(schema, bindings, state)
        if score > best_score:
            best, best_score = bindings, score
    return best


def producer_for(
    literal: Atom,
    schemas: list[SkillSchema],
    object_sorts: dict[str, str],
    state: WorldState,
) -> tuple[SkillSchema, dict[str, str]] | None:
    """The preferred library skill whose effect template can produce ``literal``.

    Preference: highest base confidence, then lexicographic schema name.
    """
    ranked = sorted(schemas, key=lambda s: (-s.base_confidence, s.name))
    for schema in ranked:
        params = schema.param_sorts()
        for template in sorted(schema.eff_template.atoms, key=str):
            partial = unify_atom(template, literal, params)
            if partial is None:
                continue
            bindings = complete_binding(schema, partial, object_sorts, state)
            if bindings is not None:
                return schema, bindings
    return None


def covering_binding(
    schema: SkillSchema,
    required: Condition,
    object_sorts: dict[str, str],
    state: WorldState,
) -> dict[str, str] | None:
    """A binding under which the schema's ground effects cover every atom of
    ``required``; None when no consistent assignment exists."""
    params = schema.param_sorts()
    partial: dict[str, str] = {}
    for literal in required.sorted_atoms():
        hit = None
        for template in sorted(schema.eff_template.atoms, key=str):
            candidate = unify_atom(template, literal, params)
            if candidate is None:
                continue
            merged = dict(partial)
            ok = True
            for key, value in candidate.items():
                if merged.setdefault(key, value) != value:
                    ok = False
                    break
            if ok:
                hit = merged
                break
        if hit is None:
            return None
        partial = hit
    bindings = complete_binding(schema, partial, object_sorts, state)
    if bindings is None:
        return None
    _, eff = bind_schema(schema, bindings)
    if not set(required.atoms) <= set(eff.atoms):
        return None
    return bindings
