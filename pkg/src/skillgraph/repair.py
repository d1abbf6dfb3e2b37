"""The local repair algebra: five typed operators over the graph, ranked by
failure type, with bounded patches confined to a hop neighborhood of the
failed node.

Operators return a RepairPatch or None (inapplicable is a value, not an
error). Patches never remove hard edges and never touch verified nodes
outside the affected set; check_patch_validity re-checks all of that before
anything is applied.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

from .binding import covering_binding, producer_for
from .conditions import Atom, Condition, WorldState, satisfies, unsatisfied_atoms
from .executor import FailureEvent, FailureType
from .graph import (
    SINK,
    SOURCE,
    Edge,
    NodeStatus,
    SkillGraph,
    SkillNode,
    VerifierSpec,
    find_cycle,
    neighborhood,
    validate_graph,
)
from .library import SkillLibrary, bind_schema, ground_condition, infer_object_sorts

DEFAULT_H = 2
DEFAULT_L_MAX = 3
DEFAULT_E_MAX = 5

OPERATOR_RANKING: dict[FailureType, tuple[str, ...]] = {
    FailureType.PRECONDITION: ("insert_prereq", "rebind", "bypass", "rewire", "substitute"),
    FailureType.EXECUTION: ("rebind", "substitute", "bypass", "rewire"),
    FailureType.POSTCONDITION: ("substitute", "rewire", "bypass", "rebind"),
    FailureType.TIMEOUT: ("substitute", "bypass"),
}


def rank_operators(failure_type: FailureType) -> list[str]:
    try:
        return list(OPERATOR_RANKING[failure_type])
    except KeyError:
        raise ValueError(f"unknown failure type {failure_type!r}") from None


@dataclass(frozen=True)
class RepairPatch:
    operator: str
    target: str
    added_nodes: tuple[SkillNode, ...] = ()
    removed_nodes: frozenset[str] = frozenset()
    updated_nodes: tuple[SkillNode, ...] = ()  # replacement values for existing ids
    edge_adds: tuple[Edge, ...] = ()
    edge_removes: tuple[Edge, ...] = ()
    bypass_target: str | None = None
    rebound: tuple[str, tuple[tuple[str, str], ...]] | None = None

    def node_delta(self) -> int:
        return (
            len(self.added_nodes)
            + len(self.removed_nodes)
            + len(self.updated_nodes)
            + (1 if self.bypass_target else 0)
        )

    def countable_edge_changes(self) -> list[Edge]:
        """Edge changes that count toward the patch bound; source/sink bracket
        plumbing is structural and exempt."""
        return [
            e
            for e in (*self.edge_adds, *self.edge_removes)
            if e.src not in (SOURCE, SINK) and e.dst not in (SOURCE, SINK)
        ]

    def touched_nodes(self) -> set[str]:
        out = {n.id for n in self.added_nodes}
        out |= set(self.removed_nodes)
        out |= {n.id for n in self.updated_nodes}
        if self.bypass_target:
            out.add(self.bypass_target)
        for e in self.countable_edge_changes():
            out.add(e.src)
            out.add(e.dst)
        return out

    def to_dict(self) -> dict:
        return {
            "operator": self.operator,
            "target": self.target,
            "added": sorted(n.id for n in self.added_nodes),
            "removed": sorted(self.removed_nodes),
            "updated": sorted(n.id for n in self.updated_nodes),
            "edge_adds": [list(e.triple()) for e in sorted(self.edge_adds)],
            "edge_removes": [list(e.triple()) for e in sorted(self.edge_removes)],
            "bypass": self.bypass_target,
            "rebound": None
            if self.rebound is None
            else {"node": self.rebound[0], "bindings": dict(self.rebound[1])},
        }


def apply_patch(graph: SkillGraph, patch: RepairPatch) -> SkillGraph:
    g = graph
    if patch.removed_nodes:
        g = g.without_nodes(patch.removed_nodes)
    for node in patch.updated_nodes:
        g = g.with_node(node)
    for node in patch.added_nodes:
        g = g.with_node(node)
    g = g.with_edges(add=patch.edge_adds, remove=patch.edge_removes)
    if patch.bypass_target and patch.bypass_target in g.nodes:
        g = g.with_status(patch.bypass_target, NodeStatus.BYPASSED)
    # bracket normalization: keep every skill node on a source->sink path
    adds = []
    has_parent = {e.dst for e in g.edges}
    has_child = {e.src for e in g.edges}
    for node_id in sorted(g.nodes):
        if node_id not in has_parent:
            adds.append(Edge(SOURCE, "order", node_id))
        if node_id not in has_child:
            adds.append(Edge(node_id, "order", SINK))
    if adds:
        g = g.with_edges(add=adds)
    return g


def missing_preconditions(node: SkillNode, state: WorldState) -> frozenset[Atom]:
    """The precondition literals the state fails to satisfy."""
    return unsatisfied_atoms(state, node.pre)


def downstream_requirements(graph: SkillGraph, node_id: str) -> Condition:
    """Effect atoms of the node consumed via outgoing state edges, plus goal
    atoms only this node produces."""
    node = graph.node(node_id)
    required: set[Atom] = set()
    for edge in graph.out_edges(node_id):
        if edge.kind != "state" or edge.dst not in graph.nodes:
            continue
        consumer = graph.node(edge.dst)
        required |= set(node.eff.positives()) & set(consumer.pre.positives())
    for atom in graph.goal.positives():
        if atom not in node.eff.positives():
            continue
        if any(
            atom in graph.node(other).eff.positives()
            for other in graph.nodes
            if other != node_id
        ):
            continue
        required.add(atom)
    return Condition(frozenset(required))


def _fresh_node_ids(graph: SkillGraph, count: int) -> list[str]:
    out: list[str] = []
    n = 1
    while len(out) < count:
        candidate = f"patch_{n}"
        if candidate not in graph.nodes and candidate not in out:
            out.append(candidate)
        n += 1
    return out


def op_rebind(graph: SkillGraph, event: FailureEvent, state: WorldState, library: SkillLibrary) -> RepairPatch | None:
    """Alternative argument bindings for the failed node such that its new
    precondition holds now; first lexicographic satisfying assignment wins."""
    if event.node_id not in graph.nodes:
        return None
    node = graph.node(event.node_id)
    schema = library.get(node.schema_name)
    if schema is None:
        return None
    object_sorts = infer_object_sorts(library, state, graph.goal)
    pools = []
    for _, sort in schema.params:
        candidates = sorted(o for o, s in object_sorts.items() if s == sort)
        if not candidates:
            return None
        pools.append(candidates)
    current = tuple(node.binding_map().get(p) for p, _ in schema.params)

    import itertools

    for combo in itertools.product(*pools):
        if combo == current:
            continue
        bindings = {p: v for (p, _), v in zip(schema.params, combo)}
        pre, eff = bind_schema(schema, bindings)
        if not satisfies(state, pre):
            continue
        updated = replace(
            node,
            bindings=tuple(sorted(bindings.items())),
            pre=pre,
            eff=eff,
            verifier=VerifierSpec("effects", ground_condition(schema, schema.forbidden, bindings)),
            status=NodeStatus.PENDING,
        )
        return RepairPatch(
            operator="rebind",
            target=node.id,
            updated_nodes=(updated,),
            rebound=(node.id, updated.bindings),
        )
    return None


def op_insert_prereq(
    graph: SkillGraph,
    event: FailureEvent,
    state: WorldState,
    library: SkillLibrary,
    l_max: int = DEFAULT_L_MAX,
) -> RepairPatch | None:
    """Insert producer nodes that establish the failed node's missing
    preconditions, each wired by a state edge into the failed node."""
    if event.failure_type != FailureType.PRECONDITION:
        return None
    if event.node_id not in graph.nodes:
        return None
    node = graph.node(event.node_id)
    missing = sorted(missing_preconditions(node, state), key=str)
    if not missing:
        return None
    object_sorts = infer_object_sorts(library, state, graph.goal)
    chosen: list[tuple[str, dict[str, str]]] = []
    seen: set[tuple[str, tuple[tuple[str, str], ...]]] = set()
    for literal in missing:
        hit = producer_for(literal, library.sorted_schemas(), object_sorts, state)
        if hit is None:
            return None
        schema, bindings = hit
        key = (schema.name, tuple(sorted(bindings.items())))
        if key not in seen:
            seen.add(key)
            chosen.append((schema.name, bindings))
    if len(chosen) > l_max:
        return None
    ids = _fresh_node_ids(graph, len(chosen))
    added = []
    edges = []
    for node_id, (schema_name, bindings) in zip(ids, chosen):
        schema = library.get(schema_name)
        pre, eff = bind_schema(schema, bindings)
        added.append(
            SkillNode(
                id=node_id,
                schema_name=schema_name,
                bindings=tuple(sorted(bindings.items())),
                pre=pre,
                eff=eff,
                verifier=VerifierSpec("effects", ground_condition(schema, schema.forbidden, bindings)),
                status=NodeStatus.PENDING,
                confidence=schema.base_confidence,
                repair_budget=node.repair_budget,
            )
        )
        edges.append(Edge(node_id, "state", node.id))
    return RepairPatch(
        operator="insert_prereq",
        target=node.id,
        added_nodes=tuple(added),
        edge_adds=tuple(edges),
    )


def op_substitute(
    graph: SkillGraph,
    event: FailureEvent,
    state: WorldState,
    library: SkillLibrary,
) -> RepairPatch | None:
    """Swap in a schema whose bindable effects cover the node's downstream
    requirements, provided its precondition is satisfied or insertable."""
    if event.node_id not in graph.nodes:
        return None
    node = graph.node(event.node_id)
    required = downstream_requirements(graph, node.id)
    object_sorts = infer_object_sorts(library, state, graph.goal)
    ranked = sorted(library.sorted_schemas(), key=lambda s: (-s.base_confidence, s.name))
    for schema in ranked:
        bindings = covering_binding(schema, required, object_sorts, state)
        if bindings is None:
            continue
        key = (schema.name, tuple(sorted(bindings.items())))
        if key == (node.schema_name, node.bindings):
            continue  # would be a no-op
        pre, eff = bind_schema(schema, bindings)
        open_literals = unsatisfied_atoms(state, pre)
        insertable = all(
            producer_for(lit, library.sorted_schemas(), object_sorts, state) is not None
            for lit in sorted(open_literals, key=str)
        )
        if open_literals and not insertable:
            continue
        updated = SkillNode(
            id=node.id,
            schema_name=schema.name,
            bindings=tuple(sorted(bindings.items())),
            pre=pre,
            eff=eff,
            verifier=VerifierSpec("effects", ground_condition(schema, schema.forbidden, bindings)),
            status=NodeStatus.PENDING,
            confidence=schema.base_confidence,
            repair_budget=node.repair_budget,
            repair_count=node.repair_count,
        )
        return RepairPatch(operator="substitute", target=node.id, updated_nodes=(updated,))
    return None


def op_rewire(
    graph: SkillGraph,
    event: FailureEvent,
    state: WorldState,
    h: int = DEFAULT_H,
    e_max: int = DEFAULT_E_MAX,
) -> RepairPatch | None:
    """Reorder soft precedence inside the neighborhood: pull forward pending
    helpers whose effects establish the failed node's missing preconditions.
    Hard edges are never touched."""
    if event.node_id not in graph.nodes:
        return None
    node = graph.node(event.node_id)
    missing = missing_preconditions(node, state)
    if not missing:
        return None
    hood = neighborhood(graph, node.id, h) - {node.id}
    adds: list[Edge] = []
    removes: list[Edge] = []

    def establishes(candidate: SkillNode) -> bool:
        for literal in missing:
            if literal.negated:
                if any(a.negated and a.positive() == literal.positive() for a in candidate.eff.atoms):
                    return True
            elif literal in candidate.eff.positives():
                return True
        return False

    working = set(graph.edges)
    for candidate_id in sorted(hood):
        if len(adds) + len(removes) >= e_max:
            break
        candidate = graph.node(candidate_id)
        if candidate.status != NodeStatus.PENDING:
            continue
        if not establishes(candidate):
            continue
        forward = Edge(candidate_id, "order", node.id)
        if any(e.triple() == forward.triple() for e in working):
            continue
        trial_removes = [
            e
            for e in working
            if e.kind == "order" and e.src == node.id and e.dst == candidate_id
        ]
        trial = (working - set(trial_removes)) | {forward}
        probe = replace(graph, edges=frozenset(trial))
        if find_cycle(probe) is not None:
            continue
        working = trial
        adds.append(forward)
        removes.extend(trial_removes)
    if not adds and not removes:
        return None
    return RepairPatch(
        operator="rewire",
        target=node.id,
        edge_adds=tuple(adds),
        edge_removes=tuple(removes),
    )


def op_bypass(graph: SkillGraph, event: FailureEvent, state: WorldState) -> RepairPatch | None:
    """Skip the node when the state already satisfies everything downstream
    needs from it."""
    if event.node_id not in graph.nodes:
        return None
    required = downstream_requirements(graph, event.node_id)
    if not satisfies(state, required):
        return None
    return RepairPatch(operator="bypass", target=event.node_id, bypass_target=event.node_id)


def check_patch_validity(
    graph: SkillGraph,
    patch: RepairPatch,
    library: SkillLibrary,
    state: WorldState,
    l_max: int = DEFAULT_L_MAX,
    e_max: int = DEFAULT_E_MAX,
    h: int = DEFAULT_H,
) -> list[str]:
    """All six validity conditions plus the neighborhood scope bound;
    an empty list means the patch may be applied."""
    violations: list[str] = []
    patched = apply_patch(graph, patch)

    if find_cycle(patched) is not None:
        violations.append("Acyclicity")

    for node in (*patch.added_nodes, *patch.updated_nodes):
        schema = library.get(node.schema_name)
        if schema is None:
            violations.append(f"LibraryMembership:{node.id}")
            continue
        try:
            pre, eff = bind_schema(schema, node.binding_map())
        except ValueError:
            violations.append(f"TypeCheck:{node.id}")
            continue
        if pre != node.pre or eff != node.eff:
            violations.append(f"TypeCheck:{node.id}")
        if node.verifier is None:
            violations.append(f"MissingVerifier:{node.id}")

    affected = {n.id for n in patch.added_nodes} | {n.id for n in patch.updated_nodes}
    affected |= set(patch.removed_nodes) | {patch.target}
    if patch.bypass_target:
        affected.add(patch.bypass_target)
    for node_id in sorted(graph.nodes):
        before = graph.node(node_id)
        if before.status != NodeStatus.VERIFIED or node_id in affected:
            continue
        if node_id not in patched.nodes:
            violations.append(f"VerifiedAncestorChanged:{node_id}")
            continue
        after = patched.node(node_id)
        if after.status != before.status or after.bindings != before.bindings:
            violations.append(f"VerifiedAncestorChanged:{node_id}")
    for node_id in sorted(patch.removed_nodes):
        if node_id in graph.nodes and graph.node(node_id).status == NodeStatus.VERIFIED:
            violations.append(f"VerifiedAncestorChanged:{node_id}")

    if patch.node_delta() > l_max or len(patch.countable_edge_changes()) > e_max:
        violations.append("PatchBound")

    # scope is fixed before repairing: pre-existing nodes the patch touches
    # must already lie within the target's neighborhood; freshly added nodes
    # attach inside it by construction
    if patch.target in graph.nodes:
        scope = neighborhood(graph, patch.target, h)
        out_of_scope = sorted(
            n for n in patch.touched_nodes() if n in graph.nodes and n not in scope
        )
        if out_of_scope:
            violations.append("PatchScope:" + ",".join(out_of_scope))
    return violations


class HttpRepairAdvisor:
    """Optional wire-backed operator recommender built on the repair prompt.

    Failures of any kind (transport, parse, unknown operator) silently fall
    back to the fixed ranking; the advisor can only reorder, never widen the
    operator set.
    """

    OPERATOR_NAMES = {
        "REBIND": "rebind",
        "INSERT_PREREQ": "insert_prereq",
        "SUBSTITUTE": "substitute",
        "REWIRE": "rewire",
        "BYPASS": "bypass",
    }

    def __init__(self, endpoint: str, transport=None, timeout: float = 30.0):
        self.endpoint = endpoint
        self.timeout = timeout
        self._transport = transport or self._post

    def _post(self, payload: dict) -> dict:
        import requests

        resp = requests.post(self.endpoint, json=payload, timeout=self.timeout)
        resp.raise_for_status()
        return resp.json()

    def recommend(self, graph: SkillGraph, event: FailureEvent, state: WorldState) -> str | None:
        from .prompts import REPAIR_PROMPT

        node = graph.nodes.get(event.node_id)
        remaining = [n for n in sorted(graph.nodes) if graph.nodes[n].status == NodeStatus.PENDING]
        prompt = REPAIR_PROMPT.format(
            action_grammar="",
            contrastive_guidance="",
            task="",
            overall_procedure=", ".join(sorted(graph.nodes)),
            step_index=event.node_id,
            failed_step_text="" if node is None else f"{node.schema_name} {dict(node.bindings)}",
            failure_type=event.failure_type.value,
            error_message=str(event.message),
            state_summary=", ".join(state.to_strings()),
            remaining_steps=", ".join(remaining),
            repair_op_hint=rank_operators(event.failure_type)[0].upper(),
        )
        payload = {
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0.0,
        }
        try:
            body = self._transport(payload)
            content = body.get("content")
            if content is None:
                content = body["choices"][0]["message"]["content"]
            marker = content.split("<Repair_Strategy>")[1].split("</Repair_Strategy>")[0]
            return self.OPERATOR_NAMES.get(marker.strip().upper())
        except Exception:
            return None


@dataclass
class RepairOutcome:
    graph: SkillGraph
    ok: bool
    patch: RepairPatch | None = None
    attempts: list[dict] = field(default_factory=list)

    def __iter__(self):
        return iter((self.graph, self.ok))


def local_repair(
    graph: SkillGraph,
    event: FailureEvent,
    state: WorldState,
    library: SkillLibrary,
    r_max: int = 2,
    h: int = DEFAULT_H,
    l_max: int = DEFAULT_L_MAX,
    e_max: int = DEFAULT_E_MAX,
    advisor: HttpRepairAdvisor | None = None,
) -> RepairOutcome:
    """Try ranked operators; apply the first whose patch is valid and leaves a
    valid graph. Refuses once the node's repair count reaches the budget."""
    if event.node_id not in graph.nodes:
        return RepairOutcome(graph, False)
    node = graph.node(event.node_id)
    if node.repair_count >= r_max:
        return RepairOutcome(graph, False, attempts=[{"refused": "repair budget exhausted"}])

    ranking = rank_operators(event.failure_type)
    if advisor is not None:
        hint = advisor.recommend(graph, event, state)
        if hint in ranking:
            ranking = [hint] + [op for op in ranking if op != hint]

    outcome = RepairOutcome(graph, False)
    for operator in ranking:
        if operator == "rebind":
            patch = op_rebind(graph, event, state, library)
        elif operator == "insert_prereq":
            patch = op_insert_prereq(graph, event, state, library, l_max)
        elif operator == "substitute":
            patch = op_substitute(graph, event, state, library)
        elif operator == "rewire":
            patch = op_rewire(graph, event, state, h, e_max)
        else:
            patch = op_bypass(graph, event, state)
        if patch is None:
            outcome.attempts.append({"operator": operator, "result": "inapplicable"})
            continue
        violations = check_patch_validity(graph, patch, library, state, l_max, e_max, h)
        if violations:
            outcome.attempts.append(
                {"operator": operator, "result": "invalid", "violations": violations}
            )
            continue
        patched = apply_patch(graph, patch)
        structural = [
            v
            for v in validate_graph(patched, library, state)
            if v.kind in ("Cycle", "SinkUnreachable", "GoalIncomplete")
        ]
        if structural:
            outcome.attempts.append(
                {
                    "operator": operator,
                    "result": "invalid",
                    "violations": [str(v) for v in structural],
                }
            )
            continue
        if event.node_id in patched.nodes:
            bumped = replace(
                patched.node(event.node_id), repair_count=node.repair_count + 1
            )
            patched = patched.with_node(bumped)
        outcome.attempts.append({"operator": operator, "result": "applied"})
        outcome.graph = patched
        outcome.ok = True
        outcome.patch = patch
        return outcome
    return outcome
