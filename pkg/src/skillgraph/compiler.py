"""Graph compilation: planner proposals, binding validation, typed edge
inference, cycle resolution, structural filtering, and final validation.

The default planner is a deterministic backward-chaining proposer over the
candidate skills. A wire-backed planner speaking a chat-completion endpoint
can be swapped in; its strict response layout is documented on HttpPlanner.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

from .binding import producer_for
from .conditions import Condition, WorldState
from .graph import (
    SINK,
    SOURCE,
    Edge,
    NodeStatus,
    SkillGraph,
    SkillNode,
    VerifierSpec,
    find_cycle,
    validate_graph,
)
from .library import (
    SkillLibrary,
    SkillSchema,
    bind_schema,
    check_binding_sorts,
    ground_condition,
    infer_object_sorts,
)
from .memory import MemoryRecord
from .prompts import PLANNER_PROMPT

DEFAULT_PRECEDENCE_SUPPORT = 2


class CompileError(ValueError):
    """Compilation failed; the message is the diagnostic the caller logs
    before falling back."""


class ProviderRefusal(RuntimeError):
    pass


class ProviderMalformedOutput(RuntimeError):
    pass


class UnknownSchema(ValueError):
    def __init__(self, name: str):
        super().__init__(f"proposal names unknown skill {name!r}")
        self.schema_name = name


class ProposalInvalid(ValueError):
    pass


class HardCycle(ValueError):
    pass


@dataclass(frozen=True)
class NodeProposal:
    schema_name: str
    bindings: tuple[tuple[str, str], ...]
    rationale: str = ""
    proposed_order_index: int = 0

    def binding_map(self) -> dict[str, str]:
        return dict(self.bindings)


@runtime_checkable
class PlannerProvider(Protocol):
    deterministic: bool

    def propose(
        self,
        task: str,
        goal: Condition,
        state: WorldState,
        skills: list[SkillSchema],
        summary,
    ) -> list[NodeProposal]: ...


def propose_nodes(provider: PlannerProvider, task, goal, state, skills, summary) -> list[NodeProposal]:
    """Pass the provider's proposals through unchanged; refusals propagate."""
    if not skills:
        raise ValueError("cannot propose nodes from an empty skill set")
    return provider.propose(task, goal, state, skills, summary)


class RuleBasedPlanner:
    """Backward-chaining proposer: walk open goal atoms to producing skills,
    bind greedily against the state's objects, and emit proposals in
    dependency order. Deterministic by construction."""

    deterministic = True

    def __init__(self, library: SkillLibrary):
        self.library = library

    def propose(self, task, goal, state, skills, summary) -> list[NodeProposal]:
        if not skills:
            raise ProviderRefusal("no candidate skills")
        object_sorts = infer_object_sorts(self.library, state, goal)
        planned: list[tuple[SkillSchema, dict[str, str], Condition, Condition, str]] = []
        planned_keys: set[tuple[str, tuple[tuple[str, str], ...]]] = set()
        attempted = set()
        queue = deque(goal.sorted_atoms())

        def already_handled(literal) -> bool:
            if literal.negated:
                if literal.positive() not in state.facts:
                    return True
                return any(literal in eff.atoms for _, _, _, eff, _ in planned)
            if literal in state.facts:
                return True
            return any(literal in eff.positives() for _, _, _, eff, _ in planned)

        while queue:
            literal = queue.popleft()
            if literal in attempted:
                continue
            attempted.add(literal)
            if already_handled(literal):
                continue
            hit = producer_for(literal, list(skills), object_sorts, state)
            if hit is None:
                continue  # leave completeness to graph validation
            schema, bindings = hit
            key = (schema.name, tuple(sorted(bindings.items())))
            if key in planned_keys:
                continue
            pre, eff = bind_schema(schema, bindings)
            planned.append((schema, bindings, pre, eff, str(literal)))
            planned_keys.add(key)
            # depth-first: finish a goal atom's support chain before the next
            for sub in sorted(pre.atoms, key=str, reverse=True):
                queue.appendleft(sub)

        if not planned:
            raise ProviderRefusal("no producing skill for any goal atom")
        ordered = self._dependency_order(planned, state, goal)
        return [
            NodeProposal(
                schema_name=schema.name,
                bindings=tuple(sorted(bindings.items())),
                rationale=f"establishes {why}",
                proposed_order_index=i + 1,
            )
            for i, (schema, bindings, _, _, why) in enumerate(ordered)
        ]

    def _dependency_order(self, planned, state: WorldState, goal: Condition):
        n = len(planned)
        constraints: set[tuple[int, int]] = set()
        for i, (_, _, pre_i, eff_i, _) in enumerate(planned):
            for j, (_, _, pre_j, eff_j, _) in enumerate(planned):
                if i == j:
                    continue
                # producer before consumer
                for atom in eff_i.positives():
                    if atom in pre_j.positives() and atom not in state.facts:
                        constraints.add((i, j))
                for atom in eff_i.negatives():
                    if atom.negate() in pre_j.atoms and atom in state.facts:
                        constraints.add((i, j))
                # consumers run before a deleter of what they need
                for atom in eff_j.negatives():
                    if atom in pre_i.positives():
                        constraints.add((i, j))
                # re-establish goal atoms a deleter removes
                for atom in eff_i.negatives():
                    if atom in goal.positives() and atom in eff_j.positives():
                        constraints.add((i, j))

        order = self._kahn(n, constraints)
        if order is None:
            # deleter-derived constraints can knot; retry on producer order only
            producer_only: set[tuple[int, int]] = set()
            for i, (_, _, _, eff_i, _) in enumerate(planned):
                for j, (_, _, pre_j, _, _) in enumerate(planned):
                    if i != j and any(
                        a in pre_j.positives() and a not in state.facts for a in eff_i.positives()
                    ):
                        producer_only.add((i, j))
            order = self._kahn(n, producer_only)
        if order is None:
            raise ProviderRefusal("cannot linearize proposals")
        return [planned[i] for i in order]

    @staticmethod
    def _kahn(n: int, constraints: set[tuple[int, int]]) -> list[int] | None:
        indeg = [0] * n
        adj: list[set[int]] = [set() for _ in range(n)]
        for i, j in constraints:
            if j not in adj[i]:
                adj[i].add(j)
                indeg[j] += 1
        ready = sorted(i for i in range(n) if indeg[i] == 0)
        out = []
        while ready:
            u = ready.pop(0)
            out.append(u)
            for v in sorted(adj[u]):
                indeg[v] -= 1
                if indeg[v] == 0:
                    ready.append(v)
            ready.sort()
        return out if len(out) == n else None




class HttpPlanner:
    """Wire-backed planner speaking a chat-completion request to an endpoint.

    The response body must be JSON carrying the planner text either directly
    under ``content`` or in the usual ``choices[0].message.content`` envelope.
    That text must itself parse as the documented layout::

        {"type": "sequence", "children": [
            {"type": "subtask", "node_id": "step_1", "skill_name": "...",
             "action_steps": [...], "postcondition": "...",
             "bindings": {"param": "object"}}, ...]}

    ``bindings`` is optional per child (defaults to none bound, which the
    binding validator will reject for parameterized skills). A body of
    ``{"type": "refusal", "reason": ...}`` propagates as a refusal.
    """

    deterministic = False

    def __init__(self, endpoint: str, transport=None, timeout: float = 30.0):
        self.endpoint = endpoint
        self.timeout = timeout
        self._transport = transport or self._post

    def _post(self, payload: dict) -> dict:
        import requests

        resp = requests.post(self.endpoint, json=payload, timeout=self.timeout)
        resp.raise_for_status()
        return resp.json()

    def propose(self, task, goal, state, skills, summary) -> list[NodeProposal]:
        summaries = "\n".join(
            f"- {s.name}({', '.join(p for p, _ in s.params)}): {s.description}" for s in skills
        )
        hints = ""
        if summary:
            hints = "Observed successful skill orders:\n" + "\n".join(
                " -> ".join(seq) for seq in summary
            )
        prompt = PLANNER_PROMPT.format(
            task=task,
            skill_summaries=summaries,
            action_grammar="",
            contrastive_guidance=hints,
        )
        payload = {
            "messages": [
                {"role": "system", "content": "You are a precise planning engine."},
                {"role": "user", "content": prompt},
            ],
            "temperature": 0.0,
        }
        body = self._transport(payload)
        content = body.get("content")
        if content is None:
            try:
                content = body["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError):
                raise ProviderMalformedOutput("response carries no content field") from None
        try:
            doc = json.loads(content) if isinstance(content, str) else content
        except json.JSONDecodeError as exc:
            raise ProviderMalformedOutput(f"planner text is not JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ProviderMalformedOutput("planner output must be a JSON object")
        if doc.get("type") == "refusal":
            raise ProviderRefusal(str(doc.get("reason", "planner refused")))
        if doc.get("type") != "sequence" or not isinstance(doc.get("children"), list):
            raise ProviderMalformedOutput('expected {"type": "sequence", "children": [...]}')
        proposals = []
        for i, child in enumerate(doc["children"]):
            if not isinstance(child, dict) or child.get("type") != "subtask":
                raise ProviderMalformedOutput(f"children[{i}] is not a subtask")
            if "skill_name" not in child or "node_id" not in child:
                raise ProviderMalformedOutput(f"children[{i}] misses skill_name/node_id")
            if "postcondition" not in child:
                raise ProviderMalformedOutput(f"children[{i}] misses postcondition")
            bindings = child.get("bindings", {})
            if not isinstance(bindings, dict):
                raise ProviderMalformedOutput(f"children[{i}].bindings must be an object")
            proposals.append(
                NodeProposal(
                    schema_name=child["skill_name"],
                    bindings=tuple(sorted(bindings.items())),
                    rationale=str(child.get("postcondition", "")),
                    proposed_order_index=i + 1,
                )
            )
        return proposals


def validate_and_bind(
    proposals: list[NodeProposal],
    library: SkillLibrary,
    state: WorldState,
    repair_budget: int = 2,
    goal: Condition | None = None,
) -> list[SkillNode]:
    """Resolve proposals into bound nodes; any invalid proposal invalidates
    the whole batch."""
    indices = [p.proposed_order_index for p in proposals]
    if len(set(indices)) != len(indices):
        raise ProposalInvalid("duplicate proposed_order_index in batch")
    object_sorts = infer_object_sorts(library, state, goal or Condition())
    nodes = []
    for proposal in sorted(proposals, key=lambda p: p.proposed_order_index):
        schema = library.get(proposal.schema_name)
        if schema is None:
            raise UnknownSchema(proposal.schema_name)
        bindings = proposal.binding_map()
        pre, eff = bind_schema(schema, bindings)
        check_binding_sorts(schema, bindings, object_sorts)
        nodes.append(
            SkillNode(
                id=f"step_{proposal.proposed_order_index}",
                schema_name=schema.name,
                bindings=tuple(sorted(bindings.items())),
                pre=pre,
                eff=eff,
                verifier=None,
                status=NodeStatus.PENDING,
                confidence=schema.base_confidence,
                repair_budget=repair_budget,
            )
        )
    return nodes


def _precedence_counts(records, names: list[str]) -> dict[tuple[str, str], int]:
    counts: dict[tuple[str, str], int] = {}
    for item in records:
        record: MemoryRecord = item[0] if isinstance(item, tuple) else item
        seq = record.skill_sequence
        firsts = {}
        for idx, name in enumerate(seq):
            firsts.setdefault(name, idx)
        for a in names:
            for b in names:
                if a != b and a in firsts and b in firsts and firsts[a] < firsts[b]:
                    counts[(a, b)] = counts.get((a, b), 0) + 1
    return counts


def infer_edges(
    nodes: list[SkillNode],
    records,
    initial: WorldState,
    library: SkillLibrary,
    precedence_support: int = DEFAULT_PRECEDENCE_SUPPORT,
) -> set[Edge]:
    """Typed edges from effect/precondition matching, slot flow, and soft
    precedence (memory priors and shared resources)."""
    edges: set[Edge] = set()

    # state edges: an effect of u satisfies a precondition of v not already
    # granted by the initial state
    for u in nodes:
        for v in nodes:
            if u.id == v.id:
                continue
            hit = False
            for atom in u.eff.positives():
                if atom in v.pre.positives() and atom not in initial.facts:
                    hit = True
                    break
            if not hit:
                for atom in u.eff.negatives():
                    if atom.negate() in v.pre.atoms and atom in initial.facts:
                        hit = True
                        break
            if hit:
                edges.add(Edge(u.id, "state", v.id))

    # data edges: nearest earlier producer per consumer input slot
    order_index = {node.id: i for i, node in enumerate(nodes)}
    for v in nodes:
        consumer_schema = library.get(v.schema_name)
        if consumer_schema is None:
            continue
        for in_slot, in_sort in consumer_schema.input_slots:
            producer: tuple[int, SkillNode, str] | None = None
            for u in nodes:
                if order_index[u.id] >= order_index[v.id]:
                    continue
                schema = library.get(u.schema_name)
                if schema is None:
                    continue
                for out_slot, out_sort in schema.output_slots:
                    if out_sort == in_sort:
                        if producer is None or order_index[u.id] > producer[0]:
                            producer = (order_index[u.id], u, out_slot)
                        break
            if producer is not None:
                u = producer[1]
                if not any(e.src == u.id and e.dst == v.id and e.kind == "data" for e in edges):
                    edges.add(Edge(u.id, "data", v.id, (producer[2], in_slot)))

    # order edges: memory precedence priors and shared resources, following
    # proposal order
    counts = _precedence_counts(records, [n.schema_name for n in nodes])
    for i, u in enumerate(nodes):
        for v in nodes[i + 1:]:
            shared = set(dict(u.bindings).values()) & set(dict(v.bindings).values())
            prior = counts.get((u.schema_name, v.schema_name), 0) >= precedence_support
            if shared or prior:
                edges.add(Edge(u.id, "order", v.id))
    return edges


def resolve_cycles(nodes: list[SkillNode], edges: set[Edge]) -> set[Edge]:
    """Break cycles by removing soft edges, lowest source confidence first."""
    by_id = {n.id: n for n in nodes}
    working = set(edges)
    while True:
        probe = SkillGraph(nodes=by_id, edges=frozenset(working), goal=Condition())
        cycle = find_cycle(probe)
        if cycle is None:
            return working
        pairs = set(zip(cycle, cycle[1:]))
        candidates = sorted(
            (e for e in working if e.kind == "order" and (e.src, e.dst) in pairs),
            key=lambda e: (by_id[e.src].confidence, e.triple()),
        )
        if not candidates:
            raise HardCycle("cycle of hard edges: " + " -> ".join(cycle))
        working.discard(candidates[0])


def prune_disconnected(nodes: list[SkillNode], edges: set[Edge], goal: Condition):
    """The structural filter: drop nodes that feed neither the goal nor any
    downstream hard dependency. Returns (kept nodes, edges, pruned ids)."""
    kept = list(nodes)
    working = set(edges)
    pruned: list[str] = []
    goal_atoms = set(goal.positives())
    while True:
        doomed = None
        for node in kept:
            feeds_goal = bool(set(node.eff.positives()) & goal_atoms)
            has_hard_out = any(e.src == node.id and e.hard for e in working)
            if not feeds_goal and not has_hard_out:
                doomed = node
                break
        if doomed is None:
            return kept, working, pruned
        kept = [n for n in kept if n.id != doomed.id]
        working = {e for e in working if e.src != doomed.id and e.dst != doomed.id}
        pruned.append(doomed.id)


def attach_brackets(node_ids: list[str], edges: set[Edge]) -> set[Edge]:
    """Source feeds every parentless node; every childless node feeds the sink."""
    out = set(edges)
    has_parent = {e.dst for e in out if e.dst not in (SOURCE, SINK)}
    has_child = {e.src for e in out if e.src not in (SOURCE, SINK)}
    for node_id in node_ids:
        if node_id not in has_parent:
            out.add(Edge(SOURCE, "order", node_id))
        if node_id not in has_child:
            out.add(Edge(node_id, "order", SINK))
    return out


def compile_graph(
    task: str,
    goal: Condition,
    state: WorldState,
    skills: list[SkillSchema],
    records,
    provider: PlannerProvider,
    library: SkillLibrary,
    repair_budget: int = 2,
    precedence_support: int = DEFAULT_PRECEDENCE_SUPPORT,
    summary=(),
) -> SkillGraph:
    """Full pipeline; raises CompileError (the caller's fallback signal) on
    any failure path."""
    try:
        proposals = propose_nodes(provider, task, goal, state, skills, summary)
    except ProviderRefusal as exc:
        raise CompileError(f"provider refused: {exc}") from exc
    except ProviderMalformedOutput as exc:
        raise CompileError(f"provider output malformed: {exc}") from exc
    try:
        nodes = validate_and_bind(proposals, library, state, repair_budget, goal)
    except (ProposalInvalid, UnknownSchema, ValueError) as exc:
        raise CompileError(f"binding failed: {exc}") from exc

    edges = infer_edges(nodes, records, state, library, precedence_support)
    try:
        edges = resolve_cycles(nodes, edges)
    except HardCycle as exc:
        raise CompileError(str(exc)) from exc
    nodes, edges, _pruned = prune_disconnected(nodes, edges, goal)
    if not nodes:
        raise CompileError("structural filter pruned every proposed node")

    bound = []
    for node in nodes:
        schema = library.get(node.schema_name)
        forbidden = ground_condition(schema, schema.forbidden, node.binding_map())
        bound.append(
            SkillNode(
                id=node.id,
                schema_name=node.schema_name,
                bindings=node.bindings,
                pre=node.pre,
                eff=node.eff,
                verifier=VerifierSpec(kind="effects", forbidden=forbidden),
                status=NodeStatus.PENDING,
                confidence=node.confidence,
                repair_budget=repair_budget,
            )
        )
    edges = attach_brackets([n.id for n in bound], edges)
    graph = SkillGraph(nodes={n.id: n for n in bound}, edges=frozenset(edges), goal=goal)
    violations = validate_graph(graph, library, state)
    if violations:
        raise CompileError("; ".join(str(v) for v in violations))
    return graph
