"""Typed skill DAG: nodes with bound schemas, three edge kinds, validators,
traversal, and locality queries.

State and data edges are hard (repair may not remove them); order edges are
soft precedence hints. The graph is bracketed by synthetic ``source`` and
``sink`` endpoints which are not skill nodes: they never appear in
``nodes`` and are excluded from locality queries.

Graphs are values: every mutation helper returns a new graph.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum

from .conditions import Condition, WorldState
from .library import SkillLibrary, bind_schema

SOURCE = "source"
SINK = "sink"

EDGE_KINDS = ("state", "data", "order")
HARD_KINDS = ("state", "data")


class GraphError(ValueError):
    pass


class UnknownNode(GraphError):
    def __init__(self, node_id: str):
        super().__init__(f"unknown node {node_id!r}")
        self.node_id = node_id


class CycleDetected(GraphError):
    pass


class NodeStatus(str, Enum):
    PENDING = "pending"
    READY = "ready"
    RUNNING = "running"
    VERIFIED = "verified"
    FAILED = "failed"
    BYPASSED = "bypassed"


@dataclass(frozen=True)
class VerifierSpec:
    """Default verifier: post-state must satisfy the node's effects and avoid
    the forbidden atoms."""

    kind: str = "effects"
    forbidden: Condition = field(default_factory=Condition)


@dataclass(frozen=True)
class SkillNode:
    id: str
    schema_name: str
    bindings: tuple[tuple[str, str], ...]
    pre: Condition
    eff: Condition
    verifier: VerifierSpec | None
    status: NodeStatus = NodeStatus.PENDING
    confidence: float = 0.5
    repair_budget: int = 2
    repair_count: int = 0

    def binding_map(self) -> dict[str, str]:
        return dict(self.bindings)

    def with_status(self, status: NodeStatus) -> "SkillNode":
        return replace(self, status=status)


@dataclass(frozen=True, order=True)
class Edge:
    src: str
    kind: str
    dst: str
    slots: tuple[str, str] | None = None

    def __post_init__(self):
        if self.kind not in EDGE_KINDS:
            raise GraphError(f"bad edge kind {self.kind!r}")

    @property
    def hard(self) -> bool:
        return self.kind in HARD_KINDS

    def triple(self) -> tuple[str, str, str]:
        return (self.src, self.kind, self.dst)


@dataclass(frozen=True)
class Violation:
    kind: str  # Cycle | SinkUnreachable | GoalIncomplete | UnboundNode | MissingVerifier
    message: str
    node_id: str | None = None

    def __str__(self) -> str:
        return f"{self.kind}: {self.message}"


@dataclass(frozen=True)
class SkillGraph:
    nodes: dict[str, SkillNode]
    edges: frozenset[Edge]
    goal: Condition
    source_id: str = SOURCE
    sink_id: str = SINK

    def node(self, node_id: str) -> SkillNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNode(node_id) from None

    def sorted_edges(self) -> list[Edge]:
        return sorted(self.edges)

    def out_edges(self, node_id: str) -> list[Edge]:
        return sorted(e for e in self.edges if e.src == node_id)

    def in_edges(self, node_id: str) -> list[Edge]:
        return sorted(e for e in self.edges if e.dst == node_id)

    def successors(self, node_id: str) -> list[str]:
        return sorted({e.dst for e in self.edges if e.src == node_id})

    def predecessors(self, node_id: str) -> list[str]:
        return sorted({e.src for e in self.edges if e.dst == node_id})

    # --- functional updates ---

    def with_node(self, node: SkillNode) -> "SkillGraph":
        nodes = dict(self.nodes)
        nodes[node.id] = node
        return replace(self, nodes=nodes)

    def without_nodes(self, node_ids) -> "SkillGraph":
        doomed = set(node_ids)
        nodes = {k: v for k, v in self.nodes.items() if k not in doomed}
        edges = frozenset(e for e in self.edges if e.src not in doomed and e.dst not in doomed)
        return replace(self, nodes=nodes, edges=edges)

    def with_edges(self, add=(), remove=()) -> "SkillGraph":
        removing = {e.triple() for e in remove}
        edges = {e for e in self.edges if e.triple() not in removing}
        for e in add:
            edges = {x for x in edges if x.triple() != e.triple()}
            edges.add(e)
        return replace(self, edges=frozenset(edges))

    def with_status(self, node_id: str, status: NodeStatus) -> "SkillGraph":
        return self.with_node(self.node(node_id).with_status(status))


def _adjacency(g: SkillGraph, include_brackets: bool = True) -> dict[str, list[str]]:
    adj: dict[str, list[str]] = {n: [] for n in g.nodes}
    if include_brackets:
        adj.setdefault(g.source_id, [])
        adj.setdefault(g.sink_id, [])
    for e in sorted(g.edges):
        if not include_brackets and (e.src in (g.source_id, g.sink_id) or e.dst in (g.source_id, g.sink_id)):
            continue
        adj.setdefault(e.src, []).append(e.dst)
    return {k: sorted(set(v)) for k, v in adj.items()}


def find_cycle(g: SkillGraph) -> list[str] | None:
    """Return one directed cycle as a node-id list, or None. Deterministic."""
    adj = _adjacency(g)
    color: dict[str, int] = {}
    stack: list[str] = []

    def visit(u: str) -> list[str] | None:
        color[u] = 1
        stack.append(u)
        for v in adj.get(u, []):
            if color.get(v, 0) == 1:
                return stack[stack.index(v):] + [v]
            if color.get(v, 0) == 0:
                found = visit(v)
                if found:
                    return found
        stack.pop()
        color[u] = 2
        return None

    for start in sorted(adj):
        if color.get(start, 0) == 0:
            found = visit(start)
            if found:
                return found
    return None


def topo_order(g: SkillGraph) -> list[str]:
    """Skill-node topological order; ties broken by lexicographic node id."""
    indeg: dict[str, int] = {n: 0 for n in g.nodes}
    adj: dict[str, set[str]] = {n: set() for n in g.nodes}
    for e in g.edges:
        if e.src in g.nodes and e.dst in g.nodes:
            if e.dst not in adj[e.src]:
                adj[e.src].add(e.dst)
                indeg[e.dst] += 1
    ready = sorted(n for n, d in indeg.items() if d == 0)
    out: list[str] = []
    while ready:
        u = ready.pop(0)
        out.append(u)
        inserted = False
        for v in sorted(adj[u]):
            indeg[v] -= 1
            if indeg[v] == 0:
                ready.append(v)
                inserted = True
        if inserted:
            ready.sort()
    if len(out) != len(g.nodes):
        raise CycleDetected("graph contains a directed cycle among skill nodes")
    return out


def descendants(g: SkillGraph, node_id: str) -> set[str]:
    """All skill nodes reachable from ``node_id`` via directed edges (sink excluded)."""
    if node_id not in g.nodes and node_id not in (g.source_id, g.sink_id):
        raise UnknownNode(node_id)
    adj = _adjacency(g)
    seen: set[str] = set()
    queue = deque([node_id])
    while queue:
        u = queue.popleft()
        for v in adj.get(u, []):
            if v not in seen and v != node_id:
                seen.add(v)
                queue.append(v)
    return {n for n in seen if n in g.nodes}


def neighborhood(g: SkillGraph, node_id: str, hops: int) -> set[str]:
    """Skill nodes within undirected distance <= hops of ``node_id``.

    Paths never run through the source/sink brackets, which would otherwise
    collapse distances across unrelated branches.
    """
    if node_id not in g.nodes:
        raise UnknownNode(node_id)
    if hops < 0:
        raise GraphError("hop radius must be >= 0")
    undirected: dict[str, set[str]] = {n: set() for n in g.nodes}
    for e in g.edges:
        if e.src in g.nodes and e.dst in g.nodes:
            undirected[e.src].add(e.dst)
            undirected[e.dst].add(e.src)
    seen = {node_id}
    frontier = {node_id}
    for _ in range(hops):
        nxt = set()
        for u in sorted(frontier):
            nxt |= undirected[u] - seen
        if not nxt:
            break
        seen |= nxt
        frontier = nxt
    return seen


def ready_nodes(g: SkillGraph) -> set[str]:
    """Pending nodes whose every in-neighbor is verified or bypassed (or the source)."""
    done = {NodeStatus.VERIFIED, NodeStatus.BYPASSED}
    out = set()
    for node_id in g.nodes:
        if g.nodes[node_id].status != NodeStatus.PENDING:
            continue
        ok = True
        for pred in g.predecessors(node_id):
            if pred == g.source_id:
                continue
            if pred == g.sink_id:
                continue
            if g.nodes[pred].status not in done:
                ok = False
                break
        if ok:
            out.add(node_id)
    return out


def reset_subgraph(g: SkillGraph, roots) -> SkillGraph:
    """Set the roots and their descendants back to pending, preserving repair counts.

    Statuses outside the affected set are untouched; this is the guarantee
    that repair preserves verified progress elsewhere.
    """
    affected: set[str] = set()
    for r in sorted(roots):
        if r not in g.nodes:
            raise UnknownNode(r)
        affected.add(r)
        affected |= descendants(g, r)
    nodes = dict(g.nodes)
    for node_id in affected:
        nodes[node_id] = nodes[node_id].with_status(NodeStatus.PENDING)
    return replace(g, nodes=nodes)


def validate_graph(g: SkillGraph, library: SkillLibrary, initial: WorldState) -> list[Violation]:
    """Structural validation; violations are data, not exceptions."""
    out: list[Violation] = []

    cycle = find_cycle(g)
    if cycle:
        out.append(Violation("Cycle", "cycle: " + " -> ".join(cycle)))

    # reachability: sink from source, and every skill node on a source->sink path
    adj = _adjacency(g)
    radj: dict[str, set[str]] = {}
    for u, vs in adj.items():
        for v in vs:
            radj.setdefault(v, set()).add(u)

    def reach(start: str, graph: dict) -> set[str]:
        seen = {start}
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in sorted(graph.get(u, [])):
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return seen

    from_source = reach(g.source_id, adj)
    to_sink = reach(g.sink_id, {k: sorted(v) for k, v in radj.items()})
    if g.sink_id not in from_source:
        out.append(Violation("SinkUnreachable", "sink is not reachable from source"))
    for node_id in sorted(g.nodes):
        if node_id not in from_source or node_id not in to_sink:
            out.append(
                Violation("SinkUnreachable", f"node {node_id} is off every source->sink path", node_id)
            )

    # goal completeness over positive goal atoms
    producible = set(initial.facts)
    for node in g.nodes.values():
        producible |= set(node.eff.positives())
    missing = sorted(str(a) for a in g.goal.positives() if a not in producible)
    if missing:
        out.append(Violation("GoalIncomplete", "unproducible goal atoms: " + ", ".join(missing)))

    # executability: bound schema and verifier per node
    for node_id in sorted(g.nodes):
        node = g.nodes[node_id]
        schema = library.get(node.schema_name)
        if schema is None:
            out.append(Violation("UnboundNode", f"{node_id}: schema {node.schema_name!r} not in library", node_id))
            continue
        try:
            pre, eff = bind_schema(schema, node.binding_map())
        except ValueError as exc:
            out.append(Violation("UnboundNode", f"{node_id}: {exc}", node_id))
            continue
        if pre != node.pre or eff != node.eff:
            out.append(Violation("UnboundNode", f"{node_id}: pre/eff do not match its schema binding", node_id))
        if node.verifier is None:
            out.append(Violation("MissingVerifier", f"{node_id} has no verifier", node_id))

    # structural hygiene: self edges and duplicate triples
    seen_triples: set[tuple[str, str, str]] = set()
    for e in g.sorted_edges():
        if e.src == e.dst:
            out.append(Violation("Cycle", f"self edge on {e.src}"))
        if e.triple() in seen_triples:
            out.append(Violation("Cycle", f"duplicate edge {e.triple()}"))
        seen_triples.add(e.triple())
    return out


# --- canonical serialization ---------------------------------------------

def graph_to_dict(g: SkillGraph) -> dict:
    nodes = []
    for node_id in sorted(g.nodes):
        n = g.nodes[node_id]
        nodes.append(
            {
                "id": n.id,
                "schema": n.schema_name,
                "bindings": {k: v for k, v in sorted(n.bindings)},
                "pre": n.pre.to_strings(),
                "eff": n.eff.to_strings(),
                "verifier": None
                if n.verifier is None
                else {"kind": n.verifier.kind, "forbidden": n.verifier.forbidden.to_strings()},
                "status": n.status.value,
                "confidence": n.confidence,
                "repair_budget": n.repair_budget,
                "repair_count": n.repair_count,
            }
        )
    edges = []
    for e in g.sorted_edges():
        rec = [e.src, e.kind, e.dst]
        if e.slots is not None:
            rec.append(list(e.slots))
        edges.append(rec)
    return {
        "source": g.source_id,
        "sink": g.sink_id,
        "goal": g.goal.to_strings(),
        "nodes": nodes,
        "edges": edges,
    }


def graph_from_dict(doc: dict) -> SkillGraph:
    nodes = {}
    for rec in doc["nodes"]:
        verifier = None
        if rec.get("verifier") is not None:
            verifier = VerifierSpec(
                kind=rec["verifier"]["kind"],
                forbidden=Condition.from_strings(rec["verifier"]["forbidden"]),
            )
        nodes[rec["id"]] = SkillNode(
            id=rec["id"],
            schema_name=rec["schema"],
            bindings=tuple(sorted(rec["bindings"].items())),
            pre=Condition.from_strings(rec["pre"]),
            eff=Condition.from_strings(rec["eff"]),
            verifier=verifier,
            status=NodeStatus(rec["status"]),
            confidence=rec["confidence"],
            repair_budget=rec["repair_budget"],
            repair_count=rec["repair_count"],
        )
    edges = set()
    for rec in doc["edges"]:
        slots = tuple(rec[3]) if len(rec) > 3 else None
        edges.add(Edge(rec[0], rec[1], rec[2], slots))
    return SkillGraph(
        nodes=nodes,
        edges=frozenset(edges),
        goal=Condition.from_strings(doc["goal"]),
        source_id=doc["source"],
        sink_id=doc["sink"],
    )


def graph_to_json(g: SkillGraph) -> str:
    return json.dumps(graph_to_dict(g), sort_keys=True, separators=(",", ":"))


def graph_from_json(text: str) -> SkillGraph:
    return graph_from_dict(json.loads(text))
