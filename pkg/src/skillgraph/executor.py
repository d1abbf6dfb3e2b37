"""Verified graph traversal: precondition check, action script, postcondition
verification per node; failures become structured events, never exceptions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Protocol

from .conditions import WorldState, satisfies, unsatisfied_atoms
from .graph import (
    NodeStatus,
    SkillGraph,
    SkillNode,
    descendants,
    ready_nodes,
    reset_subgraph,
)
from .library import SkillLibrary, ground_actions
from .simenv import NOTHING_HAPPENS


class Environment(Protocol):
    """One episode owns one environment; perform consumes exactly one step."""

    def reset(self) -> WorldState: ...

    def perform(self, action: str) -> tuple[str, WorldState, bool]: ...

    @property
    def state(self) -> WorldState: ...

    @property
    def done(self) -> bool: ...

    @property
    def budget(self) -> int: ...


class FailureType(str, Enum):
    PRECONDITION = "precondition"
    EXECUTION = "execution"
    POSTCONDITION = "postcondition"
    TIMEOUT = "timeout"


def classify_failure(stage: str, timed_out: bool = False) -> FailureType:
    """Map a check stage to a failure type; timeout dominates execution."""
    if stage == "precondition":
        return FailureType.PRECONDITION
    if stage == "postcondition":
        return FailureType.POSTCONDITION
    if stage == "execution":
        return FailureType.TIMEOUT if timed_out else FailureType.EXECUTION
    raise ValueError(f"unknown check stage {stage!r}")


@dataclass(frozen=True)
class FailureEvent:
    node_id: str
    failure_type: FailureType
    message: dict
    state_snapshot: WorldState

    def to_dict(self) -> dict:
        return {
            "node": self.node_id,
            "failure_type": self.failure_type.value,
            "message": self.message,
            "state": self.state_snapshot.to_strings(),
        }


class BindingTable:
    """Episode-local slot values, written as data-edge producers verify."""

    def __init__(self):
        self._values: dict[tuple[str, str], str] = {}

    def write(self, node_id: str, slot: str, value: str) -> None:
        self._values[(node_id, slot)] = value

    def read(self, node_id: str, slot: str) -> str | None:
        return self._values.get((node_id, slot))

    def write_outputs(self, node: SkillNode, library: SkillLibrary) -> None:
        schema = library.get(node.schema_name)
        if schema is None:
            return
        bindings = node.binding_map()
        for slot, sort in schema.output_slots:
            value = bindings.get(slot)
            if value is None:
                for param, param_sort in schema.params:
                    if param_sort == sort:
                        value = bindings.get(param)
                        break
            if value is not None:
                self.write(node.id, slot, value)

    def as_dict(self) -> dict[str, str]:
        return {f"{n}.{s}": v for (n, s), v in sorted(self._values.items())}


@dataclass
class NodeExecution:
    node_id: str
    schema_name: str
    actions: list[tuple[str, str]] = field(default_factory=list)
    env_steps: int = 0
    outcome: str = "verified"
    failure: FailureEvent | None = None
    state_added: list[str] = field(default_factory=list)
    state_removed: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "node": self.node_id,
            "schema": self.schema_name,
            "actions": [{"action": a, "observation": o} for a, o in self.actions],
            "env_steps": self.env_steps,
            "outcome": self.outcome,
            "state_added": self.state_added,
            "state_removed": self.state_removed,
        }


def execute_node(
    node: SkillNode,
    state: WorldState,
    env: Environment,
    bindings: BindingTable,
    library: SkillLibrary,
    graph: SkillGraph | None = None,
) -> tuple[WorldState, NodeExecution]:
    """Run one ready node: check preconditions, perform its action script,
    verify the post-state. The returned execution record carries the failure
    event when any check rejected."""
    record = NodeExecution(node_id=node.id, schema_name=node.schema_name)

    missing = unsatisfied_atoms(state, node.pre)
    if missing:
        record.outcome = FailureType.PRECONDITION.value
        record.failure = FailureEvent(
            node_id=node.id,
            failure_type=FailureType.PRECONDITION,
            message={"missing": sorted(str(a) for a in missing)},
            state_snapshot=state,
        )
        return state, record

    if graph is not None:
        for edge in graph.in_edges(node.id):
            if edge.kind != "data" or edge.slots is None:
                continue
            producer = graph.nodes.get(edge.src)
            if producer is None or producer.status == NodeStatus.BYPASSED:
                continue
            if bindings.read(edge.src, edge.slots[0]) is None:
                record.outcome = FailureType.PRECONDITION.value
                record.failure = FailureEvent(
                    node_id=node.id,
                    failure_type=FailureType.PRECONDITION,
                    message={"missing_input": f"{edge.src}.{edge.slots[0]}"},
                    state_snapshot=state,
                )
                return state, record

    schema = library.get(node.schema_name)
    script = ground_actions(schema, node.binding_map()) if schema else []
    before = state
    for i, action in enumerate(script):
        observation, state, done = env.perform(action)
        record.actions.append((action, observation))
        record.env_steps += 1
        no_op = observation == NOTHING_HAPPENS
        mid_program = i < len(script) - 1
        if no_op or (done and mid_program):
            failure_type = classify_failure("execution", timed_out=done)
            record.outcome = failure_type.value
            record.failure = FailureEvent(
                node_id=node.id,
                failure_type=failure_type,
                message={"action": action, "observation": observation, "step": state.step_count},
                state_snapshot=state,
            )
            record.state_added = sorted(str(a) for a in state.facts - before.facts)
            record.state_removed = sorted(str(a) for a in before.facts - state.facts)
            return state, record

    record.state_added = sorted(str(a) for a in state.facts - before.facts)
    record.state_removed = sorted(str(a) for a in before.facts - state.facts)

    verifier = node.verifier
    unmet = unsatisfied_atoms(state, node.eff)
    forbidden_present = []
    if verifier is not None:
        forbidden_present = sorted(
            str(a) for a in verifier.forbidden.positives() if a in state.facts
        )
    if unmet or forbidden_present:
        record.outcome = FailureType.POSTCONDITION.value
        record.failure = FailureEvent(
            node_id=node.id,
            failure_type=FailureType.POSTCONDITION,
            message={
                "unmet": sorted(str(a) for a in unmet),
                "forbidden_present": forbidden_present,
            },
            state_snapshot=state,
        )
        return state, record

    record.outcome = "verified"
    bindings.write_outputs(node, library)
    return state, record


@dataclass
class RunResult:
    outcome: str  # completed | goal_unmet | failed | budget_exhausted
    graph: SkillGraph
    state: WorldState
    failure: FailureEvent | None = None
    executions: list[NodeExecution] = field(default_factory=list)
    re_executed_counts: list[int] = field(default_factory=list)
    env_steps: int = 0


RepairHook = Callable[[SkillGraph, FailureEvent, WorldState], tuple[SkillGraph, bool]]


def run_graph(
    graph: SkillGraph,
    state: WorldState,
    env: Environment,
    repair_hook: RepairHook,
    library: SkillLibrary,
    on_event: Callable[[str, dict], None] | None = None,
) -> RunResult:
    """Iterate ready nodes in topological order; on failure invoke the repair
    hook, which either patches the graph (execution resumes after resetting
    the affected subgraph) or escalates."""

    def emit(kind: str, payload: dict) -> None:
        if on_event is not None:
            on_event(kind, payload)

    bindings = BindingTable()
    result = RunResult(outcome="completed", graph=graph, state=state)
    start_steps = state.step_count

    while True:
        statuses = {n.status for n in graph.nodes.values()}
        if statuses <= {NodeStatus.VERIFIED, NodeStatus.BYPASSED}:
            result.graph = graph
            result.state = state
            result.env_steps = state.step_count - start_steps
            result.outcome = "completed" if satisfies(state, graph.goal) else "goal_unmet"
            return result

        ready = sorted(ready_nodes(graph))
        if not ready:
            result.graph = graph
            result.state = state
            result.env_steps = state.step_count - start_steps
            result.outcome = "failed"
            return result

        node_id = ready[0]
        node = graph.node(node_id)
        graph = graph.with_status(node_id, NodeStatus.RUNNING)
        state, record = execute_node(node, state, env, bindings, library, graph)
        result.executions.append(record)
        emit("node_attempt", record.to_dict())

        if record.failure is None:
            graph = graph.with_status(node_id, NodeStatus.VERIFIED)
            continue

        event = record.failure
        graph = graph.with_status(node_id, NodeStatus.FAILED)
        emit("failure", event.to_dict())

        if event.failure_type == FailureType.TIMEOUT or env.done:
            result.graph = graph
            result.state = state
            result.env_steps = state.step_count - start_steps
            result.outcome = "budget_exhausted"
            result.failure = event
            return result

        patched, ok = repair_hook(graph, event, state)
        if not ok:
            result.graph = graph
            result.state = state
            result.env_steps = state.step_count - start_steps
            result.outcome = "failed"
            result.failure = event
            return result

        added = sorted(set(patched.nodes) - set(graph.nodes))
        roots = set(added)
        if node_id in patched.nodes and patched.node(node_id).status not in (
            NodeStatus.BYPASSED,
            NodeStatus.VERIFIED,
        ):
            roots.add(node_id)

        affected = set(roots)
        for r in roots:
            affected |= descendants(patched, r)
        downgraded = [
            n
            for n in sorted(affected)
            if n not in added
            and patched.node(n).status in (NodeStatus.FAILED, NodeStatus.VERIFIED)
        ]
        re_executed = len(downgraded) + len(added)
        result.re_executed_counts.append(re_executed)
        emit(
            "repair_reset",
            {"node": node_id, "roots": sorted(roots), "added": added, "re_executed": re_executed},
        )
        graph = reset_subgraph(patched, roots) if roots else patched
