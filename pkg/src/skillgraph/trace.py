"""Replayable episode traces: canonical JSON-lines, one event per line.

Line 1 is the header (scenario, config hash, seed, mode); the last line is
the footer carrying the episode result. Identical inputs reproduce identical
bytes, so traces can be diffed and every benchmark number recomputed from
trace files alone.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

TRACE_VERSION = 1

# the parameter names whose values define a configuration fingerprint
HASHED_PARAMS = (
    "lambda",
    "k",
    "M",
    "eta",
    "tau_low",
    "tau_high",
    "h",
    "L_max",
    "E_max",
    "R_max",
    "P_max",
    "max_env_steps",
)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(params: dict) -> str:
    """Fingerprint of the runtime parameters; the seed is excluded so runs of
    the same configuration share a hash."""
    payload = {k: params[k] for k in HASHED_PARAMS}
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()[:16]


class TraceError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


@dataclass
class EpisodeTrace:
    header: dict
    events: list[dict] = field(default_factory=list)
    footer: dict | None = None

    def add(self, kind: str, payload: dict) -> None:
        event = {"type": kind}
        event.update(payload)
        self.events.append(event)

    def finish(self, result: dict) -> None:
        self.footer = {"type": "footer", "result": result}

    def lines(self) -> list[str]:
        head = {"type": "header", "version": TRACE_VERSION}
        head.update(self.header)
        out = [canonical_json(head)]
        out.extend(canonical_json(e) for e in self.events)
        if self.footer is not None:
            out.append(canonical_json(self.footer))
        return out

    def dumps(self) -> str:
        return "\n".join(self.lines()) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    def events_of(self, kind: str) -> list[dict]:
        return [e for e in self.events if e["type"] == kind]

    @property
    def result(self) -> dict:
        return {} if self.footer is None else self.footer["result"]


def load_trace(path) -> EpisodeTrace:
    header = None
    events: list[dict] = []
    footer = None
    with open(path, "r", encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                event = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceError(f"invalid JSON: {exc.msg}", line=i) from exc
            if not isinstance(event, dict) or "type" not in event:
                raise TraceError("event without a type field", line=i)
            if event["type"] == "header":
                if header is not None:
                    raise TraceError("duplicate header", line=i)
                header = event
            elif event["type"] == "footer":
                footer = event
            else:
                events.append(event)
    if header is None:
        raise TraceError("missing header", line=1)
    trace = EpisodeTrace(header={k: v for k, v in header.items() if k != "type"}, events=events)
    trace.footer = footer
    return trace


ESCALATION_LAYERS = ("direct", "local_repair", "replan", "fallback", "fail")


def escalation_layer(trace: EpisodeTrace) -> str:
    """Which fault-tolerance layer settled the episode."""
    result = trace.result
    success = result.get("outcome") == "success"
    replans = result.get("replan_count", 0)
    repairs = len(trace.events_of("repair"))
    used_fallback = bool(trace.events_of("fallback_action"))
    if not success:
        return "fail"
    if used_fallback:
        return "fallback"
    if replans > 0:
        return "replan"
    if repairs > 0:
        return "local_repair"
    return "direct"


def escalation_histogram(traces) -> dict[str, int]:
    counts = {layer: 0 for layer in ESCALATION_LAYERS}
    for trace in traces:
        counts[escalation_layer(trace)] += 1
    return counts
