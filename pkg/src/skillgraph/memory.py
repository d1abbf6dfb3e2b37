"""Episodic experience store: past episodes, lexical similarity, top-k retrieval.

Similarity is deterministic lexical Jaccard over task tokens and fact sets;
the scorer is a plain function so an embedding-backed one can be swapped in
behind the same signature.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .conditions import WorldState

DEFAULT_CAP = 1000

_TOKEN_RE = re.compile(r"[a-z0-9_-]+")

# function words carry no retrieval signal and swamp short descriptions
_STOPWORDS = frozenset(
    "a an the and or it is are you of to in on at with for such as so be".split()
)


def tokenize(text: str) -> frozenset[str]:
    return frozenset(_TOKEN_RE.findall(text.lower())) - _STOPWORDS


def jaccard(a: frozenset, b: frozenset) -> float:
    if not a and not b:
        return 1.0
    union = a | b
    if not union:
        return 1.0
    return len(a & b) / len(union)


@dataclass(frozen=True)
class MemoryRecord:
    task_text: str
    initial_facts: frozenset[str]
    skill_sequence: tuple[str, ...]
    outcome: str  # "success" | "failure"
    reward: float
    steps: int

    def __post_init__(self):
        if self.outcome not in ("success", "failure"):
            raise ValueError(f"bad outcome {self.outcome!r}")
        if self.outcome == "success" and not self.skill_sequence:
            raise ValueError("success records must carry a non-empty skill sequence")

    def to_dict(self) -> dict:
        return {
            "task": self.task_text,
            "facts": sorted(self.initial_facts),
            "skills": list(self.skill_sequence),
            "outcome": self.outcome,
            "reward": self.reward,
            "steps": self.steps,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MemoryRecord":
        return cls(
            task_text=doc["task"],
            initial_facts=frozenset(doc["facts"]),
            skill_sequence=tuple(doc["skills"]),
            outcome=doc["outcome"],
            reward=doc["reward"],
            steps=doc["steps"],
        )


def similarity(task_text: str, facts: frozenset[str], record: MemoryRecord) -> float:
    """0.6 * task-token Jaccard + 0.4 * fact-set Jaccard, clamped to [0, 1]."""
    score = 0.6 * jaccard(tokenize(task_text), tokenize(record.task_text)) + 0.4 * jaccard(
        frozenset(facts), frozenset(record.initial_facts)
    )
    return min(1.0, max(0.0, score))


class MemoryStore:
    """Append-mostly record list with a FIFO cap. Reads are cheap and safe to share."""

    def __init__(self, records=(), cap: int = DEFAULT_CAP):
        self.cap = cap
        self._records: list[MemoryRecord] = list(records)[-cap:]

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self):
        return iter(self._records)

    def append(self, record: MemoryRecord) -> None:
        self._records.append(record)
        if len(self._records) > self.cap:
            del self._records[: len(self._records) - self.cap]

    def records(self) -> list[MemoryRecord]:
        return list(self._records)


def top_k(task_text: str, state: WorldState, store: MemoryStore, k: int) -> list[tuple[MemoryRecord, float]]:
    """The k most similar *success* records, descending similarity, stable on ties."""
    if k <= 0:
        return []
    facts = frozenset(str(a) for a in state.facts)
    scored = [
        (rec, similarity(task_text, facts, rec))
        for rec in store
        if rec.outcome == "success"
    ]
    scored.sort(key=lambda pair: -pair[1])  # stable: insertion order breaks ties
    return scored[:k]


def skill_frequency(schema_name: str, skill_sequence) -> float:
    seq = list(skill_sequence)
    if not seq:
        return 0.0
    return seq.count(schema_name) / len(seq)


@dataclass
class EpisodeSummary:
    """The slice of a finished episode that memory keeps."""

    task_text: str
    initial_state: WorldState
    executed_skills: tuple[str, ...]
    success: bool
    env_steps: int
    reward: float = field(default=0.0)


def record_episode(store: MemoryStore, summary: EpisodeSummary) -> MemoryRecord | None:
    """Append a record extracted from a finished episode.

    Successful episodes that executed no skill nodes (pure reactive runs)
    carry nothing retrieval can reuse and are skipped.
    """
    if summary.success and not summary.executed_skills:
        return None
    record = MemoryRecord(
        task_text=summary.task_text,
        initial_facts=frozenset(str(a) for a in summary.initial_state.facts),
        skill_sequence=tuple(summary.executed_skills),
        outcome="success" if summary.success else "failure",
        reward=summary.reward,
        steps=summary.env_steps,
    )
    store.append(record)
    return record


# --- JSON-lines persistence ------------------------------------------------

def load_memory(path, cap: int = DEFAULT_CAP) -> MemoryStore:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(MemoryRecord.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{i}: bad memory record: {exc}") from exc
    return MemoryStore(records, cap=cap)


def append_memory(path, record: MemoryRecord) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record.to_dict(), sort_keys=True, separators=(",", ":")) + "\n")
