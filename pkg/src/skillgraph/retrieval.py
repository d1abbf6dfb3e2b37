"""Memory-conditioned skill retrieval: fused skill distribution and calibrated
confidence over four features (mean memory similarity, distributional
agreement, top-skill margin, goal coverage).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .conditions import Condition, WorldState
from .library import SkillLibrary, SkillSchema
from .memory import MemoryRecord, MemoryStore, skill_frequency, tokenize, top_k

RELEVANCE_FLOOR = 1e-6
CALIBRATION_BINS = 10
DEFAULT_WEIGHTS = (1.0, 1.0, 1.0, 1.0)
DEFAULT_BIAS = -2.0


class EmptyLibrary(ValueError):
    pass


class SupportMismatch(ValueError):
    pass


def logistic(x: float) -> float:
    if x >= 0:
        z = math.exp(-x)
        return 1.0 / (1.0 + z)
    z = math.exp(x)
    return z / (1.0 + z)


def normalize(weights: dict[str, float]) -> dict[str, float]:
    total = sum(weights.values())
    if total <= 0:
        raise ValueError("cannot normalize non-positive mass")
    return {k: v / total for k, v in weights.items()}


def check_distribution(weights: dict[str, float], tol: float = 1e-9) -> None:
    if not weights:
        return
    if any(v < 0 for v in weights.values()):
        raise ValueError("negative weight in distribution")
    if abs(sum(weights.values()) - 1.0) > tol:
        raise ValueError("distribution does not sum to 1")


def jensen_shannon(p: dict[str, float], q: dict[str, float]) -> float:
    """Base-2 Jensen-Shannon divergence; lies in [0, 1] exactly."""
    if set(p) != set(q):
        raise SupportMismatch("distributions are over different supports")

    def h(dist) -> float:
        out = 0.0
        for v in dist:
            if v > 0:
                out -= v * math.log2(v)
        return out

    keys = sorted(p)
    m = [(p[k] + q[k]) / 2.0 for k in keys]
    return max(0.0, min(1.0, h(m) - (h(p[k] for k in keys) + h(q[k] for k in keys)) / 2.0))


@dataclass(frozen=True)
class ConfidenceFeatures:
    mean_rho: float
    agreement: float
    margin: float
    coverage: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.mean_rho, self.agreement, self.margin, self.coverage)

    def to_dict(self) -> dict:
        return {
            "mean_rho": self.mean_rho,
            "agreement": self.agreement,
            "margin": self.margin,
            "coverage": self.coverage,
        }


@dataclass(frozen=True)
class CalibrationState:
    """Ten equal-width bins of (successes, trials) plus the linear scorer."""

    bins: tuple[tuple[int, int], ...] = tuple((0, 0) for _ in range(CALIBRATION_BINS))
    weights: tuple[float, float, float, float] = DEFAULT_WEIGHTS
    bias: float = DEFAULT_BIAS
    eta: float = 0.7

    def bin_index(self, score: float) -> int:
        score = min(1.0, max(0.0, score))
        return min(int(score * CALIBRATION_BINS), CALIBRATION_BINS - 1)

    def historical_rate(self, score: float) -> float:
        successes, trials = self.bins[self.bin_index(score)]
        if trials == 0:
            return 0.5
        return successes / trials

    def to_dict(self) -> dict:
        return {
            "bins": [list(b) for b in self.bins],
            "weights": list(self.weights),
            "bias": self.bias,
            "eta": self.eta,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CalibrationState":
        return cls(
            bins=tuple((int(a), int(b)) for a, b in doc["bins"]),
            weights=tuple(float(w) for w in doc["weights"]),
            bias=float(doc["bias"]),
            eta=float(doc["eta"]),
        )


@dataclass(frozen=True)
class RetrievalResult:
    skills: tuple[str, ...]
    records: tuple[tuple[MemoryRecord, float], ...]
    summary: tuple[tuple[str, ...], ...]  # precedence hints: the records' skill sequences
    c_ret: float
    features: ConfidenceFeatures
    raw_score: float
    fused: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "skills": list(self.skills),
            "records": len(self.records),
            "mean_rho": self.features.mean_rho,
            "c_ret": self.c_ret,
            "raw_score": self.raw_score,
            "features": self.features.to_dict(),
            "fused": {k: self.fused[k] for k in sorted(self.fused)},
        }


def direct_distribution(task_text: str, state: WorldState, library: SkillLibrary) -> dict[str, float]:
    """Lexical relevance of each skill description to the task, floor-smoothed
    and normalized."""
    if not library.schemas:
        raise EmptyLibrary("cannot retrieve from an empty library")
    task_tokens = tokenize(task_text)
    weights = {}
    for schema in library.sorted_schemas():
        desc_tokens = tokenize(schema.description + " " + schema.name)
        inter = len(task_tokens & desc_tokens)
        union = len(task_tokens | desc_tokens)
        rel = (inter / union) if union else 0.0
        weights[schema.name] = rel + RELEVANCE_FLOOR
    return normalize(weights)


def memory_distribution(records, support) -> dict[str, float]:
    """Similarity-weighted skill frequencies over ``support``, normalized.

    Returns an all-zero map when there are no records or no in-support mass.
    """
    support = sorted(support)
    raw = {name: 0.0 for name in support}
    for record, rho in records:
        for name in support:
            freq = skill_frequency(name, record.skill_sequence)
            if freq:
                raw[name] += rho * freq
    z = sum(raw.values())
    if z <= 0:
        return {name: 0.0 for name in support}
    return {name: v / z for name, v in raw.items()}


def fuse(p_dir: dict[str, float], records, lam: float) -> dict[str, float]:
    """Mix the direct distribution with the memory-induced one.

    With no records (or no in-support memory mass) the result is ``p_dir``
    regardless of the mixing weight.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError("mixing weight must lie in [0, 1]")
    p_mem = memory_distribution(records, p_dir.keys())
    if sum(p_mem.values()) <= 0:
        return dict(p_dir)
    return {k: lam * p_dir[k] + (1.0 - lam) * p_mem[k] for k in p_dir}


def _coverage(selected: list[SkillSchema], goal: Condition) -> float:
    """Fraction of positive goal atoms producible by some selected skill's
    effect template under *some* binding (template-level producibility)."""
    goal_atoms = sorted(goal.positives(), key=str)
    if not goal_atoms:
        return 1.0
    covered = 0
    for atom in goal_atoms:
        hit = False
        for schema in selected:
            params = schema.param_sorts()
            for tmpl in schema.eff_template.positives():
                if tmpl.predicate != atom.predicate or len(tmpl.args) != len(atom.args):
                    continue
                binding_ok = True
                seen: dict[str, str] = {}
                for t_arg, g_arg in zip(tmpl.args, atom.args):
                    if t_arg in params:
                        if seen.setdefault(t_arg, g_arg) != g_arg:
                            binding_ok = False
                            break
                    elif t_arg != g_arg:
                        binding_ok = False
                        break
                if binding_ok:
                    hit = True
                    break
            if hit:
                break
        covered += int(hit)
    return covered / len(goal_atoms)


def confidence_features(
    p_dir: dict[str, float],
    p_mem: dict[str, float],
    records,
    selected: list[SkillSchema],
    goal: Condition,
    fused: dict[str, float] | None = None,
) -> ConfidenceFeatures:
    """The four routing features.

    With no memory evidence the memory prior defaults to the direct
    distribution, so agreement degenerates to 1 rather than penalizing an
    empty store twice (mean_rho already carries that signal).
    """
    if set(p_dir) != set(p_mem):
        raise SupportMismatch("direct/memory distributions differ in support")
    rhos = [rho for _, rho in records]
    mean_rho = sum(rhos) / len(rhos) if rhos else 0.0
    if sum(p_mem.values()) <= 0:
        agreement = 1.0
    else:
        agreement = 1.0 - jensen_shannon(p_dir, p_mem)
    ranked = sorted((fused or p_dir).items(), key=lambda kv: (-kv[1], kv[0]))
    positive_support = [w for _, w in ranked if w > 0]
    if len(positive_support) <= 1:
        margin = 1.0
    else:
        margin = ranked[0][1] - ranked[1][1]
    margin = min(1.0, max(0.0, margin))
    return ConfidenceFeatures(
        mean_rho=mean_rho,
        agreement=max(0.0, min(1.0, agreement)),
        margin=margin,
        coverage=_coverage(selected, goal),
    )


def retrieval_confidence(features: ConfidenceFeatures, calib: CalibrationState) -> tuple[float, float]:
    """Blend the logistic feature score with the historical rate of its bin.

    Returns (c_ret, raw_logistic_score); the bin is indexed by the raw score.
    """
    f = features.as_tuple()
    score = logistic(sum(w * x for w, x in zip(calib.weights, f)) + calib.bias)
    c_hist = calib.historical_rate(score)
    c_ret = calib.eta * score + (1.0 - calib.eta) * c_hist
    return min(1.0, max(0.0, c_ret)), score


def update_calibration(calib: CalibrationState, c_pre: float, succeeded: bool) -> CalibrationState:
    """Record one (score, outcome) observation in the matching bin."""
    if not 0.0 <= c_pre <= 1.0:
        raise ValueError("calibration score must lie in [0, 1]")
    idx = calib.bin_index(c_pre)
    bins = list(calib.bins)
    successes, trials = bins[idx]
    bins[idx] = (successes + int(succeeded), trials + 1)
    return replace(calib, bins=tuple(bins))


def load_calibration(path) -> CalibrationState:
    """Read the newest snapshot from an append-only JSON-lines history."""
    import json

    last = None
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                last = line
    if last is None:
        return CalibrationState()
    return CalibrationState.from_dict(json.loads(last))


def append_calibration(path, calib: CalibrationState) -> None:
    """Append one snapshot line; the file keeps the full update history."""
    import json

    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(calib.to_dict(), sort_keys=True, separators=(",", ":")) + "\n")


def retrieve(
    task_text: str,
    state: WorldState,
    library: SkillLibrary,
    store: MemoryStore,
    goal: Condition,
    lam: float = 0.5,
    k: int = 5,
    m: int = 5,
    calib: CalibrationState | None = None,
) -> RetrievalResult:
    """End-to-end retrieval: top-k memories, fused distribution, top-M skills,
    features, calibrated confidence. Deterministic given its inputs."""
    if not library.schemas:
        raise EmptyLibrary("cannot retrieve from an empty library")
    calib = calib or CalibrationState()
    records = tuple(top_k(task_text, state, store, k))
    p_dir = direct_distribution(task_text, state, library)
    p_mem = memory_distribution(records, p_dir.keys())
    fused = fuse(p_dir, records, lam)
    ranked = sorted(fused.items(), key=lambda kv: (-kv[1], kv[0]))
    selected_names = tuple(name for name, _ in ranked[: max(0, m)])
    selected = [library.schemas[name] for name in selected_names]
    features = confidence_features(p_dir, p_mem, records, selected, goal, fused)
    c_ret, raw = retrieval_confidence(features, calib)
    return RetrievalResult(
        skills=selected_names,
        records=records,
        summary=tuple(rec.skill_sequence for rec, _ in records),
        c_ret=c_ret,
        features=features,
        raw_score=raw,
        fused=fused,
    )
