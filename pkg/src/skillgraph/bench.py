"""Benchmark harnesses over scenario corpora: mode comparisons, retrieval-width
sweeps, and library-degradation sweeps. Every aggregate is computed from the
episode traces, so the same numbers can be recomputed later from the emitted
trace files alone.
"""
from __future__ import annotations

import csv
import json
import random
from dataclasses import replace
from pathlib import Path

from .conditions import Condition
from .corpus import load_scenario_library
from .library import SkillLibrary
from .memory import MemoryStore
from .orchestrator import RuntimeConfig, run_episode
from .retrieval import CalibrationState
from .simenv import Scenario, load_scenario
from .trace import EpisodeTrace, escalation_histogram, escalation_layer, load_trace

DEFAULT_MODES = ("grasp", "flat")
DEFAULT_SEEDS = 3  # independent runs averaged per cell


def degrade_library(library: SkillLibrary, rate: float, seed: int) -> SkillLibrary:
    """Seeded quality degradation: each precondition atom is deleted with
    probability ``rate`` and each description token dropped at the same rate."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError("degradation rate must lie in [0, 1]")
    rng = random.Random(seed)
    schemas = {}
    for schema in library.sorted_schemas():
        kept_atoms = frozenset(
            a for a in schema.pre_template.sorted_atoms() if rng.random() >= rate
        )
        words = schema.description.split()
        kept_words = [w for w in words if rng.random() >= rate] or words[:1]
        schemas[schema.name] = replace(
            schema,
            pre_template=Condition(kept_atoms),
            description=" ".join(kept_words),
        )
    return library.with_schemas(schemas)


def load_corpus(corpus_dir) -> list[tuple[Scenario, Path]]:
    paths = sorted(Path(corpus_dir).glob("*.scenario"))
    return [(load_scenario(p), p) for p in paths]


def run_cell(
    scenario: Scenario,
    library: SkillLibrary,
    config: RuntimeConfig,
    mode: str,
    seed: int,
) -> EpisodeTrace:
    """One independent episode: fresh memory and calibration, per the
    episode-independence contract."""
    out = run_episode(
        scenario,
        library,
        replace(config, seed=seed),
        mode=mode,
        store=MemoryStore(),
        calibration=CalibrationState(
            weights=config.conf_weights, bias=config.conf_bias, eta=config.eta
        ),
    )
    return out.trace


def run_corpus(
    scenarios: list[tuple[Scenario, SkillLibrary]],
    config: RuntimeConfig,
    modes=DEFAULT_MODES,
    seeds: int = DEFAULT_SEEDS,
    out_dir=None,
) -> list[EpisodeTrace]:
    traces = []
    trace_dir = None
    if out_dir is not None:
        trace_dir = Path(out_dir) / "traces"
        trace_dir.mkdir(parents=True, exist_ok=True)
    for scenario, library in scenarios:
        for mode in modes:
            for seed in range(seeds):
                trace = run_cell(scenario, library, config, mode, seed)
                traces.append(trace)
                if trace_dir is not None:
                    name = f"{scenario.name}__{mode}__s{seed}.trace.jsonl"
                    trace.save(trace_dir / name)
    return traces


def episode_row(trace: EpisodeTrace) -> dict:
    result = trace.result
    return {
        "scenario": result.get("scenario", trace.header.get("scenario")),
        "mode": result.get("mode", trace.header.get("mode")),
        "seed": trace.header.get("seed"),
        "success": int(result.get("outcome") == "success"),
        "env_steps": result.get("env_steps", 0),
        "re_executed": result.get("re_executed", 0),
        "provider_calls": result.get("provider_calls", 0),
        "repairs": len(trace.events_of("repair")),
        "replans": result.get("replan_count", 0),
        "route": result.get("route", ""),
        "layer": escalation_layer(trace),
    }


def aggregate(traces: list[EpisodeTrace]) -> dict[str, dict]:
    """Per-mode means plus the escalation-layer breakdown."""
    by_mode: dict[str, list[EpisodeTrace]] = {}
    for trace in traces:
        mode = trace.result.get("mode", trace.header.get("mode", "?"))
        by_mode.setdefault(mode, []).append(trace)
    table = {}
    for mode in sorted(by_mode):
        group = by_mode[mode]
        rows = [episode_row(t) for t in group]
        n = len(rows)
        table[mode] = {
            "episodes": n,
            "success_rate": round(100.0 * sum(r["success"] for r in rows) / n, 2),
            "mean_env_steps": round(sum(r["env_steps"] for r in rows) / n, 3),
            "mean_re_executed": round(sum(r["re_executed"] for r in rows) / n, 3),
            "mean_provider_calls": round(sum(r["provider_calls"] for r in rows) / n, 3),
            "mean_repairs": round(sum(r["repairs"] for r in rows) / n, 3),
            "escalation": escalation_histogram(group),
        }
    return table


def aggregate_from_files(paths) -> dict[str, dict]:
    """The no-hidden-state guarantee: identical aggregation over saved traces."""
    return aggregate([load_trace(p) for p in paths])


def sweep_retrieval_width(
    scenarios: list[tuple[Scenario, SkillLibrary]],
    config: RuntimeConfig,
    widths,
    modes=DEFAULT_MODES,
    seeds: int = DEFAULT_SEEDS,
) -> list[dict]:
    rows = []
    for width in widths:
        traces = run_corpus(scenarios, replace(config, m=width), modes, seeds)
        for mode, stats in aggregate(traces).items():
            rows.append(
                {
                    "M": width,
                    "mode": mode,
                    "success_rate": stats["success_rate"],
                    "mean_env_steps": stats["mean_env_steps"],
                    "mean_provider_calls": stats["mean_provider_calls"],
                }
            )
    return rows


def sweep_degradation(
    scenarios: list[tuple[Scenario, SkillLibrary]],
    config: RuntimeConfig,
    rates,
    modes=DEFAULT_MODES,
    seeds: int = DEFAULT_SEEDS,
) -> list[dict]:
    rows = []
    for rate in rates:
        traces = []
        for scenario, library in scenarios:
            for seed in range(seeds):
                degraded = degrade_library(library, rate, seed)
                for mode in modes:
                    traces.append(run_cell(scenario, degraded, config, mode, seed))
        for mode, stats in aggregate(traces).items():
            rows.append(
                {
                    "rate": rate,
                    "mode": mode,
                    "success_rate": stats["success_rate"],
                    "mean_env_steps": stats["mean_env_steps"],
                }
            )
    return rows


def sweep_repair_budget(
    scenarios: list[tuple[Scenario, SkillLibrary]],
    config: RuntimeConfig,
    budgets,
    modes=("grasp",),
    seeds: int = DEFAULT_SEEDS,
) -> list[dict]:
    rows = []
    for budget in budgets:
        traces = run_corpus(scenarios, replace(config, r_max=budget), modes, seeds)
        for mode, stats in aggregate(traces).items():
            rows.append(
                {
                    "R_max": budget,
                    "mode": mode,
                    "success_rate": stats["success_rate"],
                    "mean_env_steps": stats["mean_env_steps"],
                }
            )
    return rows


def sweep_memory_size(
    scenarios: list[tuple[Scenario, SkillLibrary]],
    config: RuntimeConfig,
    sizes,
    modes=("grasp",),
    seeds: int = DEFAULT_SEEDS,
) -> list[dict]:
    rows = []
    for size in sizes:
        traces = run_corpus(scenarios, replace(config, k=size), modes, seeds)
        for mode, stats in aggregate(traces).items():
            rows.append(
                {
                    "k": size,
                    "mode": mode,
                    "success_rate": stats["success_rate"],
                    "mean_env_steps": stats["mean_env_steps"],
                }
            )
    return rows


# --- delimited output ---------------------------------------------------------

def write_rows_csv(rows: list[dict], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        path.write_text("", encoding="utf-8")
        return path
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    return path


def write_summary_json(table: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(table, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def format_table(table: dict[str, dict]) -> str:
    headers = [
        "mode",
        "episodes",
        "success%",
        "steps",
        "re-exec",
        "provider",
        "repairs",
        "direct/local/replan/fallback/fail",
    ]
    lines = ["  ".join(f"{h:>10s}" for h in headers)]
    for mode in sorted(table):
        s = table[mode]
        esc = s["escalation"]
        breakdown = "/".join(
            str(esc[k]) for k in ("direct", "local_repair", "replan", "fallback", "fail")
        )
        lines.append(
            "  ".join(
                [
                    f"{mode:>10s}",
                    f"{s['episodes']:>10d}",
                    f"{s['success_rate']:>10.1f}",
                    f"{s['mean_env_steps']:>10.2f}",
                    f"{s['mean_re_executed']:>10.2f}",
                    f"{s['mean_provider_calls']:>10.2f}",
                    f"{s['mean_repairs']:>10.2f}",
                    f"{breakdown:>34s}",
                ]
            )
        )
    return "\n".join(lines)


def corpus_with_libraries(corpus_dir, library_override=None) -> list[tuple[Scenario, SkillLibrary]]:
    out = []
    for scenario, path in load_corpus(corpus_dir):
        library = library_override or load_scenario_library(scenario, path)
        out.append((scenario, library))
    return out
