"""Command line entry points: run one episode, benchmark a corpus, inspect
traces, and validate data files. Bench and trace reports write CSV/JSON plus
rendered PNG figures when an output directory is given."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench as bench_mod
from . import plots
from .compiler import HttpPlanner, RuleBasedPlanner
from .corpus import load_scenario_library
from .graph import find_cycle, graph_from_dict
from .library import LibraryFormatError, load_library
from .memory import MemoryStore, append_memory, load_memory
from .orchestrator import MODES, ConfigError, RuntimeConfig, run_episode
from .repair import HttpRepairAdvisor
from .retrieval import (
    CalibrationState,
    append_calibration,
    load_calibration,
    update_calibration,
)
from .simenv import ScenarioError, load_scenario
from .trace import TraceError, escalation_histogram, escalation_layer, load_trace


def _load_config(args) -> RuntimeConfig:
    config = RuntimeConfig.from_file(args.config) if args.config else RuntimeConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "precedence_support", None) is not None:
        overrides["precedence_support"] = args.precedence_support
    if getattr(args, "conf_weights", None) is not None:
        parts = [float(x) for x in args.conf_weights.split(",")]
        if len(parts) != 4:
            raise ConfigError("--conf-weights takes four comma-separated reals")
        overrides["conf_weights"] = tuple(parts)
    if getattr(args, "conf_bias", None) is not None:
        overrides["conf_bias"] = args.conf_bias
    if overrides:
        from dataclasses import replace

        config = replace(config, **overrides)
    return config


def _provider_for(args, library):
    if getattr(args, "endpoint", None):
        return HttpPlanner(args.endpoint)
    return RuleBasedPlanner(library)


def cmd_run(args) -> int:
    scenario_path = Path(args.scenario)
    if not scenario_path.exists():
        print(f"error: scenario not found: {scenario_path}", file=sys.stderr)
        return 2
    try:
        scenario = load_scenario(scenario_path)
        library = (
            load_library(args.library)
            if args.library
            else load_scenario_library(scenario, scenario_path)
        )
        config = _load_config(args)
    except (ScenarioError, LibraryFormatError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    store = MemoryStore()
    if args.memory and Path(args.memory).exists():
        store = load_memory(args.memory)
    calibration = CalibrationState(
        weights=config.conf_weights, bias=config.conf_bias, eta=config.eta
    )
    if args.calibration and Path(args.calibration).exists():
        calibration = load_calibration(args.calibration)

    advisor = HttpRepairAdvisor(args.repair_advisor) if args.repair_advisor else None
    outcome = run_episode(
        scenario,
        library,
        config,
        mode=args.mode,
        store=store,
        calibration=calibration,
        provider=_provider_for(args, library),
        repair_advisor=advisor,
    )
    result = outcome.result

    trace_path = Path(args.out) if args.out else Path(f"{scenario.name}.trace.jsonl")
    outcome.trace.save(trace_path)

    if args.memory:
        summary_record = store.records()[-1] if len(store) else None
        if summary_record is not None:
            append_memory(args.memory, summary_record)
    if args.calibration:
        updated = update_calibration(
            calibration, outcome.raw_score, result.outcome == "success"
        )
        append_calibration(args.calibration, updated)

    print(
        f"{scenario.name}: {result.outcome} in {result.env_steps} env steps "
        f"(mode={args.mode}, route={result.route}, repairs={len(result.repair_events)}, "
        f"replans={result.replan_count})"
    )
    print(f"trace: {trace_path}")
    return 0 if result.outcome == "success" else 1


def cmd_bench(args) -> int:
    corpus_dir = Path(args.corpus)
    if not corpus_dir.is_dir():
        print(f"error: corpus directory not found: {corpus_dir}", file=sys.stderr)
        return 2
    try:
        config = _load_config(args)
        library_override = load_library(args.library) if args.library else None
        scenarios = bench_mod.corpus_with_libraries(corpus_dir, library_override)
    except (ScenarioError, LibraryFormatError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if not scenarios:
        print(f"error: no .scenario files under {corpus_dir}", file=sys.stderr)
        return 2

    out_dir = Path(args.out) if args.out else None
    modes = args.modes

    if args.sweep:
        key, _, span = args.sweep.partition("=")
        key = key.strip()
        lo, _, hi = span.partition(":")
        sweeps = {
            "M": bench_mod.sweep_retrieval_width,
            "R_max": bench_mod.sweep_repair_budget,
            "k": bench_mod.sweep_memory_size,
        }
        if key not in sweeps or not (lo.isdigit() and hi.isdigit()):
            print("error: --sweep expects M|R_max|k=<lo>:<hi>", file=sys.stderr)
            return 2
        values = list(range(int(lo), int(hi) + 1))
        rows = sweeps[key](scenarios, config, values, modes, args.seeds)
        print(f"{key:>6s} {'mode':>12s} {'success%':>9s} {'steps':>7s}")
        for r in rows:
            print(f"{r[key]:>6d} {r['mode']:>12s} {r['success_rate']:>9.1f} {r['mean_env_steps']:>7.2f}")
        if out_dir:
            slug = key.lower()
            bench_mod.write_rows_csv(rows, out_dir / f"sweep_{slug}.csv")
            plots.save_sweep_curve(
                rows, out_dir / f"sweep_{slug}.png", x_key=key,
                title=f"{key} sensitivity sweep",
            )
            print(f"wrote {out_dir / f'sweep_{slug}.csv'} and {out_dir / f'sweep_{slug}.png'}")
        return 0

    if args.degrade:
        rows = bench_mod.sweep_degradation(scenarios, config, args.degrade, modes, args.seeds)
        print(f"{'rate':>6s} {'mode':>12s} {'success%':>9s} {'steps':>7s}")
        for r in rows:
            print(f"{r['rate']:>6.2f} {r['mode']:>12s} {r['success_rate']:>9.1f} {r['mean_env_steps']:>7.2f}")
        if out_dir:
            bench_mod.write_rows_csv(rows, out_dir / "degrade.csv")
            plots.save_sweep_curve(rows, out_dir / "degrade.png", x_key="rate",
                                   title="library degradation sweep")
            print(f"wrote {out_dir / 'degrade.csv'} and {out_dir / 'degrade.png'}")
        return 0

    traces = bench_mod.run_corpus(scenarios, config, modes, args.seeds, out_dir)
    table = bench_mod.aggregate(traces)
    print(bench_mod.format_table(table))
    if out_dir:
        rows = [bench_mod.episode_row(t) for t in traces]
        bench_mod.write_rows_csv(rows, out_dir / "episodes.csv")
        bench_mod.write_summary_json(table, out_dir / "summary.json")
        plots.save_mode_bars(table, out_dir / "success_by_mode.png")
        plots.save_escalation_stack(table, out_dir / "escalation.png")
        points = [
            {
                "mode": row["mode"],
                "plan_length": _plan_length(t),
                "re_executed": row["re_executed"],
            }
            for t, row in zip(traces, rows)
            if row["re_executed"] > 0
        ]
        if points:
            plots.save_locality_scatter(points, out_dir / "locality.png")
        print(f"wrote episodes.csv, summary.json and figures under {out_dir}")
    return 0


def _plan_length(trace) -> int:
    for event in trace.events_of("compile"):
        if event.get("ok"):
            return len(event["graph"]["nodes"])
    return 0


def cmd_trace(args) -> int:
    traces = []
    for path in args.traces:
        try:
            traces.append(load_trace(path))
        except (OSError, TraceError) as exc:
            print(f"error: {path}: {exc}", file=sys.stderr)
            return 2
    if args.query == "histogram":
        hist = escalation_histogram(traces)
        total = max(1, sum(hist.values()))
        for layer, count in hist.items():
            bar = "#" * count
            print(f"{layer:>14s} {count:>5d} ({100.0 * count / total:5.1f}%) {bar}")
        if args.out:
            out_dir = Path(args.out)
            out_dir.mkdir(parents=True, exist_ok=True)
            table = {"all": {"escalation": hist}}
            bench_mod.write_summary_json(table, out_dir / "histogram.json")
            plots.save_escalation_stack(table, out_dir / "histogram.png")
            print(f"wrote {out_dir / 'histogram.json'} and {out_dir / 'histogram.png'}")
        return 0

    for trace in traces:
        head = trace.header
        result = trace.result
        print(
            f"== {head.get('scenario')} mode={head.get('mode')} seed={head.get('seed')} "
            f"config={head.get('config_hash')}"
        )
        for event in trace.events:
            kind = event["type"]
            if kind == "retrieval":
                print(f"  retrieve: {event['skills']} c_ret={event['c_ret']:.3f}")
            elif kind == "route":
                print(f"  route: {event['decision']} (budget {event['repair_budget']})")
            elif kind == "compile":
                if event.get("ok"):
                    print(f"  compile: ok ({len(event['graph']['nodes'])} nodes)")
                else:
                    print(f"  compile: FAILED ({event['diagnostic']})")
            elif kind == "node_attempt":
                print(
                    f"  node {event['node']} [{event['schema']}]: {event['outcome']} "
                    f"({event['env_steps']} steps)"
                )
            elif kind == "repair":
                print(
                    f"  repair {event['node']} ({event['failure_type']}): "
                    f"{'ok' if event['ok'] else 'escalate'}"
                    + (f" via {event['patch']['operator']}" if event.get("patch") else "")
                )
            elif kind == "replan":
                print(f"  replan #{event['count']} (discarded {event['discarded']} nodes)")
            elif kind == "fallback_action":
                print(f"  fallback: {event['action']}")
        if result:
            print(
                f"  -> {result['outcome']} in {result['env_steps']} steps "
                f"[layer: {escalation_layer(trace)}]"
            )
    return 0


def cmd_validate(args) -> int:
    path = Path(args.file)
    if not path.exists():
        print(f"error: file not found: {path}", file=sys.stderr)
        return 2
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        print(f"invalid: {path}: not JSON ({exc})")
        return 1

    kind = args.kind
    if kind == "auto":
        if isinstance(doc, dict) and {"predicates", "skills"} <= set(doc):
            kind = "library"
        elif isinstance(doc, dict) and "transitions" in doc:
            kind = "scenario"
        elif isinstance(doc, dict) and {"nodes", "edges", "goal"} <= set(doc):
            kind = "graph"
        else:
            print(f"invalid: {path}: unrecognized document shape")
            return 1

    if kind == "library":
        try:
            library = load_library(path)
        except LibraryFormatError as exc:
            print(f"invalid library: {exc}")
            return 1
        print(f"valid library: {len(library)} skills, {len(library.predicates)} predicates")
        return 0
    if kind == "scenario":
        try:
            scenario = load_scenario(path)
        except ScenarioError as exc:
            print(f"invalid scenario: {exc}")
            return 1
        print(
            f"valid scenario: {scenario.name} ({len(scenario.objects)} objects, "
            f"{len(scenario.transitions)} transitions, budget {scenario.budget})"
        )
        return 0
    try:
        graph = graph_from_dict(doc)
    except (KeyError, ValueError) as exc:
        print(f"invalid graph: {exc}")
        return 1
    cycle = find_cycle(graph)
    if cycle:
        print("invalid graph: cycle " + " -> ".join(cycle))
        return 1
    print(f"valid graph: {len(graph.nodes)} nodes, {len(graph.edges)} edges")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skillgraph",
        description="Skill-graph runtime: compile, execute, repair, benchmark.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one episode on a scenario file")
    run.add_argument("scenario", help="path to a .scenario file")
    run.add_argument("--mode", choices=MODES, default="grasp")
    run.add_argument("--library", help="skill library JSON (defaults to the scenario's)")
    run.add_argument("--config", help="runtime parameter JSON")
    run.add_argument("--memory", help="episodic memory JSONL (read and appended)")
    run.add_argument("--calibration", help="calibration state JSON (read and updated)")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--out", help="trace file path")
    run.add_argument("--endpoint", help="HTTP planner endpoint (default: rule-based)")
    run.add_argument("--repair-advisor", help="HTTP repair-advisor endpoint (optional)")
    run.add_argument("--precedence-support", type=int, help="memory precedence threshold")
    run.add_argument("--conf-weights", help="four comma-separated confidence weights")
    run.add_argument("--conf-bias", type=float, help="confidence bias term")
    run.set_defaults(func=cmd_run)

    bench = sub.add_parser("bench", help="benchmark a corpus directory")
    bench.add_argument("corpus", help="directory of .scenario files")
    bench.add_argument("--modes", nargs="+", default=list(bench_mod.DEFAULT_MODES), choices=MODES)
    bench.add_argument("--seeds", type=int, default=bench_mod.DEFAULT_SEEDS)
    bench.add_argument("--config", help="runtime parameter JSON")
    bench.add_argument("--library", help="override every scenario's library")
    bench.add_argument("--seed", type=int, help="override the config seed base")
    bench.add_argument("--sweep", help="sweep the retrieval width, e.g. M=1:8")
    bench.add_argument("--degrade", nargs="+", type=float, help="library degradation rates")
    bench.add_argument("--out", help="output directory for CSV/JSON/figures/traces")
    bench.add_argument("--precedence-support", type=int)
    bench.add_argument("--conf-weights")
    bench.add_argument("--conf-bias", type=float)
    bench.set_defaults(func=cmd_bench)

    trace = sub.add_parser("trace", help="inspect one or more trace files")
    trace.add_argument("traces", nargs="+", help="trace JSONL files")
    trace.add_argument("--query", choices=("report", "histogram"), default="report")
    trace.add_argument("--out", help="output directory for histogram JSON/PNG")
    trace.set_defaults(func=cmd_trace)

    validate = sub.add_parser("validate", help="validate a library/scenario/graph file")
    validate.add_argument("file")
    validate.add_argument("--kind", choices=("auto", "library", "scenario", "graph"), default="auto")
    validate.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
