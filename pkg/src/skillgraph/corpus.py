"""The shipped scenario corpus: three families (fetch-and-place,
transform-and-place, multi-object) plus repair showcases, all built
programmatically so the harnesses can parameterize chain length and fault
position. ``write_corpus`` materializes everything under the package data
directory; the checked-in files are its output.
"""
from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from .library import SkillLibrary, load_library, parse_library
from .simenv import FaultSpec, Scenario, parse_scenario, save_scenario
from .conditions import Condition

MAX_PIPELINE_STEPS = 9

HOUSEHOLD_GRAMMAR = [
    {"pattern": "go to {obj:object}", "guard": [], "effect": ["visible(obj)"]},
    {"pattern": "go to {app:appliance}", "guard": [], "effect": ["reachable(app)"]},
    {"pattern": "go to {loc:location}", "guard": [], "effect": ["beside(loc)"]},
    {
        "pattern": "take {obj:object} from {loc:location}",
        "guard": ["visible(obj)", "at(obj,loc)"],
        "effect": ["holding(obj)", "!at(obj,loc)"],
    },
    {
        "pattern": "open {app:appliance}",
        "guard": ["closed(app)", "reachable(app)"],
        "effect": ["open(app)", "!closed(app)"],
    },
    {
        "pattern": "close {app:appliance}",
        "guard": ["open(app)", "reachable(app)"],
        "effect": ["closed(app)", "!open(app)"],
    },
    {
        "pattern": "heat {obj:object} with {app:appliance}",
        "guard": ["holding(obj)", "open(app)", "reachable(app)", "heats(app)"],
        "effect": ["hot(obj)"],
    },
    {
        "pattern": "heat {obj:object} on {app:appliance}",
        "guard": ["holding(obj)", "on(app)", "reachable(app)", "heats(app)"],
        "effect": ["hot(obj)"],
    },
    {
        "pattern": "turn on {app:appliance}",
        "guard": ["off(app)", "reachable(app)"],
        "effect": ["on(app)", "!off(app)"],
    },
    {
        "pattern": "cool {obj:object} in {app:appliance}",
        "guard": ["holding(obj)", "open(app)", "reachable(app)", "chills(app)"],
        "effect": ["cold(obj)"],
    },
    {
        "pattern": "wash {obj:object} in {app:appliance}",
        "guard": ["holding(obj)", "reachable(app)", "washes(app)"],
        "effect": ["clean(obj)"],
    },
    {
        "pattern": "put {obj:object} on {loc:location}",
        "guard": ["holding(obj)", "beside(loc)"],
        "effect": ["at(obj,loc)", "!holding(obj)"],
    },
    {
        "pattern": "stow {obj:object} in {app:appliance}",
        "guard": ["holding(obj)", "open(app)", "reachable(app)"],
        "effect": ["stowed(obj)", "!holding(obj)"],
    },
    {"pattern": "slice {obj:object}", "guard": ["holding(obj)"], "effect": ["sliced(obj)"]},
    {"pattern": "examine {obj:object}", "guard": ["visible(obj)"], "effect": ["examined(obj)"]},
    {"pattern": "water {plant:object}", "guard": ["visible(plant)"], "effect": ["grown(plant)"]},
    {"pattern": "fetch {item:object}", "guard": ["available(item)"], "effect": ["supplies_ready()"]},
    {"pattern": "assemble kit", "guard": ["supplies_ready()"], "effect": ["kit_done()"]},
]


def _scenario(**kwargs) -> Scenario:
    doc = {"format": 1, "faults": [], **kwargs}
    return parse_scenario(doc)


# --- transform-and-place family ---------------------------------------------

def potato_scenario() -> Scenario:
    """The shipped case-study world: heat a potato and place it, with a fault
    that shuts the microwave door right after the potato is picked up."""
    return _scenario(
        name="potato",
        task="heat some potato and put it on a countertop",
        library="library.json",
        objects={
            "potato": "object",
            "microwave": "appliance",
            "fridge": "appliance",
            "stove": "appliance",
            "counter1": "location",
            "counter2": "location",
        },
        init=[
            "at(potato,counter2)",
            "open(microwave)",
            "closed(fridge)",
            "off(stove)",
            "heats(microwave)",
            "heats(stove)",
            "chills(fridge)",
        ],
        goal=["hot(potato)", "at(potato,counter1)"],
        transitions=HOUSEHOLD_GRAMMAR,
        faults=[
            {
                "trigger": {"on_action": "take potato from counter2"},
                "mutation": ["!open(microwave)", "closed(microwave)"],
                "once": True,
            }
        ],
        budget=30,
    )


def potato_no_fault_scenario() -> Scenario:
    base = potato_scenario()
    return _scenario(
        name="potato-open",
        task=base.task,
        library="library.json",
        objects=dict(base.objects),
        init=base.init.to_strings(),
        goal=base.goal.to_strings(),
        transitions=HOUSEHOLD_GRAMMAR,
        budget=30,
    )


def bypass_potato_scenario() -> Scenario:
    """The fault both shuts the microwave and pre-heats the potato; with no
    door-opening skill in the library the only local fix is skipping the
    heating node."""
    return _scenario(
        name="bypass-potato",
        task="heat some potato and put it on a countertop",
        library="library-bypass.json",
        objects={
            "potato": "object",
            "microwave": "appliance",
            "fridge": "appliance",
            "stove": "appliance",
            "counter1": "location",
            "counter2": "location",
        },
        init=[
            "at(potato,counter2)",
            "open(microwave)",
            "closed(fridge)",
            "closed(stove)",
            "heats(microwave)",
            "heats(stove)",
            "chills(fridge)",
        ],
        goal=["hot(potato)", "at(potato,counter1)"],
        transitions=HOUSEHOLD_GRAMMAR,
        faults=[
            {
                "trigger": {"on_action": "take potato from counter2"},
                "mutation": ["!open(microwave)", "closed(microwave)", "hot(potato)"],
                "once": True,
            }
        ],
        budget=30,
    )


def broken_microwave_scenario() -> Scenario:
    """The microwave door is open but the magnetron is dead: heating with it
    never works, so the heating node must be substituted by the stove route."""
    return _scenario(
        name="broken-microwave",
        task="heat some potato and put it on a countertop",
        library="library.json",
        objects={
            "potato": "object",
            "microwave": "appliance",
            "fridge": "appliance",
            "stove": "appliance",
            "counter1": "location",
            "counter2": "location",
        },
        init=[
            "at(potato,counter2)",
            "open(microwave)",
            "closed(fridge)",
            "off(stove)",
            "heats(stove)",
            "chills(fridge)",
        ],
        goal=["hot(potato)", "at(potato,counter1)"],
        transitions=HOUSEHOLD_GRAMMAR,
        budget=30,
    )


# --- fetch-and-place family --------------------------------------------------

def move_scenario(obj: str, src: str, dst: str, extra_objects=(), fault=None, name=None) -> Scenario:
    objects = {obj: "object", src: "location", dst: "location"}
    for o, s in extra_objects:
        objects[o] = s
    doc = dict(
        name=name or f"move-{obj}",
        task=f"find the {obj}, pick it up and place it on the {dst}",
        library="library.json",
        objects=objects,
        init=[f"at({obj},{src})"],
        goal=[f"at({obj},{dst})"],
        transitions=HOUSEHOLD_GRAMMAR,
        budget=30,
    )
    if fault is not None:
        doc["faults"] = [fault]
    return _scenario(**doc)


def supply_run_scenario() -> Scenario:
    """Only the second supply bin is actually stocked; the fetch node must be
    rebound away from its lexicographically preferred first choice."""
    return _scenario(
        name="supply-run",
        task="fetch supplies and assemble the kit",
        library="library.json",
        objects={"bin1": "object", "bin2": "object"},
        init=["visible(bin1)", "available(bin2)"],
        goal=["kit_done()"],
        transitions=HOUSEHOLD_GRAMMAR,
        budget=20,
    )


# --- lab (rewire showcase) -----------------------------------------------------

LAB_GRAMMAR = [
    {
        "pattern": "load {sample:object} on {scale:appliance}",
        "guard": [],
        "effect": ["loaded(sample)"],
    },
    {
        "pattern": "measure {sample:object} with {scale:appliance}",
        "guard": [
            "loaded(sample)",
            "calibrated(scale)",
            "leveled(scale)",
            "powered(scale)",
            "bench_clear()",
        ],
        "effect": ["measured(sample)"],
    },
    {
        "pattern": "tare {scale:appliance}",
        "guard": [],
        "effect": [
            "tare_set(scale)",
            "calibrated(scale)",
            "leveled(scale)",
            "powered(scale)",
            "bench_clear()",
        ],
    },
    {"pattern": "calibrate {scale:appliance}", "guard": [], "effect": ["calibrated(scale)"]},
    {"pattern": "level {scale:appliance}", "guard": [], "effect": ["leveled(scale)"]},
    {"pattern": "power {scale:appliance}", "guard": [], "effect": ["powered(scale)"]},
    {"pattern": "clear bench", "guard": [], "effect": ["bench_clear()"]},
]


def lab_library_doc() -> dict:
    return {
        "predicates": [
            {"name": "loaded", "arity": 1, "sorts": ["object"]},
            {"name": "measured", "arity": 1, "sorts": ["object"]},
            {"name": "tare_set", "arity": 1, "sorts": ["appliance"]},
            {"name": "calibrated", "arity": 1, "sorts": ["appliance"]},
            {"name": "leveled", "arity": 1, "sorts": ["appliance"]},
            {"name": "powered", "arity": 1, "sorts": ["appliance"]},
            {"name": "bench_clear", "arity": 0, "sorts": []},
        ],
        "skills": [
            {
                "name": "load-sample",
                "description": "load the sample onto the scale platform",
                "params": [["sample", "object"], ["scale", "appliance"]],
                "pre": [],
                "eff": ["loaded(sample)"],
                "base_confidence": 0.9,
                "actions": ["load {sample} on {scale}"],
            },
            {
                "name": "measure-sample",
                "description": "measure the loaded sample on a calibrated scale",
                "params": [["sample", "object"], ["scale", "appliance"]],
                "pre": [
                    "loaded(sample)",
                    "calibrated(scale)",
                    "leveled(scale)",
                    "powered(scale)",
                    "bench_clear()",
                ],
                "eff": ["measured(sample)"],
                "base_confidence": 0.85,
                "actions": ["measure {sample} with {scale}"],
            },
            {
                "name": "tare-scale",
                "description": "tare the scale so it reads calibrated, leveled and powered over a clear bench",
                "params": [["scale", "appliance"]],
                "pre": [],
                "eff": [
                    "tare_set(scale)",
                    "calibrated(scale)",
                    "leveled(scale)",
                    "powered(scale)",
                    "bench_clear()",
                ],
                "base_confidence": 0.8,
                "actions": ["tare {scale}"],
            },
            {
                "name": "calibrate-scale",
                "description": "run the balance readout adjustment",
                "params": [["scale", "appliance"]],
                "pre": [],
                "eff": ["calibrated(scale)"],
                "base_confidence": 0.85,
                "actions": ["calibrate {scale}"],
            },
            {
                "name": "level-scale",
                "description": "adjust the balance feet until even",
                "params": [["scale", "appliance"]],
                "pre": [],
                "eff": ["leveled(scale)"],
                "base_confidence": 0.85,
                "actions": ["level {scale}"],
            },
            {
                "name": "power-scale",
                "description": "flip the balance mains switch",
                "params": [["scale", "appliance"]],
                "pre": [],
                "eff": ["powered(scale)"],
                "base_confidence": 0.85,
                "actions": ["power {scale}"],
            },
            {
                "name": "clear-bench",
                "description": "sweep stray items off the workbench",
                "params": [],
                "pre": [],
                "eff": ["bench_clear()"],
                "base_confidence": 0.85,
                "actions": ["clear bench"],
            },
        ],
    }


def recalibrate_scenario() -> Scenario:
    """A bump after the first action knocks out every scale invariant; the
    measuring node's soft precedence over the taring node must be reversed."""
    return _scenario(
        name="recalibrate",
        task="measure the sample and tare the scale",
        library="library-lab.json",
        objects={"sample": "object", "scale": "appliance"},
        init=[
            "calibrated(scale)",
            "leveled(scale)",
            "powered(scale)",
            "bench_clear()",
        ],
        goal=["measured(sample)", "tare_set(scale)"],
        transitions=LAB_GRAMMAR,
        faults=[
            {
                "trigger": {"at_step": 1},
                "mutation": [
                    "!calibrated(scale)",
                    "!leveled(scale)",
                    "!powered(scale)",
                    "!bench_clear()",
                ],
                "once": True,
            }
        ],
        budget=20,
    )


# --- transform-and-place pipelines (parameterized chain length) ---------------

def pipeline_grammar(steps: int) -> list[dict]:
    grammar = [
        {"pattern": "go to {obj:object}", "guard": [], "effect": ["visible(obj)"]},
        {"pattern": "go to {loc:location}", "guard": [], "effect": ["beside(loc)"]},
        {
            "pattern": "take {obj:object} from {loc:location}",
            "guard": ["visible(obj)", "at(obj,loc)"],
            "effect": ["holding(obj)", "!at(obj,loc)"],
        },
        {
            "pattern": "put {obj:object} on {loc:location}",
            "guard": ["holding(obj)", "beside(loc)"],
            "effect": ["at(obj,loc)", "!holding(obj)"],
        },
        {
            "pattern": "prep {tool:object}",
            "guard": ["intact(tool)"],
            "effect": ["prepped(tool)"],
        },
    ]
    for i in range(1, steps + 1):
        grammar.append(
            {
                "pattern": f"work {{obj:object}} step{i} with {{tool:object}}",
                "guard": ["holding(obj)", f"stage{i - 1}(obj)", "prepped(tool)"],
                "effect": [f"stage{i}(obj)"],
            }
        )
    return grammar


def pipeline_library_doc(steps: int = MAX_PIPELINE_STEPS) -> dict:
    predicates = [
        {"name": "at", "arity": 2, "sorts": ["object", "location"]},
        {"name": "visible", "arity": 1, "sorts": ["object"]},
        {"name": "holding", "arity": 1, "sorts": ["object"]},
        {"name": "beside", "arity": 1, "sorts": ["location"]},
        {"name": "prepped", "arity": 1, "sorts": ["object"]},
        {"name": "intact", "arity": 1, "sorts": ["object"]},
    ]
    for i in range(steps + 1):
        predicates.append({"name": f"stage{i}", "arity": 1, "sorts": ["object"]})
    skills = [
        {
            "name": "find-object",
            "description": "find the widget and walk over to it",
            "params": [["obj", "object"]],
            "pre": [],
            "eff": ["visible(obj)"],
            "output_slots": [["found", "object"]],
            "base_confidence": 0.9,
            "actions": ["go to {obj}"],
        },
        {
            "name": "pick-up",
            "description": "pick up the widget so you can work it and place it",
            "params": [["obj", "object"], ["src", "location"]],
            "pre": ["visible(obj)", "at(obj,src)"],
            "eff": ["holding(obj)", "!at(obj,src)"],
            "output_slots": [["held", "object"]],
            "base_confidence": 0.85,
            "actions": ["take {obj} from {src}"],
        },
        {
            "name": "place-object",
            "description": "place the finished widget down on the bench",
            "params": [["obj", "object"], ["target", "location"]],
            "pre": ["holding(obj)"],
            "eff": ["at(obj,target)", "!holding(obj)"],
            "input_slots": [["item", "object"]],
            "base_confidence": 0.9,
            "actions": ["go to {target}", "put {obj} on {target}"],
        },
        {
            "name": "prep-tool",
            "description": "prepare the machining jig before any processing can run",
            "params": [["tool", "object"]],
            "pre": ["intact(tool)"],
            "eff": ["prepped(tool)"],
            "base_confidence": 0.8,
            "actions": ["prep {tool}"],
        },
    ]
    for i in range(1, steps + 1):
        skills.append(
            {
                "name": f"work-step{i}",
                "description": f"apply process step{i} to the held piece using the prepped jig",
                "params": [["obj", "object"], ["tool", "object"]],
                "pre": ["holding(obj)", f"stage{i - 1}(obj)", "prepped(tool)"],
                "eff": [f"stage{i}(obj)"],
                "base_confidence": 0.8,
                "actions": [f"work {{obj}} step{i} with {{tool}}"],
            }
        )
    return {"predicates": predicates, "skills": skills}


def chain_scenario(length: int, fault_step: int | None = None) -> Scenario:
    """A transform-and-place chain of ``length`` skill nodes:
    find, pick, work-step1..work-stepM, place (so M = length - 3).

    ``fault_step`` = j injects a tool fault that trips work-stepj's
    precondition right before it runs.
    """
    if not 4 <= length <= MAX_PIPELINE_STEPS + 3:
        raise ValueError(f"chain length must lie in 4..{MAX_PIPELINE_STEPS + 3}")
    steps = length - 3
    doc = dict(
        name=f"pipeline-{length:02d}",
        task=f"find the widget, pick it up, work it through to step{steps}, and place it on the bench",
        library="library-pipeline.json",
        objects={"widget": "object", "tool": "object", "table": "location", "bench": "location"},
        init=["at(widget,table)", "stage0(widget)", "prepped(tool)", "intact(tool)"],
        goal=["at(widget,bench)", f"stage{steps}(widget)"],
        transitions=pipeline_grammar(steps),
        budget=40,
    )
    if fault_step is not None:
        doc["faults"] = [chain_fault(fault_step).to_dict()]
    return _scenario(**doc)


def chain_fault(fault_step: int) -> FaultSpec:
    """Un-prep the tool right before work-step ``fault_step`` runs."""
    if fault_step == 1:
        trigger = "take widget from table"
    else:
        trigger = f"work widget step{fault_step - 1} with tool"
    return FaultSpec(
        mutation=Condition.of("!prepped(tool)"),
        on_action=trigger,
        once=True,
    )


def dual_stow_scenario(fault: bool = True) -> Scenario:
    """Multi-object: stow two items in the crate; a fault may shut the crate
    between the two stows, forcing a local door-opening insert."""
    doc = dict(
        name="dual-stow",
        task="find the vase and the book and stow both in the crate",
        library="library.json",
        objects={
            "vase": "object",
            "book": "object",
            "crate": "appliance",
            "shelf1": "location",
            "shelf2": "location",
        },
        init=["at(vase,shelf1)", "at(book,shelf2)", "open(crate)"],
        goal=["stowed(vase)", "stowed(book)"],
        transitions=HOUSEHOLD_GRAMMAR,
        budget=30,
    )
    if fault:
        doc["faults"] = [
            {
                "trigger": {"on_action": "stow book in crate"},
                "mutation": ["!open(crate)", "closed(crate)"],
                "once": True,
            }
        ]
    return _scenario(**doc)


def dual_move_scenario() -> Scenario:
    return _scenario(
        name="dual-move",
        task="find the cup and the plate, pick each up and place both on the rack",
        library="library.json",
        objects={
            "cup": "object",
            "plate": "object",
            "rack": "location",
            "table": "location",
        },
        init=["at(cup,table)", "at(plate,table)"],
        goal=["at(cup,rack)", "at(plate,rack)"],
        transitions=HOUSEHOLD_GRAMMAR,
        budget=30,
    )


# --- libraries ----------------------------------------------------------------

DISTRACTOR_SKILLS = [
    {
        "name": "teleport-object",
        "description": "teleport items instantly across the room",
        "params": [["obj", "object"], ["target", "location"]],
        "pre": [],
        "eff": ["at(obj,target)"],
        "base_confidence": 0.95,
        "actions": ["teleport {obj} onto {target}"],
    },
    {
        "name": "conjure-object",
        "description": "conjure items straight into your hand",
        "params": [["obj", "object"]],
        "pre": [],
        "eff": ["visible(obj)", "holding(obj)"],
        "base_confidence": 0.95,
        "actions": ["conjure {obj}"],
    },
    {
        "name": "flash-heat",
        "description": "flash heating ray gets things hot by magic",
        "params": [["obj", "object"]],
        "pre": [],
        "eff": ["hot(obj)"],
        "base_confidence": 0.95,
        "actions": ["flash {obj}"],
    },
    {
        "name": "instant-chill",
        "description": "chill ray freezes things by magic",
        "params": [["obj", "object"]],
        "pre": [],
        "eff": ["cold(obj)"],
        "base_confidence": 0.95,
        "actions": ["chill {obj}"],
    },
    {
        "name": "snap-wash",
        "description": "snap fingers; grime vanishes by magic",
        "params": [["obj", "object"]],
        "pre": [],
        "eff": ["clean(obj)"],
        "base_confidence": 0.95,
        "actions": ["snap {obj}"],
    },
]


def _main_library_doc() -> dict:
    text = resources.files("skillgraph.data").joinpath("library.json").read_text("utf-8")
    return json.loads(text)


def household_library() -> SkillLibrary:
    return parse_library(_main_library_doc())


def distractor_library_doc() -> dict:
    doc = _main_library_doc()
    doc["skills"] = doc["skills"] + DISTRACTOR_SKILLS
    return doc


def bypass_library_doc() -> dict:
    doc = _main_library_doc()
    doc["skills"] = [s for s in doc["skills"] if s["name"] != "open-receptacle"]
    return doc


# --- corpus manifest ------------------------------------------------------------

def corpus_scenarios() -> list[Scenario]:
    out = [
        potato_scenario(),
        potato_no_fault_scenario(),
        bypass_potato_scenario(),
        broken_microwave_scenario(),
        move_scenario("vase", "table", "shelf"),
        move_scenario("book", "desk", "shelf"),
        move_scenario("pan", "stovetop", "rack"),
        supply_run_scenario(),
        recalibrate_scenario(),
        dual_stow_scenario(),
        dual_move_scenario(),
    ]
    for length in range(4, MAX_PIPELINE_STEPS + 4):
        out.append(chain_scenario(length, fault_step=max(1, (length - 3) // 2)))
    return out


def distractor_corpus() -> list[Scenario]:
    """Fetch-and-place tasks whose library carries high-confidence magic
    skills the environment does not implement."""
    cells = [
        ("vase", "table", "shelf"),
        ("book", "desk", "shelf"),
        ("pan", "stovetop", "rack"),
        ("cup", "table", "rack"),
        ("plate", "counter1", "rack"),
        ("bowl", "counter2", "shelf"),
        ("jar", "pantry", "table"),
        ("fork", "drawer", "rack"),
        ("mug", "desk", "counter1"),
        ("tray", "oven-side", "table"),
    ]
    out = []
    for obj, src, dst in cells:
        scenario = move_scenario(obj, src, dst, name=f"distract-{obj}")
        doc = {
            **{
                "format": 1,
                "name": scenario.name,
                "task": scenario.task,
                "library": "library-distractors.json",
                "objects": dict(scenario.objects),
                "init": scenario.init.to_strings(),
                "goal": scenario.goal.to_strings(),
                "transitions": HOUSEHOLD_GRAMMAR,
                "budget": 30,
            }
        }
        out.append(parse_scenario(doc))
    return out


def write_corpus(data_dir) -> list[Path]:
    """Materialize every shipped library and scenario file."""
    data_dir = Path(data_dir)
    corpus_dir = data_dir / "corpus"
    corpus_dir.mkdir(parents=True, exist_ok=True)
    written = []

    for name, doc in (
        ("library-pipeline.json", pipeline_library_doc()),
        ("library-lab.json", lab_library_doc()),
        ("library-distractors.json", distractor_library_doc()),
        ("library-bypass.json", bypass_library_doc()),
    ):
        path = data_dir / name
        path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        written.append(path)

    for scenario in corpus_scenarios():
        if scenario.name == "potato":
            path = data_dir / "potato.scenario"
        else:
            path = corpus_dir / f"{scenario.name}.scenario"
        fixed = scenario
        if scenario.library_ref and scenario.name != "potato":
            fixed = parse_scenario(
                {
                    **{
                        "format": 1,
                        "name": scenario.name,
                        "task": scenario.task,
                        "library": "../" + scenario.library_ref,
                        "objects": dict(scenario.objects),
                        "init": scenario.init.to_strings(),
                        "goal": scenario.goal.to_strings(),
                        "transitions": [
                            {
                                "pattern": t.pattern,
                                "guard": t.guard.to_strings(),
                                "effect": t.effect.to_strings(),
                            }
                            for t in scenario.transitions
                        ],
                        "faults": [f.to_dict() for f in scenario.faults],
                        "budget": scenario.budget,
                    }
                }
            )
        save_scenario(fixed, path)
        written.append(path)
    return written


def data_path(name: str) -> Path:
    """Path of a shipped data file (library or scenario)."""
    return Path(str(resources.files("skillgraph.data").joinpath(name)))


def load_scenario_library(scenario: Scenario, scenario_path=None) -> SkillLibrary:
    """Resolve a scenario's library reference relative to its file, falling
    back to the shipped household library."""
    if scenario.library_ref is None:
        return household_library()
    if scenario_path is not None:
        candidate = Path(scenario_path).parent / scenario.library_ref
        if candidate.exists():
            return load_library(candidate)
    name = Path(scenario.library_ref).name
    return load_library(data_path(name))
