"""skillgraph: compile typed skills into verified dependency graphs, execute
them with node-level checks, and repair failures locally instead of replanning
everything downstream."""

__version__ = "0.1.0"

from .conditions import Atom, Condition, WorldState, apply_effects, satisfies
from .graph import Edge, NodeStatus, SkillGraph, SkillNode
from .library import SkillLibrary, SkillSchema, bind_schema, load_library
from .orchestrator import RuntimeConfig, run_episode, run_flat_baseline
from .simenv import Scenario, SimEnvironment, load_scenario

__all__ = [
    "Atom",
    "Condition",
    "WorldState",
    "apply_effects",
    "satisfies",
    "Edge",
    "NodeStatus",
    "SkillGraph",
    "SkillNode",
    "SkillLibrary",
    "SkillSchema",
    "bind_schema",
    "load_library",
    "RuntimeConfig",
    "run_episode",
    "run_flat_baseline",
    "Scenario",
    "SimEnvironment",
    "load_scenario",
    "__version__",
]
