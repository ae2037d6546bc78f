"""Agent-team auto-tuning of GPU kernels over a simulated cluster.

A requirements document defines the budget, deadlines, accuracy bar, and
prohibited libraries; a manager, an engineer, one or more generators,
and a reviewer run the generate / submit / verify / refine loop under a
deterministic tick clock, with every state change landing in one
append-only event log that exports, reports, and replays derive from.
"""

from .config import ProjectConfig, init_project, load_config, open_project
from .orchestrator import RunSummary, Orchestrator, run_project
from .requirements import RequirementSpec, parse_requirements, validate_spec
from .scenarios import Scenario, build_scenario
from .telemetry import EventLog, replay_state
from .tuning import ChangeLog, ParameterSpace, next_params, register_strategy

__version__ = "0.1.0"

__all__ = [
    "ChangeLog",
    "EventLog",
    "Orchestrator",
    "ParameterSpace",
    "ProjectConfig",
    "RequirementSpec",
    "RunSummary",
    "Scenario",
    "build_scenario",
    "init_project",
    "load_config",
    "next_params",
    "open_project",
    "parse_requirements",
    "register_strategy",
    "replay_state",
    "run_project",
    "validate_spec",
    "__version__",
]
