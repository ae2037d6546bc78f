"""Project configuration: one JSON file per tuning project directory.

A project directory holds the config, the requirements document, the
event log, generated sources, and the exports tree. Everything the run
needs is named here so a run is reproducible from the directory alone.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ConfigInvalid, DirNotEmpty, NotAProject
from .scenarios import SCENARIOS
from .tuning import STRATEGIES

CONFIG_NAME = "project.json"
REQUIREMENTS_NAME = "requirements.md"

MODES = ("multi", "solo")
BRAINS = ("scripted", "remote")


@dataclass
class ProjectConfig:
    project_name: str = ""
    mode: str = "multi"
    scenario: str | None = "baseline"
    strategy: str | None = None
    seed: int = 0
    backend: str = "simulated"
    brain: str = "scripted"
    max_ticks: int = 400
    compact_threshold: int | None = None
    lossy_compaction: bool | None = None
    report_period: int = 50
    idle_patience: int = 3
    stall_window: int = 5
    in_flight_limit: int = 2
    tolerance: float = 1e-12
    gpus_per_job: int | None = None
    initial_pg: int | None = None
    render_figures: bool = True
    requirements_path: str = REQUIREMENTS_NAME
    budget_override: dict | None = None
    endpoint_url: str = ""
    endpoint_model: str = ""

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigInvalid(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.scenario is not None and self.scenario not in SCENARIOS:
            raise ConfigInvalid(f"unknown scenario {self.scenario!r}; "
                                f"known: {sorted(SCENARIOS)}")
        if self.strategy is not None and self.strategy not in STRATEGIES:
            raise ConfigInvalid(f"unknown strategy {self.strategy!r}; "
                                f"known: {sorted(STRATEGIES)}")
        if self.scenario is not None and self.strategy is not None:
            raise ConfigInvalid("scenario and strategy are exclusive; "
                                "clear the scenario to free-search")
        if self.scenario is None and self.strategy is None:
            raise ConfigInvalid("either a scenario or a strategy is required")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigInvalid(f"seed must be a non-negative integer, got {self.seed!r}")
        if self.backend != "simulated":
            raise ConfigInvalid(
                f"the run loop drives the simulated backend only, got "
                f"{self.backend!r}; local and remote execution are "
                f"single-job library calls")
        if self.brain not in BRAINS:
            raise ConfigInvalid(f"brain must be one of {BRAINS}, got {self.brain!r}")
        if self.brain == "remote" and not self.endpoint_url:
            raise ConfigInvalid("remote brain requires endpoint_url")
        if self.max_ticks <= 0:
            raise ConfigInvalid("max_ticks must be positive")
        if self.report_period <= 0:
            raise ConfigInvalid("report_period must be positive")
        if self.idle_patience < 0:
            raise ConfigInvalid("idle_patience must be >= 0")
        if self.in_flight_limit <= 0:
            raise ConfigInvalid("in_flight_limit must be positive")
        if self.tolerance is not None and self.tolerance <= 0:
            raise ConfigInvalid("tolerance must be positive")
        if self.compact_threshold is not None and self.compact_threshold <= 0:
            raise ConfigInvalid("compact_threshold must be positive")
        if self.gpus_per_job is not None and self.gpus_per_job <= 0:
            raise ConfigInvalid("gpus_per_job must be positive")
        if self.initial_pg is not None and self.initial_pg <= 0:
            raise ConfigInvalid("initial_pg must be positive")
        if self.budget_override is not None:
            required = {"min", "reference", "max"}
            if set(self.budget_override) != required:
                raise ConfigInvalid(
                    f"budget_override needs exactly the keys {sorted(required)}")


def load_config(path: str | Path) -> ProjectConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise NotAProject(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigInvalid(f"{path} must hold a JSON object")
    known = {f for f in ProjectConfig.__dataclass_fields__}
    unknown = set(raw) - known
    if unknown:
        raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
    config = ProjectConfig(**raw)
    config.validate()
    return config


def save_config(config: ProjectConfig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(asdict(config), indent=2) + "\n", encoding="utf-8")
    return path


def bundled_requirements_text() -> str:
    return (resources.files("vibetuner") / "fixtures" / "requirements.md") \
        .read_text(encoding="utf-8")


def init_project(directory: str | Path, config: ProjectConfig,
                 force: bool = False) -> Path:
    """Create a project directory: config, requirements doc, exports tree."""
    directory = Path(directory)
    config.validate()
    config_path = directory / CONFIG_NAME
    if config_path.exists() and not force:
        raise DirNotEmpty(f"{directory} already holds a project "
                          f"(use force to overwrite the config)")
    directory.mkdir(parents=True, exist_ok=True)
    save_config(config, config_path)
    requirements = directory / config.requirements_path
    if not requirements.exists():
        requirements.write_text(bundled_requirements_text(), encoding="utf-8")
    (directory / "exports").mkdir(exist_ok=True)
    return directory


def open_project(directory: str | Path) -> tuple[Path, ProjectConfig]:
    directory = Path(directory)
    config_path = directory / CONFIG_NAME
    if not config_path.is_file():
        raise NotAProject(f"{directory} has no {CONFIG_NAME}")
    return directory, load_config(config_path)
