import json
from pathlib import Path

import pytest

from vibetuner.config import ProjectConfig, init_project
from vibetuner.orchestrator import run_project


def run_scenario(tmp_path: Path, name: str, *, mode="multi", seed=0,
                 subdir="proj", **overrides):
    """Init a throwaway project and drive a full run; returns (summary, dir)."""
    project = tmp_path / subdir
    # Figure rendering shells out to an image tool when one is installed;
    # library-driven tests skip that unless they opt back in.
    overrides.setdefault("render_figures", False)
    config = ProjectConfig(project_name=f"{name}-{mode}-{seed}",
                           mode=mode, scenario=name, seed=seed, **overrides)
    init_project(project, config)
    summary = run_project(project, config)
    return summary, project


def read_events(project: Path) -> list[dict]:
    path = project / "events.jsonl"
    return [json.loads(line) for line in path.read_text().splitlines() if line]


def events_modulo_wall(project: Path) -> list[str]:
    stripped = []
    for record in read_events(project):
        record.pop("wall", None)
        stripped.append(json.dumps(record, sort_keys=True))
    return stripped


@pytest.fixture
def fixture_events():
    from importlib import resources
    from vibetuner.telemetry import EventLog
    path = resources.files("vibetuner") / "fixtures" / "version_history.jsonl"
    with resources.as_file(path) as p:
        return EventLog.read(p)
