"""Shared fixtures for the renderer tests.

``fixture_exports`` replays the tuning tool's bundled run history through
its real export step, so the tests exercise the renderer against exactly
the CSV layout shipping runs produce.  Only the tests do this; the
renderer package itself never imports the tuning tool.
"""

from __future__ import annotations

import csv
import shutil
from pathlib import Path

import pytest


@pytest.fixture(scope="session")
def fixture_exports(tmp_path_factory) -> Path:
    from importlib import resources

    from vibetuner.telemetry import EventLog, export_series

    out = tmp_path_factory.mktemp("exports")
    source = resources.files("vibetuner") / "fixtures" / "version_history.jsonl"
    with resources.as_file(source) as concrete:
        events = EventLog.read(concrete)
    export_series(events, "all", out)
    return out


def read_csv(path: Path) -> list[dict]:
    with path.open(newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def copy_exports(src: Path, dst: Path) -> Path:
    dst.mkdir(parents=True, exist_ok=True)
    for name in ("performance.csv", "tokens.csv", "budget.csv"):
        shutil.copy(src / name, dst / name)
    return dst
