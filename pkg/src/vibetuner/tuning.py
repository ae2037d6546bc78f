"""Candidate versions, the append-only change log, and parameter search.

The change log never rewrites history: every registration and every
result lands as a new snapshot with a tick stamp, and the current status
of a version is its latest snapshot. SOTA is always recomputed from
snapshots (highest-GFLOPS Valid candidate, ties to the earliest
registration), so an invalidation automatically reverts it.
"""

from __future__ import annotations

import csv
import itertools
import json
import random
from dataclasses import dataclass, field, replace
from decimal import Decimal
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable

from .errors import (
    DuplicateVersion,
    ExhaustedSpace,
    IllegalTransition,
    UnknownStrategy,
    UnknownVersion,
)


class Status(str, Enum):
    PENDING = "Pending"
    VALID = "Valid"
    INVALID = "Invalid"
    FAILED = "Failed"


@dataclass(frozen=True)
class Metrics:
    gflops: float
    efficiency_pct: float
    error_norm: float
    elapsed_s: Decimal
    gpus: int


@dataclass(frozen=True, eq=False)
class CandidateVersion:
    version: str
    parent: str | None
    params: dict
    label: str
    agent: str
    source_ref: str = ""
    status: Status = Status.PENDING
    metrics: Metrics | None = None


@dataclass(frozen=True, eq=False)
class LogEntry:
    tick: int
    candidate: CandidateVersion


# legal status moves; everything else raises IllegalTransition
_TRANSITIONS = {
    Status.PENDING: {Status.VALID, Status.INVALID, Status.FAILED},
    Status.VALID: {Status.INVALID},
    Status.INVALID: set(),
    Status.FAILED: set(),
}


class ChangeLog:
    def __init__(self, tolerance: float | None = None):
        self.tolerance = tolerance
        self.entries: list[LogEntry] = []
        self._latest: dict[str, CandidateVersion] = {}
        self._registered_at: dict[str, int] = {}
        self._order: list[str] = []

    def __len__(self) -> int:
        return len(self.entries)

    def versions(self) -> list[str]:
        return list(self._order)

    def current(self, version: str) -> CandidateVersion:
        candidate = self._latest.get(version)
        if candidate is None:
            raise UnknownVersion(version)
        return candidate

    def has(self, version: str) -> bool:
        return version in self._latest

    def registered_tick(self, version: str) -> int:
        if version not in self._registered_at:
            raise UnknownVersion(version)
        return self._registered_at[version]

    def register(self, candidate: CandidateVersion, tick: int) -> CandidateVersion:
        """Append a Pending snapshot for a new version."""
        if candidate.version in self._latest:
            raise DuplicateVersion(candidate.version)
        if candidate.parent is not None and candidate.parent not in self._latest:
            raise UnknownVersion(f"parent {candidate.parent}")
        snapshot = replace(candidate, status=Status.PENDING, metrics=None)
        self.entries.append(LogEntry(tick=tick, candidate=snapshot))
        self._latest[snapshot.version] = snapshot
        self._registered_at[snapshot.version] = tick
        self._order.append(snapshot.version)
        return snapshot

    def record_result(self, version: str, metrics: Metrics | None,
                      verdict: Status | str, tick: int) -> CandidateVersion:
        """Append a result snapshot; enforces the legal status transitions.

        A Valid verdict requires metrics, and when the log carries a
        tolerance the error norm must sit within it.
        """
        verdict = Status(verdict)
        current = self.current(version)
        if verdict not in _TRANSITIONS[current.status]:
            raise IllegalTransition(f"{current.status.value} -> {verdict.value} for v{version}")
        if verdict is Status.VALID:
            if metrics is None:
                raise IllegalTransition("Valid verdict requires metrics")
            if self.tolerance is not None and metrics.error_norm > self.tolerance:
                raise IllegalTransition(
                    f"error norm {metrics.error_norm} above tolerance {self.tolerance}")
        snapshot = replace(current, status=verdict,
                           metrics=metrics if metrics is not None else current.metrics)
        self.entries.append(LogEntry(tick=tick, candidate=snapshot))
        self._latest[version] = snapshot
        return snapshot

    def sota(self) -> CandidateVersion | None:
        """Highest-GFLOPS Valid candidate; ties keep the earliest tick."""
        best: CandidateVersion | None = None
        for version in self._order:
            candidate = self._latest[version]
            if candidate.status is not Status.VALID or candidate.metrics is None:
                continue
            if best is None or candidate.metrics.gflops > best.metrics.gflops:
                best = candidate
        return best

    def records(self) -> Iterable[dict]:
        for entry in self.entries:
            c = entry.candidate
            yield {
                "tick": entry.tick,
                "version": c.version,
                "parent": c.parent,
                "params": c.params,
                "label": c.label,
                "agent": c.agent,
                "status": c.status.value,
                "gflops": c.metrics.gflops if c.metrics else None,
                "efficiency_pct": c.metrics.efficiency_pct if c.metrics else None,
                "error_norm": c.metrics.error_norm if c.metrics else None,
            }


def export_changelog(changelog: ChangeLog, dest: str | Path) -> list[Path]:
    """Line-delimited snapshots plus a one-row-per-version CSV summary."""
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    jsonl = dest / "changelog.jsonl"
    with open(jsonl, "w", encoding="utf-8") as fh:
        for record in changelog.records():
            fh.write(json.dumps(record, default=str) + "\n")
    summary = dest / "changelog.csv"
    sota = changelog.sota()
    with open(summary, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["version", "label", "status", "gflops",
                         "efficiency_pct", "error_norm", "agent", "is_sota"])
        for version in changelog.versions():
            c = changelog.current(version)
            writer.writerow([
                c.version, c.label, c.status.value,
                c.metrics.gflops if c.metrics else "",
                c.metrics.efficiency_pct if c.metrics else "",
                c.metrics.error_norm if c.metrics else "",
                c.agent,
                "1" if sota is not None and sota.version == c.version else "0",
            ])
    return [jsonl, summary]


# --- parameter search -------------------------------------------------------

@dataclass(frozen=True)
class ParameterSpace:
    """Ordered discrete lattice: name -> tuple of allowed values."""

    axes: tuple[tuple[str, tuple[int, ...]], ...]

    @classmethod
    def from_dict(cls, values: dict) -> "ParameterSpace":
        return cls(tuple((name, tuple(choices)) for name, choices in values.items()))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.axes)

    def choices(self, name: str) -> tuple[int, ...]:
        for axis, values in self.axes:
            if axis == name:
                return values
        raise KeyError(name)

    def size(self) -> int:
        n = 1
        for _, values in self.axes:
            n *= len(values)
        return n

    def points(self) -> Iterable[dict]:
        names = self.names
        for combo in itertools.product(*(values for _, values in self.axes)):
            yield dict(zip(names, combo))

    def key(self, params: dict) -> tuple:
        return tuple(params.get(name) for name in self.names)


def _visited(space: ParameterSpace, history) -> set[tuple]:
    if isinstance(history, ChangeLog):
        param_dicts = [history.current(v).params for v in history.versions()]
    else:
        param_dicts = list(history)
    out = set()
    for params in param_dicts:
        if all(name in params for name in space.names):
            out.add(space.key(params))
    return out


def _grid(space: ParameterSpace, visited: set[tuple], seed: int) -> dict:
    for point in space.points():
        if space.key(point) not in visited:
            return point
    raise ExhaustedSpace(f"all {space.size()} lattice points visited")


def _random(space: ParameterSpace, visited: set[tuple], seed: int) -> dict:
    unvisited = [p for p in space.points() if space.key(p) not in visited]
    if not unvisited:
        raise ExhaustedSpace(f"all {space.size()} lattice points visited")
    # seeding with the remaining count keeps the sequence a pure function
    # of (seed, history), so regenerating it from scratch is identical
    rng = random.Random(f"{seed}:{len(unvisited)}")
    return rng.choice(unvisited)


STRATEGIES: dict[str, Callable[[ParameterSpace, set, int], dict]] = {
    "grid": _grid,
    "random": _random,
}


def register_strategy(name: str,
                      fn: Callable[[ParameterSpace, set, int], dict]) -> None:
    """Plugin point for model-based searches (Bayesian, genetic, ...)."""
    STRATEGIES[name] = fn


def next_params(strategy: str, space: ParameterSpace, history, seed: int) -> dict:
    """Propose the next unvisited lattice point for the given strategy."""
    fn = STRATEGIES.get(strategy)
    if fn is None:
        raise UnknownStrategy(strategy)
    return fn(space, _visited(space, history), seed)
