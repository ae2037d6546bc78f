"""Append-only telemetry: the single event log every run state derives from.

One line-delimited JSON record per event. Ticks are logical time; wall
time is recorded for audit but never used for control decisions, so two
runs with the same seed produce logs identical modulo the wall field.
Exports (CSV series, markdown report) are always derived from the log,
never from live objects, which keeps replay and live views convergent by
construction.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from pathlib import Path

from .errors import StorageFailure


class EventKind(str, Enum):
    SPAWN = "Spawn"
    TERMINATE = "Terminate"
    TOKEN_USAGE = "TokenUsage"
    COMPACTION = "Compaction"
    MESSAGE_SENT = "MessageSent"
    CANDIDATE_REGISTERED = "CandidateRegistered"
    RESULT_RECORDED = "ResultRecorded"
    JOB_SUBMITTED = "JobSubmitted"
    JOB_DONE = "JobDone"
    VIOLATION = "Violation"
    BUDGET_UPDATE = "BudgetUpdate"
    REPORT = "Report"
    PHASE_CHANGE = "PhaseChange"
    ERROR = "Error"


SYSTEM = "SYSTEM"


@dataclass(frozen=True)
class TelemetryEvent:
    seq: int
    tick: int
    wall: float
    agent: str
    kind: EventKind
    payload: dict

    def to_json(self) -> str:
        record = {
            "seq": self.seq,
            "tick": self.tick,
            "wall": self.wall,
            "agent": self.agent,
            "kind": self.kind.value,
            "payload": self.payload,
        }
        return json.dumps(record, sort_keys=False, separators=(",", ":"))


class EventLog:
    """In-memory event sequence, optionally mirrored to a durable file."""

    def __init__(self, path: str | Path | None = None):
        self.events: list[TelemetryEvent] = []
        self._path = Path(path) if path is not None else None
        self._handle = None
        if self._path is not None:
            try:
                self._path.parent.mkdir(parents=True, exist_ok=True)
                self._handle = open(self._path, "a", encoding="utf-8")
            except OSError as exc:
                raise StorageFailure(str(exc)) from exc

    def append(self, tick: int, agent: str, kind: EventKind, payload: dict | None = None) -> int:
        event = TelemetryEvent(
            seq=len(self.events),
            tick=tick,
            wall=time.time(),
            agent=agent,
            kind=kind,
            payload=payload or {},
        )
        self.events.append(event)
        if self._handle is not None:
            try:
                self._handle.write(event.to_json() + "\n")
                self._handle.flush()
            except OSError as exc:
                raise StorageFailure(str(exc)) from exc
        return event.seq

    def close(self) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None

    @staticmethod
    def read(path: str | Path) -> list[TelemetryEvent]:
        events = []
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise StorageFailure(str(exc)) from exc
        for line_no, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                events.append(TelemetryEvent(
                    seq=raw["seq"],
                    tick=raw["tick"],
                    wall=raw["wall"],
                    agent=raw["agent"],
                    kind=EventKind(raw["kind"]),
                    payload=raw["payload"],
                ))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise StorageFailure(
                    f"{path} line {line_no}: malformed event ({exc})") from exc
        return events


# --- replay ----------------------------------------------------------------

@dataclass
class AgentSnapshot:
    agent_id: str
    role: str = ""
    live: bool = True
    context_tokens: int = 0
    charged_total: int = 0
    compactions: int = 0
    token_series: list[tuple[int, int]] = field(default_factory=list)
    compaction_ticks: list[int] = field(default_factory=list)


@dataclass
class CandidateState:
    version: str
    label: str = ""
    agent: str = ""
    params: dict = field(default_factory=dict)
    registered_tick: int = 0
    latest_tick: int = 0
    status: str = "Pending"
    gflops: float | None = None
    efficiency_pct: float | None = None
    error_norm: float | None = None


@dataclass
class ReplayedState:
    agents: dict[str, AgentSnapshot] = field(default_factory=dict)
    agent_order: list[str] = field(default_factory=list)
    candidates: dict[str, CandidateState] = field(default_factory=dict)
    candidate_order: list[str] = field(default_factory=list)
    spent: Decimal = Decimal("0")
    thresholds: tuple[Decimal, Decimal, Decimal] | None = None
    budget_status: str = "UnderMin"
    phase: str = "Init"
    reason: str = ""
    violations: list[dict] = field(default_factory=list)
    published: list[str] = field(default_factory=list)
    job_count: int = 0
    message_count: int = 0

    def sota(self) -> CandidateState | None:
        best: CandidateState | None = None
        for version in self.candidate_order:
            cand = self.candidates[version]
            if cand.status != "Valid" or cand.gflops is None:
                continue
            if best is None or cand.gflops > best.gflops:
                best = cand  # ties keep the earliest-registered candidate
        return best


def replay_state(events: list[TelemetryEvent]) -> ReplayedState:
    """Reconstruct run state purely from the event log."""
    state = ReplayedState()
    for event in events:
        kind = event.kind
        p = event.payload
        if kind is EventKind.SPAWN:
            agent_id = p["agent"]
            snap = AgentSnapshot(agent_id=agent_id, role=p.get("role", ""))
            state.agents[agent_id] = snap
            state.agent_order.append(agent_id)
        elif kind is EventKind.TERMINATE:
            agent_id = p.get("agent", event.agent)
            if agent_id in state.agents:
                state.agents[agent_id].live = False
        elif kind is EventKind.TOKEN_USAGE:
            snap = state.agents.setdefault(event.agent, AgentSnapshot(event.agent))
            snap.charged_total += int(p.get("delta", 0))
            snap.context_tokens = int(p.get("total", snap.context_tokens))
            snap.token_series.append((event.tick, snap.context_tokens))
        elif kind is EventKind.COMPACTION:
            snap = state.agents.setdefault(event.agent, AgentSnapshot(event.agent))
            snap.compactions += 1
            snap.context_tokens = int(p["tokens_after"])
            snap.compaction_ticks.append(event.tick)
            snap.token_series.append((event.tick, snap.context_tokens))
        elif kind is EventKind.MESSAGE_SENT:
            state.message_count += 1
        elif kind is EventKind.CANDIDATE_REGISTERED:
            version = p["version"]
            state.candidates[version] = CandidateState(
                version=version,
                label=p.get("label", ""),
                agent=p.get("agent", event.agent),
                params=p.get("params", {}),
                registered_tick=event.tick,
                latest_tick=event.tick,
            )
            state.candidate_order.append(version)
        elif kind is EventKind.RESULT_RECORDED:
            version = p["version"]
            cand = state.candidates.setdefault(version, CandidateState(version=version))
            cand.status = p.get("verdict", cand.status)
            cand.latest_tick = event.tick
            if p.get("gflops") is not None:
                cand.gflops = float(p["gflops"])
            if p.get("efficiency_pct") is not None:
                cand.efficiency_pct = float(p["efficiency_pct"])
            if p.get("error_norm") is not None:
                cand.error_norm = float(p["error_norm"])
        elif kind is EventKind.JOB_DONE:
            state.job_count += 1
        elif kind is EventKind.VIOLATION:
            state.violations.append(dict(p))
        elif kind is EventKind.BUDGET_UPDATE:
            state.spent = Decimal(p["spent"])
            state.budget_status = p.get("status", state.budget_status)
            if "min" in p:
                state.thresholds = (Decimal(p["min"]), Decimal(p["reference"]), Decimal(p["max"]))
        elif kind is EventKind.REPORT:
            if "published" in p:
                state.published.append(p["published"])
        elif kind is EventKind.PHASE_CHANGE:
            state.phase = p.get("phase", state.phase)
            state.reason = p.get("reason", state.reason)
    return state


# --- reporting -------------------------------------------------------------

@dataclass
class ContextUsageReport:
    series: dict[str, list[tuple[int, int]]]
    markers: dict[str, list[int]]
    totals: dict[str, int]
    window: tuple[int, int] | None = None


def context_usage_report(events: list[TelemetryEvent],
                         window: int | None = None) -> ContextUsageReport:
    """Per-agent context-size series with compaction markers.

    ``window`` keeps only the trailing N ticks when given. Agents appear
    in first-spawn order.
    """
    state = replay_state(events)
    last_tick = max((e.tick for e in events), default=0)
    lo = 0 if window is None else max(0, last_tick - window + 1)

    series: dict[str, list[tuple[int, int]]] = {}
    markers: dict[str, list[int]] = {}
    totals: dict[str, int] = {}
    for agent_id in state.agent_order or list(state.agents):
        snap = state.agents[agent_id]
        series[agent_id] = [(t, v) for t, v in snap.token_series if t >= lo]
        markers[agent_id] = [t for t in snap.compaction_ticks if t >= lo]
        totals[agent_id] = snap.charged_total
    return ContextUsageReport(
        series=series, markers=markers, totals=totals,
        window=None if window is None else (lo, last_tick),
    )


def _fmt(value) -> str:
    return "" if value is None else str(value)


def export_series(events: list[TelemetryEvent], which: str,
                  dest: str | Path) -> list[Path]:
    """Write CSV series under dest; returns the paths written.

    which: "performance" | "budget" | "tokens" | "all".
    """
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    state = replay_state(events)
    written: list[Path] = []

    def performance() -> Path:
        path = dest / "performance.csv"
        sota = state.sota()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tick", "version", "gflops", "efficiency_pct", "status", "is_sota"])
            for version in state.candidate_order:
                cand = state.candidates[version]
                writer.writerow([
                    cand.latest_tick,
                    cand.version,
                    _fmt(cand.gflops),
                    _fmt(cand.efficiency_pct),
                    cand.status,
                    "1" if sota is not None and version == sota.version else "0",
                ])
        return path

    def budget() -> Path:
        path = dest / "budget.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tick", "spent_points", "min", "reference", "max"])
            for event in events:
                if event.kind is not EventKind.BUDGET_UPDATE:
                    continue
                p = event.payload
                writer.writerow([event.tick, p["spent"], p.get("min", ""),
                                 p.get("reference", ""), p.get("max", "")])
        return path

    def tokens() -> Path:
        path = dest / "tokens.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tick", "agent", "context_tokens", "compaction_flag"])
            for event in events:
                if event.kind is EventKind.TOKEN_USAGE:
                    writer.writerow([event.tick, event.agent,
                                     event.payload.get("total", ""), "0"])
                elif event.kind is EventKind.COMPACTION:
                    writer.writerow([event.tick, event.agent,
                                     event.payload["tokens_after"], "1"])
        return path

    table = {"performance": performance, "budget": budget, "tokens": tokens}
    names = list(table) if which == "all" else [which]
    for name in names:
        if name not in table:
            raise ValueError(f"unknown series: {name!r}")
        written.append(table[name]())
    return written


def render_markdown_report(events: list[TelemetryEvent], dest_dir: str | Path,
                           filename: str = "report.md") -> Path:
    """Write the run report; any images already in dest_dir/img are embedded
    by relative path."""
    dest_dir = Path(dest_dir)
    dest_dir.mkdir(parents=True, exist_ok=True)
    state = replay_state(events)
    sota = state.sota()

    lines: list[str] = ["# Tuning run report", ""]
    lines += [f"Phase: {state.phase}" + (f" ({state.reason})" if state.reason else ""), ""]

    lines += ["## Best valid result", ""]
    if sota is None:
        lines += ["No valid candidates recorded.", ""]
    else:
        eff = f"{sota.efficiency_pct:.2f}%" if sota.efficiency_pct is not None else "n/a"
        lines += [f"v{sota.version}, {sota.gflops} GFLOPS, {eff}", ""]

    lines += ["## Budget", ""]
    if state.thresholds is not None:
        lo, ref, hi = state.thresholds
        lines += [f"Spent {state.spent} points of {hi} "
                  f"(minimum line {lo}, reference {ref}); status {state.budget_status}.", ""]
    else:
        lines += [f"Spent {state.spent} points.", ""]

    lines += ["## Candidates", ""]
    if not state.candidate_order:
        lines += ["No candidates recorded.", ""]
    else:
        lines += ["| version | label | status | GFLOPS | efficiency | agent |",
                  "|---|---|---|---|---|---|"]
        for version in state.candidate_order:
            cand = state.candidates[version]
            eff = f"{cand.efficiency_pct:.2f}%" if cand.efficiency_pct is not None else ""
            lines.append(
                f"| v{cand.version} | {cand.label} | {cand.status} "
                f"| {_fmt(cand.gflops)} | {eff} | {cand.agent} |")
        lines += [""]

    if state.violations:
        lines += ["## Violations", ""]
        for v in state.violations:
            token = v.get("token", v.get("kind", "violation"))
            lines.append(f"- v{v.get('version', '?')}: {token}")
        lines += [""]

    if state.published:
        lines += ["## Published", ""]
        lines += [f"- v{v}" for v in state.published] + [""]

    img_dir = dest_dir / "img"
    if img_dir.is_dir():
        images = sorted(p.name for p in img_dir.iterdir()
                        if p.suffix.lower() in (".png", ".svg"))
        if images:
            lines += ["## Figures", ""]
            for name in images:
                lines.append(f"![{Path(name).stem}](img/{name})")
            lines += [""]

    path = dest_dir / filename
    path.write_text("\n".join(lines), encoding="utf-8")
    return path
