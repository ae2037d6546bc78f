"""The deterministic event loop that runs a tuning project.

Logical time advances in ticks. Each tick: finished jobs are collected
and recorded, system limits are checked, then every live agent from the
tick-start snapshot takes one turn in spawn order (agents spawned during
the tick first act on the next one). Every state change lands in the
append-only event log, which is the only thing exports, reports, and
replays ever read. All randomness is seeded, wall-clock time is never
consulted for control, and events reference files by project-relative
path, so two runs with the same seed produce the same log modulo the
wall-time audit field.
"""

from __future__ import annotations

import shutil
import subprocess
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path

from . import actions as act
from .agents import (
    DEFAULT_COMPACT_THRESHOLD,
    LAUNCHER,
    AgentRegistry,
    AgentState,
    Role,
)
from .brains import RemoteBrain, ScriptedBrain, estimate_tokens
from .bus import BROADCAST, MessageBus
from .config import ProjectConfig
from .errors import ConfigInvalid, ExhaustedSpace, VibetunerError
from .execution import (
    EXCEEDED,
    BudgetLedger,
    SimulatedBackend,
    anonymize_text,
    compute_points,
    efficiency_pct,
)
from .requirements import (
    Budget,
    RequirementSpec,
    Violation,
    parse_requirements,
    validate_spec,
)
from .roles import DEFAULT_TEMPLATES, POLICIES, Observations
from .scenarios import Scenario, build_scenario, render_source, strategy_scenario
from .telemetry import EventKind, EventLog, render_markdown_report, export_series
from .tuning import (
    CandidateVersion,
    ChangeLog,
    Metrics,
    Status,
    export_changelog,
    next_params,
)

EXIT_OK = 0
EXIT_BUDGET = 2
EXIT_CONFIG = 3
EXIT_RUNTIME = 4

_WRAPUP_GRACE_TICKS = 10


@dataclass
class RunSummary:
    exit_code: int
    reason: str
    ticks: int
    spent: str
    sota: tuple[str, float, float] | None
    events_path: str
    exports_dir: str
    published: str | None = None


@dataclass
class _Assignment:
    version: str
    ordinal: int
    kind: str  # "new" | "retry"
    label: str
    params: dict
    violation: bool = False
    conditional: bool = False
    clean_label: str = ""


@dataclass
class _Job:
    job: object
    version: str
    agent: str
    gpus: int


class Orchestrator:
    def __init__(self, project_dir: str | Path, config: ProjectConfig,
                 spec: RequirementSpec, scenario: Scenario | None = None):
        self.dir = Path(project_dir)
        self.config = config
        self.spec = spec
        if scenario is None:
            scenario = (build_scenario(config.scenario, config.seed)
                        if config.scenario is not None
                        else strategy_scenario(config.seed))
        self.scenario = scenario
        self.requirements_text = self._read_requirements()

        if config.budget_override is not None:
            o = config.budget_override
            self.budget = Budget(Decimal(str(o["min"])),
                                 Decimal(str(o["reference"])),
                                 Decimal(str(o["max"])))
        else:
            self.budget = spec.budget
        self.ledger = BudgetLedger(self.budget)

        self.solo = config.mode == "solo"
        roster = {"PG": 1} if self.solo else dict(spec.agent_roster)
        problems = validate_spec(spec, mode=config.mode)
        if config.budget_override is not None:
            # the override replaces the document's budget for this run
            problems = [p for p in problems if p.code != "BudgetOrdering"]
            if not (self.budget.min_points <= self.budget.reference_points
                    <= self.budget.max_points):
                problems.append(Violation("BudgetOrdering",
                                          "override thresholds out of order"))
        if problems:
            details = "; ".join(f"{p.code}: {p.detail}" for p in problems)
            raise ConfigInvalid(f"requirements invalid for this run: {details}")

        self.tick = 0
        self._measured_this_tick = False
        self.phase = "setup"
        self.reason = ""
        events_path = self.dir / "events.jsonl"
        events_path.unlink(missing_ok=True)  # a run owns its log from tick 0
        self.log = EventLog(events_path)
        self.bus = MessageBus(clock=lambda: self.tick, sink=self._on_delivery)
        self.registry = AgentRegistry(
            self.log, roster, clock=lambda: self.tick,
            compact_threshold=(config.compact_threshold
                               or self.scenario.compact_threshold
                               or DEFAULT_COMPACT_THRESHOLD),
            root_role=Role.PG if self.solo else Role.PM)
        self.changelog = ChangeLog(tolerance=config.tolerance)
        self.backend = SimulatedBackend(self.scenario.model, config.seed,
                                        self.scenario.latency_ticks)
        self.lossy = (config.lossy_compaction
                      if config.lossy_compaction is not None
                      else self.scenario.lossy_compaction)
        self.gpus_per_job = config.gpus_per_job or self.scenario.gpus_per_job
        self.peak = float(spec.hardware.peak_gflops_per_gpu)
        self.initial_pg = config.initial_pg or self.scenario.initial_pg

        self._jobs: dict[str, _Job] = {}
        self._sources: dict[str, str] = {}
        self._owner: dict[str, str] = {}
        self._labels: dict[str, str] = {}
        self._version_meta: dict[str, _Assignment] = {}
        self._unsubmitted: dict[str, str] = {}
        self._pending_job: dict[str, str] = {}
        self._assignment: dict[str, _Assignment | None] = {}
        self._retry_queue: dict[str, list[_Assignment]] = {}
        self._retried_ordinals: set[int] = set()
        self._next_step = 0
        self._auto_counter = 0
        self._strategy_done = False

        self._feed: list[tuple[str, dict]] = []
        self._cursor: dict[str, int] = {}
        self._result_order: list[str] = []
        self._reviewed: set[str] = set()
        self._pending_violations: list[dict] = []

        self._project_started = False
        self._scale_up_done = False
        self._warned_nearmax = False
        self._report_flag = False
        self._stall_jobs = 0
        self._publish_owner: str | None = None
        self._published_version: str | None = None
        self._wrapup_started: int | None = None
        self._last_status = self.ledger.status()

    # --- setup / teardown ----------------------------------------------

    def _read_requirements(self) -> str:
        path = self.dir / self.config.requirements_path
        return path.read_text(encoding="utf-8") if path.is_file() else ""

    def _make_brain(self, role: str):
        if self.config.brain == "remote":
            return RemoteBrain(self.config.endpoint_url,
                               self.config.endpoint_model or "default",
                               DEFAULT_TEMPLATES.get(role, ""))
        return ScriptedBrain(POLICIES[role](), lossy=self.lossy)

    def _spawn(self, requester: str, role: str) -> str:
        descriptor = self.registry.spawn_agent(requester, role,
                                               self._make_brain(role))
        self.bus.attach(descriptor.agent_id, f"({descriptor.agent_id})")
        self._cursor[descriptor.agent_id] = len(self._feed)
        return descriptor.agent_id

    def _setup(self) -> None:
        root = "PG" if self.solo else "PM"
        self._spawn(LAUNCHER, root)
        self.log.append(self.tick, "SYSTEM", EventKind.BUDGET_UPDATE,
                        self._budget_payload())
        self.phase = "tuning"
        self.log.append(self.tick, "SYSTEM", EventKind.PHASE_CHANGE,
                        {"phase": "tuning", "reason": ""})

    def _budget_payload(self) -> dict:
        return {
            "spent": str(self.ledger.spent),
            "status": self.ledger.status(),
            "min": str(self.budget.min_points),
            "reference": str(self.budget.reference_points),
            "max": str(self.budget.max_points),
        }

    # --- run loop --------------------------------------------------------

    def run(self) -> RunSummary:
        try:
            self._setup()
            while self.phase in ("tuning", "wrapup"):
                if self.tick >= self.config.max_ticks:
                    self._finalize(self.reason or "max-ticks")
                    break
                self._poll_jobs()
                self._system_guards()
                if self.phase == "done":
                    break
                self._turns()
                if self.phase == "done":
                    break
                self._tick_end()
                self.tick += 1
        except VibetunerError:
            self.log.close()
            raise
        except Exception as exc:  # noqa: BLE001 - recorded, then surfaced
            self.log.append(self.tick, "SYSTEM", EventKind.ERROR,
                            {"error": f"{type(exc).__name__}: {exc}"})
            self._finalize("error")
            return self._summary(EXIT_RUNTIME)
        if self.phase != "done":
            self._finalize(self.reason or "max-ticks")
        code = EXIT_BUDGET if self.reason == "budget" else EXIT_OK
        return self._summary(code)

    def _summary(self, code: int) -> RunSummary:
        sota = self.changelog.sota()
        sota_tuple = None
        if sota is not None and sota.metrics is not None:
            sota_tuple = (sota.version, sota.metrics.gflops,
                          sota.metrics.efficiency_pct)
        return RunSummary(
            exit_code=code, reason=self.reason, ticks=self.tick,
            spent=str(self.ledger.spent), sota=sota_tuple,
            events_path=str(self.dir / "events.jsonl"),
            exports_dir=str(self.dir / "exports"),
            published=self._published_version,
        )

    # --- job lifecycle ---------------------------------------------------

    def _poll_jobs(self) -> None:
        self._measured_this_tick = False
        for job_id in list(self._jobs):
            record = self._jobs[job_id]
            state, outputs, error = self.backend.poll(record.job, self.tick)
            if state in ("pending", "running"):
                continue
            del self._jobs[job_id]
            self._pending_job.pop(record.agent, None)
            if state == "error":
                self._record_failure(job_id, record, error or "job error")
            else:
                self._record_result(job_id, record, outputs)
            self.registry.wake(record.agent)
            self._wake_role(Role.SE)
            self._wake_role(Role.CD)

    def _record_failure(self, job_id: str, record: _Job, error: str) -> None:
        self._measured_this_tick = True
        self.log.append(self.tick, "SYSTEM", EventKind.JOB_DONE, {
            "job_id": job_id, "version": record.version, "state": "error",
            "elapsed_s": "0", "points": "0", "error": error,
        })
        self.changelog.record_result(record.version, None, Status.FAILED,
                                     self.tick)
        self.log.append(self.tick, record.agent, EventKind.RESULT_RECORDED, {
            "version": record.version, "verdict": "Failed", "error": error,
        })
        self._after_result(record.version, "Failed", None)
        cause = "resource" if "resource overflow" in error else "accuracy"
        self._queue_retry(record.version, cause)

    def _record_result(self, job_id: str, record: _Job, outputs: dict) -> None:
        self._measured_this_tick = True
        elapsed = Decimal(outputs["elapsed_s"])
        points = compute_points(elapsed, record.gpus, self.spec.point_rate)
        self.ledger.add(points)
        self.log.append(self.tick, "SYSTEM", EventKind.JOB_DONE, {
            "job_id": job_id, "version": record.version, "state": "done",
            "elapsed_s": str(elapsed), "points": str(points),
        })
        self.log.append(self.tick, "SYSTEM", EventKind.BUDGET_UPDATE,
                        self._budget_payload())
        status = self.ledger.status()
        if status != self._last_status:
            self._last_status = status
            self._wake_role(Role.PM)

        gflops = float(outputs["gflops"])
        eff = efficiency_pct(gflops, self.peak)
        error_norm = float(outputs["error_norm"])
        tolerance = self.changelog.tolerance
        ok = tolerance is None or error_norm <= tolerance
        verdict = Status.VALID if ok else Status.FAILED
        metrics = Metrics(gflops=gflops, efficiency_pct=eff,
                          error_norm=error_norm, elapsed_s=elapsed,
                          gpus=record.gpus)
        self.changelog.record_result(record.version, metrics, verdict,
                                     self.tick)
        self.log.append(self.tick, record.agent, EventKind.RESULT_RECORDED, {
            "version": record.version, "verdict": verdict.value,
            "gflops": gflops, "efficiency_pct": eff,
            "error_norm": error_norm, "elapsed_s": str(elapsed),
        })
        self._after_result(record.version, verdict.value,
                           (gflops, eff) if ok else None)
        if verdict is Status.FAILED:
            self._queue_retry(record.version, "accuracy")

    def _after_result(self, version: str, verdict: str,
                      perf: tuple[float, float] | None) -> None:
        self._result_order.append(version)
        sota = self.changelog.sota()
        is_sota = bool(sota is not None and sota.version == version)
        entry = {"version": version, "status": verdict, "is_sota": is_sota}
        if perf is not None:
            entry["gflops"], entry["efficiency_pct"] = perf
        self._feed.append(("result", entry))
        # A job breaks the stall window only by becoming the frontier entry,
        # so progress is judged after any invalidations, same as announcements.
        if is_sota:
            self._stall_jobs = 0
        else:
            self._stall_jobs += 1

    def _queue_retry(self, version: str, cause: str) -> None:
        meta = self._version_meta.get(version)
        if meta is None or meta.kind == "retry":
            return
        if meta.ordinal in self._retried_ordinals:
            return
        if not self.scenario.plan or meta.ordinal > len(self.scenario.plan):
            return
        step = self.scenario.plan[meta.ordinal - 1]
        if cause == "resource":
            if step.retry_params is None:
                return
            retry = _Assignment(
                version=f"1.{meta.ordinal}.1", ordinal=meta.ordinal,
                kind="retry", label=step.label, params=dict(step.retry_params))
        else:  # invalid or accuracy: fall back to the clean variant
            if not step.clean_label:
                return
            retry = _Assignment(
                version=f"1.{meta.ordinal}.1", ordinal=meta.ordinal,
                kind="retry", label=step.clean_label, params=dict(step.params))
        self._retried_ordinals.add(meta.ordinal)
        owner = self._owner.get(version)
        if owner is None or not self.registry.get(owner).live:
            live_pgs = [d for d in self.registry.live_agents()
                        if d.role is Role.PG]
            owner = live_pgs[0].agent_id if live_pgs else None
        if owner is not None:
            self._retry_queue.setdefault(owner, []).append(retry)
            self.registry.wake(owner)

    # --- system guards ---------------------------------------------------

    def _system_guards(self) -> None:
        if self.phase == "wrapup":
            if (self._wrapup_started is not None
                    and self.tick - self._wrapup_started >= _WRAPUP_GRACE_TICKS):
                self._finalize(self.reason)
            return
        has_pm = any(d.role is Role.PM for d in self.registry.live_agents())
        if has_pm:
            return
        if self.ledger.status() == EXCEEDED or self.ledger.remaining() <= 0:
            self._begin_wrapup("budget")
        elif self.tick >= self.spec.time_limits.max_minutes:
            self._begin_wrapup("time")
        elif self._all_exhausted() and not self._jobs:
            self._begin_wrapup("complete")
        elif (self.config.stall_window > 0
              and self._stall_jobs >= self.config.stall_window
              and not self._jobs):
            self._begin_wrapup("stall")

    def _all_exhausted(self) -> bool:
        if self.scenario.plan:
            plan_left = self._next_step < len(self.scenario.plan)
        else:
            plan_left = not self._strategy_done
        if plan_left:
            return False
        if any(q for q in self._retry_queue.values()):
            return False
        if any(a is not None for a in self._assignment.values()):
            return False
        if self._unsubmitted or self._pending_job or self._jobs:
            return False
        if self._cd_backlog():
            return False
        return True

    def _cd_backlog(self) -> list[str]:
        if not any(d.role is Role.CD for d in self.registry.live_agents()):
            return []
        return [v for v in self._result_order if v not in self._reviewed]

    def _wake_role(self, role: Role) -> None:
        for descriptor in self.registry.live_agents():
            if descriptor.role is role:
                self.registry.wake(descriptor.agent_id)

    def _on_delivery(self, message) -> None:
        if message.recipient != BROADCAST:
            try:
                self.registry.wake(message.recipient)
            except VibetunerError:
                pass

    # --- turns -----------------------------------------------------------

    def _turns(self) -> None:
        snapshot = sorted(self.registry.live_agents(),
                          key=lambda d: d.spawn_seq)
        for descriptor in snapshot:
            if self.phase == "done":
                return
            agent = descriptor.agent_id
            if not self.registry.get(agent).live:
                continue
            if self.phase == "wrapup" and agent != self._publish_owner:
                continue
            if (descriptor.state is AgentState.IDLE
                    and not descriptor.wake_pending
                    and self.bus.pending(agent) == 0):
                continue
            self.registry.maybe_autocompact(agent)
            inbox = self.bus.drain(agent)
            obs = self._observe(descriptor, inbox)
            decision = descriptor.brain.decide(obs)
            inbox_tokens = sum(estimate_tokens(m.body) for m in inbox)
            self.registry.record_tokens(agent,
                                        decision.tokens_charged + inbox_tokens)
            if decision.error:
                self.log.append(self.tick, agent, EventKind.ERROR,
                                {"error": decision.error})
            meaningful = False
            for action in decision.actions:
                if not isinstance(action, act.NoOp):
                    meaningful = True
                self._apply(agent, descriptor.role, action)
                if self.phase == "done":
                    return
            if meaningful:
                self.registry.mark_working(agent)
            else:
                self.registry.mark_idle(agent, self.tick)
            if descriptor.role is Role.PM:
                self._project_started = True

    def _tick_end(self) -> None:
        if (self.phase == "tuning" and self.tick > 0
                and self.tick % self.config.report_period == 0):
            self._report_flag = True
            self._wake_role(Role.SE)
        self.registry.tick_hooks(self.tick, self.config.idle_patience)

    # --- observations ----------------------------------------------------

    def _observe(self, descriptor, inbox) -> Observations:
        agent = descriptor.agent_id
        role = descriptor.role.value
        sota = self.changelog.sota()
        sota_tuple = None
        if sota is not None and sota.metrics is not None:
            sota_tuple = (sota.version, sota.metrics.gflops,
                          sota.metrics.efficiency_pct)
        live_roster: dict[str, int] = {}
        for d in self.registry.live_agents():
            live_roster[d.role.value] = live_roster.get(d.role.value, 0) + 1
        pm_id = next((d.agent_id for d in self.registry.live_agents()
                      if d.role is Role.PM), "")

        obs = Observations(
            tick=self.tick, agent_id=agent, role=role, phase=self.phase,
            solo=self.solo,
            project_name=self.spec.project_name,
            requirements_text=self.requirements_text,
            forbidden=tuple(self.spec.forbidden_libraries),
            tolerance=self.changelog.tolerance,
            budget_spent=str(self.ledger.spent),
            budget_status=self.ledger.status(),
            budget_remaining=str(self.ledger.remaining()),
            budget_min=str(self.budget.min_points),
            budget_max=str(self.budget.max_points),
            time_max_ticks=self.spec.time_limits.max_minutes,
            sota=sota_tuple,
            inbox=tuple(inbox),
            live_roster=live_roster,
            roster_limits=dict(self.registry.roster_limits),
            pm_id=pm_id,
            in_flight=len(self._jobs),
            in_flight_mine=1 if agent in self._pending_job else 0,
            in_flight_limit=self.config.in_flight_limit,
            job_gpus=self.gpus_per_job,
            stall_jobs=self._stall_jobs,
            stall_window=self.config.stall_window,
        )

        if descriptor.role is Role.PM:
            obs.project_started = self._project_started
            obs.initial_spawns = (("SE", "CD") + ("PG",) * self.initial_pg)
            obs.pending_violations = tuple(dict(v) for v in
                                           self._pending_violations)
            obs.pm_warned_nearmax = self._warned_nearmax
            # Expansion waits one tick after any fresh job outcome: the
            # band crossing that justifies hiring may rest on a result the
            # reviewer has not cleared yet.
            obs.scale_up_pending = (
                self.scenario.scale_up_at_inrange
                and self._project_started
                and not self._measured_this_tick
                and not self._scale_up_done
                and self.ledger.status() in ("InRange", "NearMax")
                and self.registry.live_count(Role.PG)
                < self.registry.roster_limits.get("PG", 0))
            obs.all_exhausted = self._all_exhausted()
        elif descriptor.role is Role.SE:
            new_results, invalidated = self._consume_feed(agent)
            obs.new_results = new_results
            obs.invalidated = invalidated
            obs.report_due = self._report_flag
        elif descriptor.role is Role.CD:
            if self.phase == "wrapup":
                obs.publish_pending = agent == self._publish_owner
            else:
                obs.unreviewed = tuple(
                    {"version": v, "source": self._sources.get(v, ""),
                     "label": self._labels.get(v, ""),
                     "agent": self._owner.get(v, "")}
                    for v in self._cd_backlog())
        elif descriptor.role is Role.PG:
            self._ensure_assignment(agent)
            assignment = self._assignment.get(agent)
            obs.my_unsubmitted_version = self._unsubmitted.get(agent)
            obs.my_pending_version = self._pending_job.get(agent)
            if self.phase == "wrapup" and agent == self._publish_owner:
                obs.publish_pending = True
                publish = self.changelog.sota()
                if publish is not None:
                    obs.publish_version = publish.version
                    obs.publish_source = self._sources.get(publish.version, "")
            elif (assignment is not None and obs.my_unsubmitted_version is None
                    and obs.my_pending_version is None
                    and self.phase == "tuning"):
                obs.plan_next = self._render_assignment(assignment)
                obs.next_version = assignment.version
                parent = None
                if sota is not None:
                    parent = sota.version
                elif self.changelog.versions():
                    parent = self.changelog.versions()[-1]
                obs.parent_version = parent
        return obs

    def _consume_feed(self, agent: str) -> tuple[tuple, tuple]:
        start = self._cursor.get(agent, 0)
        self._cursor[agent] = len(self._feed)
        results = []
        invalidated = []
        for kind, payload in self._feed[start:]:
            if kind == "result":
                results.append(dict(payload))
            else:
                invalidated.append(payload["version"])
        return tuple(results), tuple(invalidated)

    def _ensure_assignment(self, agent: str) -> None:
        if self._assignment.get(agent) is not None:
            return
        if self._unsubmitted.get(agent) or self._pending_job.get(agent):
            return
        queue = self._retry_queue.get(agent)
        if queue:
            self._assignment[agent] = queue.pop(0)
            return
        if self.scenario.plan:
            if self._next_step < len(self.scenario.plan):
                step = self.scenario.plan[self._next_step]
                self._next_step += 1
                ordinal = self._next_step
                self._assignment[agent] = _Assignment(
                    version=f"1.{ordinal}.0", ordinal=ordinal, kind="new",
                    label=step.label, params=dict(step.params),
                    violation=step.planted_violation,
                    conditional=step.conditional,
                    clean_label=step.clean_label)
            return
        if self.config.strategy and not self._strategy_done:
            history = [self.changelog.current(v).params
                       for v in self.changelog.versions()]
            history += [a.params for a in self._assignment.values()
                        if a is not None]
            try:
                params = next_params(self.config.strategy,
                                     self.scenario.space, history,
                                     self.config.seed)
            except ExhaustedSpace:
                self._strategy_done = True
                return
            self._auto_counter += 1
            self._assignment[agent] = _Assignment(
                version=f"1.{self._auto_counter}.0",
                ordinal=self._auto_counter, kind="new",
                label="AutoTile", params=params)

    def _render_assignment(self, assignment: _Assignment) -> dict:
        clean_label = assignment.clean_label or assignment.label
        return {
            "params": dict(assignment.params),
            "label": assignment.label,
            "violation": assignment.violation,
            "conditional": assignment.conditional,
            "clean_label": clean_label,
            "source_clean": render_source(clean_label, assignment.params,
                                          violation=False),
            "source_violation": render_source(assignment.label,
                                              assignment.params,
                                              violation=True),
        }

    # --- action application ----------------------------------------------

    def _apply(self, agent: str, role: Role, action) -> None:
        if isinstance(action, act.NoOp):
            return
        if isinstance(action, act.SendMessage):
            self._apply_send(agent, action)
        elif isinstance(action, act.GenerateCandidate):
            self._apply_generate(agent, role, action)
        elif isinstance(action, act.SubmitJob):
            self._apply_submit(agent, role, action)
        elif isinstance(action, act.ReviewCandidate):
            self._apply_review(agent, action)
        elif isinstance(action, act.SpawnAgent):
            self._apply_spawn(agent, role, action)
        elif isinstance(action, act.MarkInvalid):
            self._apply_invalidate(agent, role, action)
        elif isinstance(action, act.EmitReport):
            self._apply_report(agent, role)
        elif isinstance(action, act.Terminate):
            self._apply_terminate(agent, role, action)

    def _error(self, agent: str, message: str) -> None:
        self.log.append(self.tick, agent, EventKind.ERROR, {"error": message})

    def _apply_send(self, agent: str, action: act.SendMessage) -> None:
        try:
            delivered = self.bus.send(agent, action.recipient, action.body)
        except VibetunerError as exc:
            self._error(agent, f"send failed: {exc}")
            return
        self.log.append(self.tick, agent, EventKind.MESSAGE_SENT, {
            "from": agent, "to": action.recipient, "body": action.body,
            "delivered": [m.recipient for m in delivered],
        })

    def _apply_generate(self, agent: str, role: Role,
                        action: act.GenerateCandidate) -> None:
        if role is not Role.PG:
            self._error(agent, "only a generator may register candidates")
            return
        source_ref = f"sources/v{action.version}.c"
        candidate = CandidateVersion(
            version=action.version, parent=action.parent,
            params=dict(action.params), label=action.label, agent=agent,
            source_ref=source_ref)
        try:
            self.changelog.register(candidate, self.tick)
        except VibetunerError as exc:
            self._error(agent, f"register failed: {exc}")
            return
        source_path = self.dir / source_ref
        source_path.parent.mkdir(parents=True, exist_ok=True)
        source_path.write_text(action.source, encoding="utf-8")
        self._sources[action.version] = action.source
        self._owner[action.version] = agent
        self._labels[action.version] = action.label
        assignment = self._assignment.get(agent)
        if assignment is not None and assignment.version == action.version:
            self._version_meta[action.version] = assignment
            self._assignment[agent] = None
        self._unsubmitted[agent] = action.version
        self.log.append(self.tick, agent, EventKind.CANDIDATE_REGISTERED, {
            "version": action.version, "parent": action.parent,
            "params": dict(action.params), "label": action.label,
            "agent": agent, "source_ref": source_ref,
        })

    def _apply_submit(self, agent: str, role: Role,
                      action: act.SubmitJob) -> None:
        if role is not Role.PG:
            self._error(agent, "only a generator may submit jobs")
            return
        if self.phase != "tuning":
            self._error(agent, "no new jobs outside the tuning phase")
            return
        if not self.changelog.has(action.version):
            self._error(agent, f"submit of unknown version {action.version}")
            return
        if len(self._jobs) >= self.config.in_flight_limit:
            self._error(agent, "submit rejected: job slots full")
            return
        candidate = self.changelog.current(action.version)
        job = self.backend.submit(candidate, action.gpus, "cx-share",
                                  self.tick)
        self._jobs[job.job_id] = _Job(job=job, version=action.version,
                                      agent=agent, gpus=action.gpus)
        if self._unsubmitted.get(agent) == action.version:
            del self._unsubmitted[agent]
        self._pending_job[agent] = action.version
        self.log.append(self.tick, agent, EventKind.JOB_SUBMITTED, {
            "job_id": job.job_id, "version": action.version,
            "gpus": action.gpus,
        })

    def _apply_review(self, agent: str, action: act.ReviewCandidate) -> None:
        if not self.changelog.has(action.version):
            self._error(agent, f"review of unknown version {action.version}")
            return
        self._reviewed.add(action.version)
        if action.verdict != "violation":
            return
        token = action.reason.split(" at line")[0] if action.reason else ""
        self.log.append(self.tick, agent, EventKind.VIOLATION, {
            "version": action.version, "token": token,
            "reason": action.reason, "by": agent,
        })
        if any(d.role is Role.PM for d in self.registry.live_agents()):
            self._pending_violations.append(
                {"version": action.version, "token": token,
                 "agent": self._owner.get(action.version, "")})
        else:
            self._invalidate(action.version, f"uses {token}", agent)

    def _invalidate(self, version: str, reason: str, by: str) -> None:
        current = self.changelog.current(version)
        try:
            self.changelog.record_result(version, None, Status.INVALID,
                                         self.tick)
        except VibetunerError as exc:
            self._error(by, f"invalidate failed: {exc}")
            return
        self.log.append(self.tick, by, EventKind.RESULT_RECORDED, {
            "version": version, "verdict": "Invalid", "reason": reason,
        })
        self._feed.append(("invalidated", {"version": version}))
        if current.status is Status.VALID:
            self._queue_retry(version, "invalid")
        self._wake_role(Role.SE)

    def _apply_invalidate(self, agent: str, role: Role,
                          action: act.MarkInvalid) -> None:
        if role is not Role.PM:
            self._error(agent, "only the manager may invalidate candidates")
            return
        self._pending_violations = [
            v for v in self._pending_violations
            if v["version"] != action.version]
        self._invalidate(action.version, action.reason, agent)
        owner = self._owner.get(action.version)
        if owner is not None:
            self.registry.wake(owner)

    def _apply_spawn(self, agent: str, role: Role,
                     action: act.SpawnAgent) -> None:
        try:
            self._spawn(agent, action.role)
        except VibetunerError as exc:
            self._error(agent, f"spawn failed: {exc}")
            return
        if self._project_started and action.role == "PG":
            self._scale_up_done = True

    def _apply_report(self, agent: str, role: Role) -> None:
        if self.phase == "wrapup" and agent == self._publish_owner:
            self._publish(agent)
            return
        exports = self.dir / "exports"
        export_series(self.log.events, "all", exports)
        path = render_markdown_report(self.log.events, exports)
        self._report_flag = False
        self.log.append(self.tick, agent, EventKind.REPORT, {
            "report": str(path.relative_to(self.dir)),
        })

    def _apply_terminate(self, agent: str, role: Role,
                         action: act.Terminate) -> None:
        if action.scope == "self":
            self.registry.terminate(agent, action.reason)
            self.bus.detach(agent)
            return
        if role is not Role.PM:
            self._error(agent, "only the manager may stop the project")
            return
        self._begin_wrapup(action.reason or "manager stop")

    # --- wrapup / publish / finalize --------------------------------------

    def _begin_wrapup(self, reason: str) -> None:
        if self.phase != "tuning":
            return
        self.phase = "wrapup"
        self.reason = reason
        self._wrapup_started = self.tick
        self.log.append(self.tick, "SYSTEM", EventKind.PHASE_CHANGE,
                        {"phase": "wrapup", "reason": reason})
        for job_id, record in list(self._jobs.items()):
            self._error("SYSTEM", f"job {job_id} (v{record.version}) "
                                  f"cancelled at shutdown")
            self._pending_job.pop(record.agent, None)
        self._jobs.clear()
        owner = None
        if self.spec.publish.enabled:
            cd = next((d.agent_id for d in self.registry.live_agents()
                       if d.role is Role.CD), None)
            if cd is not None:
                owner = cd
            elif self.solo:
                owner = next((d.agent_id for d in self.registry.live_agents()
                              if d.role is Role.PG), None)
        self._publish_owner = owner
        if owner is None:
            self._finalize(reason)
        else:
            self.registry.wake(owner)

    def _publish(self, agent: str) -> None:
        sota = self.changelog.sota()
        publish_dir = self.dir / "exports" / "publish"
        publish_dir.mkdir(parents=True, exist_ok=True)
        if sota is None:
            self.log.append(self.tick, agent, EventKind.REPORT, {
                "published": "", "note": "no valid candidate to publish",
            })
            self._finalize(self.reason)
            return
        text = self._sources.get(sota.version, "")
        if self.spec.publish.anonymize:
            text = anonymize_text(text)
        path = publish_dir / f"v{sota.version}.c"
        path.write_text(text, encoding="utf-8")
        self._published_version = sota.version
        self.log.append(self.tick, agent, EventKind.REPORT, {
            "published": sota.version,
            "path": str(path.relative_to(self.dir)),
        })
        self._finalize(self.reason)

    def _render_figures(self, exports: Path) -> None:
        if not self.config.render_figures:
            return
        tool = shutil.which("vibeviz")
        if tool is None:
            return
        try:
            proc = subprocess.run(
                [tool, str(exports), "--out", str(exports / "img")],
                capture_output=True, text=True, timeout=120)
            if proc.returncode != 0:
                self._error("SYSTEM", f"figure render failed: "
                                      f"{proc.stderr.strip()[:200]}")
        except (OSError, subprocess.SubprocessError) as exc:
            self._error("SYSTEM", f"figure render failed: {exc}")

    def _finalize(self, reason: str) -> None:
        if self.phase == "done":
            return
        self.reason = reason or self.reason
        for descriptor in self.registry.live_agents():
            self.registry.terminate(descriptor.agent_id,
                                    f"project {self.reason or 'end'}")
            self.bus.detach(descriptor.agent_id)
        self.log.append(self.tick, "SYSTEM", EventKind.PHASE_CHANGE,
                        {"phase": "done", "reason": self.reason})
        self.phase = "done"

        exports = self.dir / "exports"
        export_series(self.log.events, "all", exports)
        export_changelog(self.changelog, exports)
        transcript = exports / "messages.log"
        lines = []
        for message in self.bus.transcript:
            lines.append(f"tick={message.tick} {message.role_tag} "
                         f"{message.sender}->{message.recipient}: "
                         f"{message.body}")
        transcript.write_text("\n".join(lines) + ("\n" if lines else ""),
                              encoding="utf-8")
        self._render_figures(exports)
        render_markdown_report(self.log.events, exports)
        self.log.close()


def run_project(project_dir: str | Path, config: ProjectConfig,
                spec: RequirementSpec | None = None,
                scenario: Scenario | None = None) -> RunSummary:
    if spec is None:
        doc = Path(project_dir) / config.requirements_path
        spec = parse_requirements(doc.read_text(encoding="utf-8"))
    return Orchestrator(project_dir, config, spec, scenario).run()
