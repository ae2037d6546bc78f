"""Role policies: pure decision tables over observation snapshots.

Each policy is a function from an Observations value to a list of
actions, with zero hidden state; everything a decision depends on is in
the snapshot, so replays and property tests can call policies directly.
The manager plans and terminates, the engineer watches and reports, the
generator runs the candidate loop, the reviewer lints and publishes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal

from .actions import (
    Action,
    EmitReport,
    GenerateCandidate,
    MarkInvalid,
    NoOp,
    ReviewCandidate,
    SendMessage,
    SpawnAgent,
    SubmitJob,
    Terminate,
)
from .bus import BROADCAST
from .execution import EXCEEDED, NEAR_MAX, lint_forbidden


@dataclass
class Observations:
    """Per-agent snapshot assembled by the event loop each turn.

    Candidate versions appear without the "v" display prefix. plan_next
    is a prepared work item: params, label, and source text for both the
    clean variant and, when the scenario plants one, a prohibited-library
    variant; which variant the generator emits depends on whether it
    still remembers the prohibitions.
    """

    tick: int = 0
    agent_id: str = ""
    role: str = ""
    phase: str = "tuning"
    solo: bool = False

    project_started: bool = False
    initial_spawns: tuple[str, ...] = ()
    project_name: str = ""
    requirements_text: str = ""
    forbidden: tuple[str, ...] = ()
    sensitive_tokens: tuple[str, ...] = ()
    tolerance: float | None = None

    budget_spent: str = "0"
    budget_status: str = "UnderMin"
    budget_remaining: str = "0"
    budget_min: str = "0"
    budget_max: str = "0"
    pm_warned_nearmax: bool = False
    scale_up_pending: bool = False

    time_max_ticks: int | None = None

    sota: tuple[str, float, float] | None = None  # (version, gflops, eff_pct)
    new_results: tuple[dict, ...] = ()
    invalidated: tuple[str, ...] = ()
    pending_violations: tuple[dict, ...] = ()
    unreviewed: tuple[dict, ...] = ()

    inbox: tuple = ()
    report_due: bool = False

    live_roster: dict = field(default_factory=dict)
    roster_limits: dict = field(default_factory=dict)
    pm_id: str = ""

    in_flight: int = 0
    in_flight_mine: int = 0
    in_flight_limit: int = 2
    job_gpus: int = 4

    my_pending_version: str | None = None
    my_unsubmitted_version: str | None = None
    last_result_mine: dict | None = None
    plan_next: dict | None = None
    next_version: str = "1.1.0"
    parent_version: str | None = None

    publish_pending: bool = False
    publish_version: str | None = None
    publish_source: str = ""

    stall_jobs: int = 0
    stall_window: int = 5
    all_exhausted: bool = False

    knows_prohibitions: bool = True


def _kickoff_text(obs: Observations) -> str:
    forbidden = ", ".join(obs.forbidden) if obs.forbidden else "none"
    tolerance = obs.tolerance if obs.tolerance is not None else "per requirements"
    deadline = f"minute {obs.time_max_ticks}" if obs.time_max_ticks else "no fixed deadline"
    return (f"Project start: {obs.project_name or 'kernel tuning'}. "
            f"Target accuracy: relative error within {tolerance}. "
            f"Budget {obs.budget_min} to {obs.budget_max} points, deadline {deadline}. "
            f"Prohibited libraries: {forbidden}.")


def pm_step(obs: Observations) -> list[Action]:
    """Manager: deploy the team, enforce limits, arbitrate violations.

    Limit checks come before everything else, deployment included, so a
    zero-point budget stops the project before any agent is hired.
    """
    if obs.budget_status == EXCEEDED or Decimal(obs.budget_remaining) <= 0:
        return [
            SendMessage(BROADCAST, f"Emergency stop! Budget limit reached "
                                   f"({obs.budget_spent} of {obs.budget_max} points spent). "
                                   f"No further jobs."),
            Terminate(scope="project", reason="budget"),
        ]
    if obs.time_max_ticks is not None and obs.tick >= obs.time_max_ticks:
        return [
            SendMessage(BROADCAST, "Emergency stop! Time limit reached."),
            Terminate(scope="project", reason="time"),
        ]

    if not obs.project_started:
        actions: list[Action] = [SpawnAgent(role) for role in obs.initial_spawns]
        actions.append(SendMessage(BROADCAST, _kickoff_text(obs)))
        return actions

    actions = []
    for violation in obs.pending_violations:
        version = violation["version"]
        token = violation.get("token", "a prohibited library")
        actions.append(MarkInvalid(version, reason=f"uses {token}"))
        offender = violation.get("agent") or BROADCAST
        actions.append(SendMessage(
            offender,
            f"v{version} is invalidated: {token} is prohibited by the "
            f"requirements. Regenerate without it."))

    if obs.scale_up_pending:
        actions.append(SpawnAgent("PG"))

    if obs.budget_status == NEAR_MAX and not obs.pm_warned_nearmax:
        actions.append(SendMessage(
            BROADCAST,
            f"Budget warning: {obs.budget_spent} of {obs.budget_max} points "
            f"spent. Finish in-flight work; be selective with new jobs."))

    if not actions:
        if obs.all_exhausted and obs.in_flight == 0:
            return [Terminate(scope="project", reason="complete")]
        if (obs.stall_window > 0 and obs.stall_jobs >= obs.stall_window
                and obs.in_flight == 0):
            return [
                SendMessage(BROADCAST,
                            f"No improvement over the last {obs.stall_jobs} jobs; "
                            f"stopping here."),
                Terminate(scope="project", reason="stall"),
            ]
    return actions or [NoOp()]


def _fmt_gflops(value: float) -> str:
    return f"{value:g}"


def sota_announcement(version: str, gflops: float, efficiency_pct: float) -> str:
    return (f"New SOTA: v{version}, {_fmt_gflops(gflops)} GFLOPS, "
            f"{efficiency_pct:.2f}%")


def se_step(obs: Observations) -> list[Action]:
    """Engineer: announce SOTA movement, emit periodic status reports."""
    actions: list[Action] = []
    for result in obs.new_results:
        if result.get("is_sota"):
            actions.append(SendMessage(BROADCAST, sota_announcement(
                result["version"], result["gflops"], result["efficiency_pct"])))
    for version in obs.invalidated:
        if obs.sota is not None:
            best, gflops, eff = obs.sota
            detail = f"best valid is now v{best} at {_fmt_gflops(gflops)} GFLOPS"
        else:
            detail = "no valid candidate remains"
        actions.append(SendMessage(
            BROADCAST, f"SOTA revision: v{version} was invalidated; {detail}."))
    if obs.report_due:
        actions.append(EmitReport())
    return actions or [NoOp()]


def pg_step(obs: Observations) -> list[Action]:
    """Generator: the submit/wait/refine loop over prepared work items."""
    if obs.solo and obs.publish_pending:
        # no reviewer in solo runs: final self-check, gated on memory
        if obs.knows_prohibitions and obs.publish_source and obs.publish_version:
            hits = lint_forbidden(obs.publish_source, list(obs.forbidden))
            if hits:
                hit = hits[0]
                return [ReviewCandidate(
                    obs.publish_version, "violation",
                    reason=f"{hit.token} at line {hit.line_no}")]
        return [EmitReport()]

    if obs.my_unsubmitted_version is not None:
        if obs.in_flight >= obs.in_flight_limit:
            return [NoOp()]
        return [SubmitJob(obs.my_unsubmitted_version, gpus=obs.job_gpus)]

    if obs.my_pending_version is not None:
        return [NoOp()]

    step = obs.plan_next
    if step is None:
        return [NoOp()]

    planted = bool(step.get("violation"))
    conditional = bool(step.get("conditional"))
    if planted and (not conditional or not obs.knows_prohibitions):
        label = step["label"]
        source = step["source_violation"]
    elif planted:
        label = step.get("clean_label") or step["label"]
        source = step["source_clean"]
    else:
        label = step["label"]
        source = step["source_clean"]
    return [GenerateCandidate(
        version=obs.next_version,
        parent=obs.parent_version,
        params=dict(step["params"]),
        label=label,
        source=source,
    )]


def violation_warning(token: str, version: str) -> str:
    return (f"Warning: {token} usage detected in v{version}! "
            f"It is prohibited by the requirements.")


def cd_step(obs: Observations) -> list[Action]:
    """Reviewer: lint new candidates against the requirement document's
    prohibition list (read fresh each review, never from memory), and
    publish the final result when asked."""
    actions: list[Action] = []
    for item in obs.unreviewed:
        hits = lint_forbidden(item.get("source", ""), list(obs.forbidden))
        if hits:
            hit = hits[0]
            actions.append(ReviewCandidate(
                item["version"], "violation",
                reason=f"{hit.token} at line {hit.line_no}"))
            actions.append(SendMessage(
                obs.pm_id or BROADCAST,
                violation_warning(hit.token, item["version"])))
        else:
            actions.append(ReviewCandidate(item["version"], "clean"))
    if obs.publish_pending:
        actions.append(EmitReport())
    return actions or [NoOp()]


class PMPolicy:
    def step(self, obs: Observations) -> list[Action]:
        return pm_step(obs)


class SEPolicy:
    def step(self, obs: Observations) -> list[Action]:
        return se_step(obs)


class PGPolicy:
    def step(self, obs: Observations) -> list[Action]:
        return pg_step(obs)


class CDPolicy:
    def step(self, obs: Observations) -> list[Action]:
        return cd_step(obs)


POLICIES = {"PM": PMPolicy, "SE": SEPolicy, "PG": PGPolicy, "CD": CDPolicy}


_TEMPLATE_FOOTER = (
    "\n\nRequirements document:\n{requirements}\n"
    "Budget: {budget_status}\nBest result: {sota_status}\n"
    "Change log: {changelog_digest}\n"
    "Recent messages:\n{recent_messages}\n\n"
    'Reply with a JSON list of actions, e.g. '
    '[{{"kind": "NoOp"}}] or [{{"kind": "SubmitJob", "version": "1.2.0", "gpus": 4}}].'
)

DEFAULT_TEMPLATES = {
    "PM": "You manage an automated performance-tuning project. Deploy the "
          "team, watch the point budget and deadline, invalidate candidates "
          "that break the rules, and stop the project when its goals are met "
          "or a limit is hit." + _TEMPLATE_FOOTER,
    "SE": "You monitor an automated performance-tuning project. Announce new "
          "best results to the team and emit periodic status reports."
        + _TEMPLATE_FOOTER,
    "PG": "You write GPU kernel candidates for an automated tuning project. "
          "Generate a candidate, submit its job, study the result, refine, "
          "and repeat. Respect every prohibition in the requirements."
        + _TEMPLATE_FOOTER,
    "CD": "You review and publish code for an automated tuning project. "
          "Check each new candidate against the requirements document's "
          "prohibited-library list and report violations; anonymize anything "
          "you publish." + _TEMPLATE_FOOTER,
}
