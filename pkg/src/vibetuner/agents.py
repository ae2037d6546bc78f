"""Agent lifecycle, token accounting, and automatic context compaction.

The registry is the activity database: every spawned agent keeps a row
for the life of the run (terminated rows stay, flagged). Spawning is
hierarchical: the launcher may create only the root agent (the PM in
multi-agent mode, the single PG in solo mode); everything else must be
requested by a live PM. Context growth is tracked per agent and compacted
once it crosses the agent's threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .brains import estimate_tokens
from .errors import RosterLimitExceeded, TerminatedAgent, Unauthorized, UnknownAgent
from .telemetry import EventKind, EventLog

LAUNCHER = "LAUNCHER"
DEFAULT_COMPACT_THRESHOLD = 150_000
DEFAULT_IDLE_PATIENCE = 3


class Role(str, Enum):
    PM = "PM"
    SE = "SE"
    PG = "PG"
    CD = "CD"


class AgentState(str, Enum):
    SPAWNED = "Spawned"
    WORKING = "Working"
    IDLE = "Idle"
    COMPACTING = "Compacting"
    TERMINATED = "Terminated"


@dataclass(frozen=True)
class CompactionEvent:
    tick: int
    tokens_before: int
    tokens_after: int
    retained_summary: str


@dataclass(frozen=True)
class WakeAction:
    agent_id: str


@dataclass
class AgentDescriptor:
    agent_id: str
    role: Role
    brain: object
    spawn_seq: int
    spawned_at: int
    state: AgentState = AgentState.SPAWNED
    context_tokens: int = 0
    compact_threshold: int = DEFAULT_COMPACT_THRESHOLD
    compactions: list[CompactionEvent] = field(default_factory=list)
    idle_since: int | None = None
    wake_pending: bool = False
    terminated_reason: str = ""

    @property
    def live(self) -> bool:
        return self.state is not AgentState.TERMINATED


class AgentRegistry:
    def __init__(self, log: EventLog, roster_limits: dict[str, int],
                 clock: Callable[[], int] | None = None,
                 compact_threshold: int = DEFAULT_COMPACT_THRESHOLD,
                 root_role: Role = Role.PM):
        self._log = log
        self.roster_limits = dict(roster_limits)
        self._clock = clock or (lambda: 0)
        self._default_threshold = compact_threshold
        self._root_role = root_role
        self._agents: dict[str, AgentDescriptor] = {}
        self._counters: dict[Role, int] = {role: 0 for role in Role}

    # id scheme: PM, SE1, PG1.1, CD for first spawns; numeric suffixes after
    def _assign_id(self, role: Role) -> str:
        n = self._counters[role] + 1
        self._counters[role] = n
        if role is Role.PM:
            return "PM" if n == 1 else f"PM{n}"
        if role is Role.SE:
            return f"SE{n}"
        if role is Role.PG:
            return f"PG1.{n}"
        return "CD" if n == 1 else f"CD{n}"

    def spawn_agent(self, requester: str, role: Role | str, brain,
                    compact_threshold: int | None = None) -> AgentDescriptor:
        """Create a live agent; only the launcher root or a live PM may."""
        role = Role(role)
        if requester == LAUNCHER:
            if role is not self._root_role:
                raise Unauthorized(f"launcher may spawn only {self._root_role.value}")
        else:
            req = self._agents.get(requester)
            if req is None:
                raise UnknownAgent(requester)
            if req.role is not Role.PM or not req.live:
                raise Unauthorized(f"{requester} may not spawn agents")
        limit = self.roster_limits.get(role.value, 0)
        if self.live_count(role) >= limit:
            raise RosterLimitExceeded(f"{role.value} roster full at {limit}")

        tick = self._clock()
        descriptor = AgentDescriptor(
            agent_id=self._assign_id(role),
            role=role,
            brain=brain,
            spawn_seq=len(self._agents),
            spawned_at=tick,
            compact_threshold=compact_threshold or self._default_threshold,
        )
        self._agents[descriptor.agent_id] = descriptor
        self._log.append(tick, descriptor.agent_id, EventKind.SPAWN, {
            "agent": descriptor.agent_id,
            "role": role.value,
            "by": requester,
        })
        return descriptor

    def get(self, agent_id: str) -> AgentDescriptor:
        descriptor = self._agents.get(agent_id)
        if descriptor is None:
            raise UnknownAgent(agent_id)
        return descriptor

    def all_agents(self) -> list[AgentDescriptor]:
        return list(self._agents.values())

    def live_agents(self) -> list[AgentDescriptor]:
        return [d for d in self._agents.values() if d.live]

    def live_count(self, role: Role | str) -> int:
        role = Role(role)
        return sum(1 for d in self._agents.values() if d.live and d.role is role)

    def record_tokens(self, agent_id: str, delta: int) -> int:
        """Charge decision tokens against the agent's context window."""
        descriptor = self.get(agent_id)
        if not descriptor.live:
            raise TerminatedAgent(agent_id)
        if delta < 0:
            raise ValueError("token delta must be >= 0")
        descriptor.context_tokens += delta
        self._log.append(self._clock(), agent_id, EventKind.TOKEN_USAGE, {
            "delta": delta,
            "total": descriptor.context_tokens,
        })
        return descriptor.context_tokens

    def maybe_autocompact(self, agent_id: str) -> CompactionEvent | None:
        """Compact the agent's context if it crossed the threshold.

        The brain produces the retained summary; the counter resets to the
        summary's estimated size, strictly below both the threshold and
        the pre-compaction count.
        """
        descriptor = self.get(agent_id)
        if not descriptor.live:
            raise TerminatedAgent(agent_id)
        if descriptor.context_tokens < descriptor.compact_threshold:
            return None

        tick = self._clock()
        before = descriptor.context_tokens
        descriptor.state = AgentState.COMPACTING
        summarize = getattr(descriptor.brain, "summarize", None)
        summary = summarize() if callable(summarize) else "recap: context compacted."
        after = min(estimate_tokens(summary), descriptor.compact_threshold - 1, before - 1)
        after = max(after, 0)
        descriptor.context_tokens = after
        event = CompactionEvent(
            tick=tick, tokens_before=before, tokens_after=after,
            retained_summary=summary,
        )
        descriptor.compactions.append(event)
        self._log.append(tick, agent_id, EventKind.COMPACTION, {
            "tokens_before": before,
            "tokens_after": after,
            "retained_summary": summary,
        })
        descriptor.state = AgentState.WORKING
        return event

    def terminate(self, agent_id: str, reason: str = "") -> None:
        descriptor = self.get(agent_id)
        if not descriptor.live:
            return
        descriptor.state = AgentState.TERMINATED
        descriptor.terminated_reason = reason
        descriptor.wake_pending = False
        self._log.append(self._clock(), agent_id, EventKind.TERMINATE, {
            "agent": agent_id,
            "reason": reason,
        })

    def mark_working(self, agent_id: str) -> None:
        descriptor = self.get(agent_id)
        if descriptor.live:
            descriptor.state = AgentState.WORKING
            descriptor.idle_since = None
            descriptor.wake_pending = False

    def mark_idle(self, agent_id: str, tick: int) -> None:
        descriptor = self.get(agent_id)
        if descriptor.live:
            if descriptor.state is not AgentState.IDLE:
                descriptor.idle_since = tick
            descriptor.state = AgentState.IDLE
            descriptor.wake_pending = False

    def wake(self, agent_id: str) -> None:
        descriptor = self.get(agent_id)
        if descriptor.live:
            descriptor.wake_pending = True

    def tick_hooks(self, tick: int,
                   idle_patience: int = DEFAULT_IDLE_PATIENCE) -> list[WakeAction]:
        """Wake agents idle for at least idle_patience ticks.

        The wake forces one brain decision on their next turn, so no
        polling-type agent sleeps through its own job results.
        """
        wakes: list[WakeAction] = []
        for descriptor in self._agents.values():
            if (descriptor.live
                    and descriptor.state is AgentState.IDLE
                    and not descriptor.wake_pending
                    and descriptor.idle_since is not None
                    and tick - descriptor.idle_since >= idle_patience):
                descriptor.wake_pending = True
                wakes.append(WakeAction(descriptor.agent_id))
        return wakes
