import pytest

from vibetuner.actions import NoOp
from vibetuner.agents import LAUNCHER, AgentRegistry, AgentState, Role
from vibetuner.brains import ScriptedBrain
from vibetuner.errors import (
    RosterLimitExceeded,
    TerminatedAgent,
    Unauthorized,
    UnknownAgent,
)
from vibetuner.telemetry import EventKind, EventLog, replay_state

ROSTER = {"PM": 1, "SE": 1, "PG": 3, "CD": 1}


class _Still:
    lossy = False

    def step(self, obs):
        return [NoOp()]


def brain():
    return ScriptedBrain(_Still())


def registry(roster=None, threshold=150_000, clock=None):
    log = EventLog()
    reg = AgentRegistry(log, roster or ROSTER, clock=clock,
                        compact_threshold=threshold)
    return reg, log


def test_launcher_spawns_root_then_pm_builds_team():
    reg, log = registry()
    pm = reg.spawn_agent(LAUNCHER, Role.PM, brain())
    assert pm.agent_id == "PM"
    ids = [reg.spawn_agent("PM", role, brain()).agent_id
           for role in (Role.SE, Role.PG, Role.PG, Role.CD)]
    assert ids == ["SE1", "PG1.1", "PG1.2", "CD"]
    spawned = [e.payload["agent"] for e in log.events
               if e.kind is EventKind.SPAWN]
    assert spawned == ["PM", "SE1", "PG1.1", "PG1.2", "CD"]


def test_launcher_limited_to_root_role():
    reg, _ = registry()
    with pytest.raises(Unauthorized):
        reg.spawn_agent(LAUNCHER, Role.SE, brain())


def test_only_manager_spawns():
    reg, _ = registry()
    reg.spawn_agent(LAUNCHER, Role.PM, brain())
    se = reg.spawn_agent("PM", Role.SE, brain())
    with pytest.raises(Unauthorized):
        reg.spawn_agent(se.agent_id, Role.PG, brain())
    with pytest.raises(UnknownAgent):
        reg.spawn_agent("nobody", Role.PG, brain())


def test_roster_limit_enforced():
    reg, _ = registry()
    reg.spawn_agent(LAUNCHER, Role.PM, brain())
    for _ in range(3):
        reg.spawn_agent("PM", Role.PG, brain())
    with pytest.raises(RosterLimitExceeded):
        reg.spawn_agent("PM", Role.PG, brain())


def test_terminated_slot_can_be_refilled_with_fresh_id():
    reg, _ = registry()
    reg.spawn_agent(LAUNCHER, Role.PM, brain())
    se = reg.spawn_agent("PM", Role.SE, brain())
    reg.terminate(se.agent_id, "done")
    replacement = reg.spawn_agent("PM", Role.SE, brain())
    assert replacement.agent_id == "SE2"


def test_token_accounting_and_replay_match():
    reg, log = registry()
    pm = reg.spawn_agent(LAUNCHER, Role.PM, brain())
    live_totals = []
    for delta in (1500, 230, 4096, 0, 77):
        live_totals.append(reg.record_tokens(pm.agent_id, delta))
    assert live_totals == [1500, 1730, 5826, 5826, 5903]
    snap = replay_state(log.events).agents["PM"]
    assert snap.context_tokens == 5903
    assert [v for _, v in snap.token_series] == live_totals


def test_token_delta_must_be_non_negative():
    reg, _ = registry()
    pm = reg.spawn_agent(LAUNCHER, Role.PM, brain())
    with pytest.raises(ValueError):
        reg.record_tokens(pm.agent_id, -1)


def test_autocompact_below_threshold_is_noop():
    reg, log = registry(threshold=1000)
    pm = reg.spawn_agent(LAUNCHER, Role.PM, brain())
    reg.record_tokens(pm.agent_id, 999)
    assert reg.maybe_autocompact(pm.agent_id) is None
    assert not [e for e in log.events if e.kind is EventKind.COMPACTION]


def test_autocompact_resets_strictly_below_threshold():
    reg, log = registry(threshold=1000)
    pm = reg.spawn_agent(LAUNCHER, Role.PM, brain())
    reg.record_tokens(pm.agent_id, 1500)
    event = reg.maybe_autocompact(pm.agent_id)
    assert event is not None
    assert event.tokens_before == 1500
    assert event.tokens_after < 1000
    assert pm.context_tokens == event.tokens_after
    logged = [e for e in log.events if e.kind is EventKind.COMPACTION]
    assert len(logged) == 1
    assert logged[0].payload["tokens_after"] == event.tokens_after


def test_double_threshold_crossing_compacts_exactly_twice():
    reg, log = registry(threshold=1000)
    pm = reg.spawn_agent(LAUNCHER, Role.PM, brain())
    compactions = 0
    for delta in (400, 700, 100, 50, 900, 100):
        reg.record_tokens(pm.agent_id, delta)
        if reg.maybe_autocompact(pm.agent_id) is not None:
            compactions += 1
    assert compactions == 2
    assert len([e for e in log.events
                if e.kind is EventKind.COMPACTION]) == 2
    assert len(pm.compactions) == 2


def test_operations_on_terminated_agent_raise():
    reg, _ = registry()
    pm = reg.spawn_agent(LAUNCHER, Role.PM, brain())
    reg.terminate(pm.agent_id, "stop")
    with pytest.raises(TerminatedAgent):
        reg.record_tokens(pm.agent_id, 10)
    with pytest.raises(TerminatedAgent):
        reg.maybe_autocompact(pm.agent_id)


def test_idle_agents_wake_after_patience():
    now = {"tick": 0}
    reg, _ = registry(clock=lambda: now["tick"])
    pm = reg.spawn_agent(LAUNCHER, Role.PM, brain())
    reg.mark_idle(pm.agent_id, tick=0)
    for tick in range(1, 3):
        now["tick"] = tick
        assert reg.tick_hooks(tick, idle_patience=3) == []
    now["tick"] = 3
    wakes = reg.tick_hooks(3, idle_patience=3)
    assert [w.agent_id for w in wakes] == ["PM"]
    assert pm.wake_pending
    # no duplicate wake while one is pending
    assert reg.tick_hooks(4, idle_patience=3) == []


def test_mark_working_clears_idle_state():
    reg, _ = registry()
    pm = reg.spawn_agent(LAUNCHER, Role.PM, brain())
    reg.mark_idle(pm.agent_id, tick=5)
    reg.mark_working(pm.agent_id)
    assert pm.state is AgentState.WORKING
    assert pm.idle_since is None
