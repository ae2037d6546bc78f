from decimal import Decimal

import pytest
from hypothesis import given
from hypothesis import strategies as st

from vibetuner.errors import (
    DuplicateVersion,
    ExhaustedSpace,
    IllegalTransition,
    UnknownStrategy,
    UnknownVersion,
)
from vibetuner.tuning import (
    CandidateVersion,
    ChangeLog,
    Metrics,
    ParameterSpace,
    Status,
    next_params,
    register_strategy,
)

SPACE = ParameterSpace.from_dict({
    "BLOCK_M": (32, 64, 128),
    "BLOCK_N": (32, 64, 128),
    "BLOCK_K": (8, 16, 32, 64),
})


def cand(version, parent=None, label="x", params=None):
    return CandidateVersion(version=version, parent=parent,
                            params=params or {"BLOCK_M": 64}, label=label,
                            agent="PG1.1")


def metrics(gflops, error_norm=1e-15):
    return Metrics(gflops=gflops, efficiency_pct=100.0 * gflops / 7800.0,
                   error_norm=error_norm, elapsed_s=Decimal("1"), gpus=4)


def test_register_starts_pending():
    log = ChangeLog()
    entry = log.register(cand("1.1.0"), tick=0)
    assert entry.status is Status.PENDING
    assert log.versions() == ["1.1.0"]
    assert log.registered_tick("1.1.0") == 0


def test_register_rejects_duplicates_and_unknown_parents():
    log = ChangeLog()
    log.register(cand("1.1.0"), tick=0)
    with pytest.raises(DuplicateVersion):
        log.register(cand("1.1.0"), tick=1)
    with pytest.raises(UnknownVersion):
        log.register(cand("1.2.0", parent="0.9.0"), tick=1)


def test_valid_requires_metrics_within_tolerance():
    log = ChangeLog(tolerance=1e-12)
    log.register(cand("1.1.0"), tick=0)
    with pytest.raises(IllegalTransition):
        log.record_result("1.1.0", None, Status.VALID, tick=1)
    with pytest.raises(IllegalTransition):
        log.record_result("1.1.0", metrics(100.0, error_norm=1e-3),
                          Status.VALID, tick=1)
    entry = log.record_result("1.1.0", metrics(100.0), Status.VALID, tick=1)
    assert entry.status is Status.VALID


def test_valid_can_only_move_to_invalid():
    log = ChangeLog()
    log.register(cand("1.1.0"), tick=0)
    log.record_result("1.1.0", metrics(10.0), Status.VALID, tick=1)
    with pytest.raises(IllegalTransition):
        log.record_result("1.1.0", metrics(11.0), Status.VALID, tick=2)
    entry = log.record_result("1.1.0", None, Status.INVALID, tick=2)
    assert entry.status is Status.INVALID
    # invalidation keeps the recorded metrics for the audit trail
    assert entry.metrics is not None and entry.metrics.gflops == 10.0


_VERDICTS = (Status.VALID, Status.INVALID, Status.FAILED)
_LEGAL = {
    Status.PENDING: {Status.VALID, Status.INVALID, Status.FAILED},
    Status.VALID: {Status.INVALID},
    Status.INVALID: set(),
    Status.FAILED: set(),
}


@given(st.lists(st.sampled_from(_VERDICTS), min_size=1, max_size=6))
def test_transition_property_matches_table(verdicts):
    """Replaying any verdict sequence, the log accepts exactly the moves
    in the documented transition table and nothing else."""
    log = ChangeLog()
    log.register(cand("1.1.0"), tick=0)
    status = Status.PENDING
    for i, verdict in enumerate(verdicts):
        expected_legal = verdict in _LEGAL[status]
        try:
            log.record_result("1.1.0", metrics(float(i + 1)), verdict,
                              tick=i + 1)
            assert expected_legal
            status = verdict
        except IllegalTransition:
            assert not expected_legal
    assert log.current("1.1.0").status is status


def test_sota_prefers_highest_gflops():
    log = ChangeLog()
    for i, g in enumerate((10.0, 30.0, 20.0), start=1):
        v = f"1.{i}.0"
        log.register(cand(v), tick=i)
        log.record_result(v, metrics(g), Status.VALID, tick=i)
    assert log.sota().version == "1.2.0"


def test_sota_tie_keeps_earliest():
    log = ChangeLog()
    for i in (1, 2):
        v = f"1.{i}.0"
        log.register(cand(v), tick=i)
        log.record_result(v, metrics(25.0), Status.VALID, tick=i)
    assert log.sota().version == "1.1.0"


def test_sota_drops_invalidated_leader():
    log = ChangeLog()
    for i, g in enumerate((10.0, 50.0), start=1):
        v = f"1.{i}.0"
        log.register(cand(v), tick=i)
        log.record_result(v, metrics(g), Status.VALID, tick=i)
    assert log.sota().version == "1.2.0"
    log.record_result("1.2.0", None, Status.INVALID, tick=3)
    assert log.sota().version == "1.1.0"


def test_sota_none_when_nothing_valid():
    log = ChangeLog()
    log.register(cand("1.1.0"), tick=0)
    log.record_result("1.1.0", None, Status.FAILED, tick=1)
    assert log.sota() is None


def test_entries_are_append_only_snapshots():
    log = ChangeLog()
    log.register(cand("1.1.0"), tick=0)
    log.record_result("1.1.0", metrics(10.0), Status.VALID, tick=1)
    log.record_result("1.1.0", None, Status.INVALID, tick=2)
    statuses = [e.candidate.status for e in log.entries]
    assert statuses == [Status.PENDING, Status.VALID, Status.INVALID]


# --- parameter space and strategies -------------------------------------------

def test_space_size_and_points():
    assert SPACE.size() == 3 * 3 * 4
    points = list(SPACE.points())
    assert len(points) == 36
    assert len({SPACE.key(p) for p in points}) == 36


def test_grid_visits_every_point_once():
    seen = []
    while True:
        try:
            seen.append(next_params("grid", SPACE, seen, seed=0))
        except ExhaustedSpace:
            break
    assert len(seen) == SPACE.size()
    assert len({SPACE.key(p) for p in seen}) == SPACE.size()


def test_random_strategy_is_seeded_and_exhaustive():
    def draw_all(seed):
        seen = []
        while True:
            try:
                seen.append(next_params("random", SPACE, seen, seed=seed))
            except ExhaustedSpace:
                break
        return seen

    first, second = draw_all(7), draw_all(7)
    assert first == second
    assert len(first) == SPACE.size()


def test_history_accepts_changelog():
    log = ChangeLog()
    first = next_params("grid", SPACE, log, seed=0)
    log.register(cand("1.1.0", params=first), tick=0)
    second = next_params("grid", SPACE, log, seed=0)
    assert SPACE.key(first) != SPACE.key(second)


def test_unknown_strategy_raises():
    with pytest.raises(UnknownStrategy):
        next_params("anneal", SPACE, [], seed=0)


def test_register_strategy_extension_point():
    def corners(space, visited, seed):
        for point in space.points():
            if space.key(point) not in visited:
                return point
        raise ExhaustedSpace("corners")

    register_strategy("corners-test", corners)
    got = next_params("corners-test", SPACE, [], seed=0)
    assert got in list(SPACE.points())
