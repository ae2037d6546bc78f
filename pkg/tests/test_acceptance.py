"""Acceptance gate: one test per shipping criterion.

Run with ``pytest tests/test_acceptance.py -v`` to get a single pass/fail
line per criterion.  Each test carries its own wall-clock budget so a
regression that slows the tool down also fails the gate.
"""

from __future__ import annotations

import random
import time
from contextlib import contextmanager
from decimal import Decimal
from pathlib import Path

from vibetuner.agents import LAUNCHER, AgentRegistry, Role
from vibetuner.cli import main
from vibetuner.config import bundled_requirements_text
from vibetuner.execution import (
    BudgetLedger,
    compute_points,
    gemm_reference,
    lint_forbidden,
    make_problem,
    simulate_kernel,
    verify_error_norm,
)
from vibetuner.requirements import parse_requirements
from vibetuner.brains import ScriptedBrain
from vibetuner.telemetry import EventKind, EventLog, replay_state
from vibetuner.tuning import ChangeLog, CandidateVersion, IllegalTransition, Metrics

from conftest import events_modulo_wall, read_events, run_scenario

import pytest


@contextmanager
def within(seconds: float):
    """Fail the enclosing test if the block exceeds its wall-clock budget."""
    start = time.perf_counter()
    yield
    elapsed = time.perf_counter() - start
    assert elapsed < seconds, (
        f"wall-clock budget exceeded: {elapsed:.2f}s >= {seconds:g}s")


# 1. The bundled requirements document round-trips into exact field values.
def test_requirements_round_trip():
    with within(1.0):
        spec = parse_requirements(bundled_requirements_text())
        assert spec.budget.min_points == Decimal("100")
        assert spec.budget.reference_points == Decimal("500")
        assert spec.budget.max_points == Decimal("1000")
        assert spec.point_rate == Decimal("0.007")
        assert spec.time_limits.min_minutes == 120
        assert spec.time_limits.reference_minutes == 150
        assert spec.time_limits.max_minutes == 180
        assert spec.agent_roster == {"PM": 1, "SE": 1, "PG": 3, "CD": 1}
        assert spec.forbidden_libraries == ["cuBLAS", "MKL"]


# 2. Point charging is exact decimal arithmetic with zero drift in the ledger.
def test_points_formula_exact():
    with within(1.0):
        rng = random.Random(0xACCE)
        rate = Decimal("0.007")
        spec = parse_requirements(bundled_requirements_text())
        ledger = BudgetLedger(spec.budget)
        independent_total = Decimal("0")
        for _ in range(1000):
            elapsed = Decimal(f"{rng.uniform(0.001, 5000.0):.6f}")
            gpus = rng.randint(1, 8)
            points = compute_points(elapsed, gpus, rate)
            assert points == elapsed * rate * gpus
            ledger.add(points)
            independent_total += elapsed * rate * gpus
        assert ledger.spent == independent_total
        assert ledger.job_count == 1000


# 3. Replaying the bundled event-log fixture reproduces the recorded history.
def test_version_history_replay(fixture_events):
    with within(1.0):
        state = replay_state(fixture_events)
        sota = state.sota()
        assert sota is not None
        assert sota.version == "1.4.0"
        assert sota.gflops == 3365.2
        assert sota.efficiency_pct == 43.14

        flagged = state.candidates["1.3.0"]
        assert flagged.status == "Invalid"
        assert flagged.version != sota.version

        peak = 7800.0
        measured = {version: cand for version, cand in state.candidates.items()
                    if cand.gflops is not None}
        assert len(measured) == 5
        for version, cand in measured.items():
            recomputed = cand.gflops / peak * 100.0
            assert abs(recomputed - cand.efficiency_pct) <= 0.05, (
                f"v{version}: stored {cand.efficiency_pct} vs "
                f"recomputed {recomputed:.4f}")


# 4. A planted prohibited-library candidate is flagged, struck from the
#    record promptly, and never survives to the final frontier or publish
#    directory; the whole run is reproducible event for event.
def test_violation_scenario_deterministic(tmp_path):
    with within(10.0):
        summary_a, project_a = run_scenario(
            tmp_path, "violation-demo", seed=42, subdir="a")
        summary_b, project_b = run_scenario(
            tmp_path, "violation-demo", seed=42, subdir="b")
        events = read_events(project_a)

        violations = [e for e in events if e["kind"] == "Violation"]
        assert violations, "no violation was flagged"
        flag = violations[0]
        assert flag["payload"]["token"] == "cuBLAS"
        assert flag["payload"]["by"] == "CD"
        planted = flag["payload"]["version"]

        recorded_at = next(
            i for i, e in enumerate(events)
            if e["kind"] == "ResultRecorded"
            and e["payload"]["version"] == planted)
        invalidated_at = next(
            i for i, e in enumerate(events)
            if e["kind"] == "ResultRecorded"
            and e["payload"]["version"] == planted
            and e["payload"]["verdict"] == "Invalid")
        assert invalidated_at - recorded_at <= 10, (
            f"invalidation lagged {invalidated_at - recorded_at} events")

        assert summary_a.sota is not None
        assert summary_a.sota[0] != planted
        publish_dir = project_a / "exports" / "publish"
        assert not (publish_dir / f"v{planted}.c").exists()
        assert (publish_dir / f"v{summary_a.sota[0]}.c").is_file()

        assert summary_a.reason == summary_b.reason
        assert summary_a.sota == summary_b.sota
        assert events_modulo_wall(project_a) == events_modulo_wall(project_b)


# 5. Across 20 seeds the reviewed team never publishes a prohibited call,
#    while the single-agent arm leaks one in at least 80% of seeds.
def test_solo_vs_multi_lossy_compaction(tmp_path):
    with within(60.0):
        spec = parse_requirements(bundled_requirements_text())
        forbidden = spec.forbidden_libraries
        seeds = range(20)
        multi_clean = 0
        solo_flagged = 0
        for seed in seeds:
            summary_m, project_m = run_scenario(
                tmp_path, "lossy", mode="multi", seed=seed,
                subdir=f"multi-{seed}")
            assert summary_m.published, f"multi seed {seed} published nothing"
            published = (project_m / "exports" / "publish"
                         / f"v{summary_m.published}.c")
            if not lint_forbidden(published.read_text(encoding="utf-8"),
                                  forbidden):
                multi_clean += 1

            summary_s, project_s = run_scenario(
                tmp_path, "lossy", mode="solo", seed=seed,
                subdir=f"solo-{seed}")
            assert summary_s.published, f"solo seed {seed} published nothing"
            published = (project_s / "exports" / "publish"
                         / f"v{summary_s.published}.c")
            if lint_forbidden(published.read_text(encoding="utf-8"),
                              forbidden):
                solo_flagged += 1
        assert multi_clean == len(seeds), (
            f"review missed a prohibited call in "
            f"{len(seeds) - multi_clean} of {len(seeds)} seeds")
        assert solo_flagged >= 0.8 * len(seeds), (
            f"solo arm leaked in only {solo_flagged} of {len(seeds)} seeds")


# 6. Token deltas that cross the context threshold twice trigger exactly two
#    compactions, and the log alone reconstructs the counter at every step.
def test_autocompact_double_crossing():
    with within(1.0):
        threshold = 150_000
        now = {"tick": 0}
        log = EventLog()
        registry = AgentRegistry(log, {"PM": 1}, clock=lambda: now["tick"],
                                 compact_threshold=threshold)
        pm = registry.spawn_agent(LAUNCHER, Role.PM, ScriptedBrain(None))

        live_series = []
        compactions = 0
        for delta in (60_000, 80_000, 20_000, 40_000, 70_000, 90_000, 5_000):
            now["tick"] += 1
            registry.record_tokens(pm.agent_id, delta)
            live_series.append((now["tick"], pm.context_tokens))
            event = registry.maybe_autocompact(pm.agent_id)
            if event is not None:
                compactions += 1
                assert event.tokens_after < threshold
                assert event.tokens_after < event.tokens_before
                live_series.append((now["tick"], pm.context_tokens))
        assert compactions == 2

        replayed = []
        for event in log.events:
            if event.agent != pm.agent_id:
                continue
            if event.kind is EventKind.TOKEN_USAGE:
                replayed.append((event.tick, event.payload["total"]))
            elif event.kind is EventKind.COMPACTION:
                replayed.append((event.tick, event.payload["tokens_after"]))
        assert replayed == live_series

        logged = [e for e in log.events if e.kind is EventKind.COMPACTION]
        assert len(logged) == 2
        assert all(e.payload["tokens_after"] < threshold for e in logged)


# 7. With the ceiling lowered to afford exactly three jobs, the run charges
#    three, never submits a fourth after crossing the ceiling, and exits 2.
def test_budget_enforcement_exit2(tmp_path):
    with within(10.0):
        summary, project = run_scenario(
            tmp_path, "baseline", seed=0,
            budget_override={"min": 10, "reference": 30, "max": 40})
        assert summary.exit_code == 2
        assert summary.reason == "budget"
        # Independent oracle: the three affordable jobs cost
        # 17.068436 + 16.301992 + 14.088564 points at 4 GPUs x 0.007/s.
        assert Decimal(summary.spent) == Decimal("47.458992")
        assert Decimal(summary.spent) > Decimal("40")

        events = read_events(project)
        submit_idx = [i for i, e in enumerate(events)
                      if e["kind"] == "JobSubmitted"]
        assert len(submit_idx) == 3
        exceeded_idx = next(
            i for i, e in enumerate(events)
            if e["kind"] == "BudgetUpdate"
            and e["payload"]["status"] == "Exceeded")
        assert all(i < exceeded_idx for i in submit_idx), (
            "a job was submitted after the budget was exhausted")


# 8. Numerical verification: a boundary-bug kernel diverges from the
#    triple-loop reference beyond tolerance and can only be recorded Failed;
#    the faithful kernel matches bit for bit and is recorded Valid.
def test_verification_buggy_vs_clean():
    with within(1.0):
        tolerance = 1e-12
        a, b, c = make_problem(7, 5, 3, seed=11)
        alpha, beta = 1.5, 0.5
        reference = gemm_reference(alpha, a, b, beta, c)

        buggy = simulate_kernel(alpha, a, b, beta, c, buggy=True)
        buggy_norm = verify_error_norm(buggy, reference)
        assert buggy_norm > tolerance

        faithful = simulate_kernel(alpha, a, b, beta, c)
        clean_norm = verify_error_norm(faithful, reference)
        assert clean_norm == 0.0

        changelog = ChangeLog(tolerance=tolerance)

        def candidate(version):
            return CandidateVersion(version=version, parent=None,
                                    params={}, label="check", agent="PG1.1")

        changelog.register(candidate("0.1.0"), tick=0)
        with pytest.raises(IllegalTransition):
            changelog.record_result(
                "0.1.0",
                Metrics(gflops=1.0, efficiency_pct=1.0,
                        error_norm=buggy_norm, elapsed_s=Decimal("1"),
                        gpus=1),
                "Valid", tick=1)
        failed = changelog.record_result("0.1.0", None, "Failed", tick=1)
        assert failed.status.value == "Failed"

        changelog.register(candidate("0.2.0"), tick=2)
        valid = changelog.record_result(
            "0.2.0",
            Metrics(gflops=1.0, efficiency_pct=1.0, error_norm=clean_norm,
                    elapsed_s=Decimal("1"), gpus=1),
            "Valid", tick=3)
        assert valid.status.value == "Valid"
        assert changelog.sota().version == "0.2.0"


# 9. Two complete command-line runs with the same configuration and seed
#    write identical event logs (timestamps aside) and identical exports.
def test_run_determinism(tmp_path, capsys):
    with within(20.0):
        dirs = [tmp_path / "first", tmp_path / "second"]
        for directory in dirs:
            assert main(["run", str(directory), "--seed", "0"]) == 0
        capsys.readouterr()
        assert events_modulo_wall(dirs[0]) == events_modulo_wall(dirs[1])
        for name in ("performance.csv", "budget.csv", "tokens.csv",
                     "report.md"):
            first = (dirs[0] / "exports" / name).read_bytes()
            second = (dirs[1] / "exports" / name).read_bytes()
            assert first == second, f"exports/{name} differs between runs"
