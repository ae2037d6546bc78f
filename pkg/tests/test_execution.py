import math
import shutil
import subprocess
from decimal import Decimal
from importlib import resources
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vibetuner.errors import (
    BuildFailed,
    MetricParseError,
    NegativeInput,
    NonPositiveDim,
    NonPositivePeak,
    ShapeMismatch,
)
from vibetuner.execution import (
    BudgetLedger,
    PerformanceModel,
    SimulatedBackend,
    anonymize_text,
    budget_status,
    compute_points,
    efficiency_pct,
    gemm_flops,
    gemm_reference,
    lint_forbidden,
    make_problem,
    parse_metrics,
    scan_anonymization,
    simulate_kernel,
    submit_local,
    verify_error_norm,
)
from vibetuner.requirements import Budget
from vibetuner.scenarios import OPTIMUM, PEAK_GFLOPS, build_scenario


def gemm_oracle(alpha, a, b, beta, c):
    """Triple-nested-loop reference; written first, kept independent of
    the library implementation on purpose."""
    m, k = len(a), len(a[0])
    n = len(b[0])
    out = [[0.0] * n for _ in range(m)]
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for kk in range(k):
                acc += a[i][kk] * b[kk][j]
            out[i][j] = alpha * acc + beta * c[i][j]
    return out


# --- points arithmetic -------------------------------------------------------

def test_points_unit_price():
    assert compute_points(1, 1, Decimal("0.007")) == Decimal("0.007")


def test_points_known_job():
    # 609.587 s on 4 GPUs at the documented rate
    got = compute_points(Decimal("609.587"), 4, Decimal("0.007"))
    assert got == Decimal("17.068436")


def test_points_rejects_negatives():
    with pytest.raises(NegativeInput):
        compute_points(-1, 4, Decimal("0.007"))
    with pytest.raises(NegativeInput):
        compute_points(1, -4, Decimal("0.007"))


@given(st.decimals(min_value=0, max_value=10**6, places=3),
       st.integers(min_value=0, max_value=64))
def test_points_match_decimal_product(elapsed, gpus):
    rate = Decimal("0.007")
    assert compute_points(elapsed, gpus, rate) == elapsed * rate * gpus


@given(st.lists(st.decimals(min_value=0, max_value=10**4, places=3),
                max_size=50))
def test_ledger_total_is_exact_sum(charges):
    budget = Budget(Decimal(100), Decimal(500), Decimal(1000))
    ledger = BudgetLedger(budget)
    for charge in charges:
        ledger.add(charge)
    assert ledger.spent == sum(charges, Decimal(0))


def test_budget_bands():
    budget = Budget(Decimal(100), Decimal(500), Decimal(1000))
    assert budget_status(Decimal(0), budget) == "UnderMin"
    assert budget_status(Decimal("99.999999"), budget) == "UnderMin"
    assert budget_status(Decimal(100), budget) == "InRange"
    assert budget_status(Decimal("899.999"), budget) == "InRange"
    assert budget_status(Decimal(900), budget) == "NearMax"
    assert budget_status(Decimal(1000), budget) == "NearMax"
    assert budget_status(Decimal("1000.000001"), budget) == "Exceeded"


def test_remaining_goes_negative_without_clamping():
    ledger = BudgetLedger(Budget(Decimal(1), Decimal(2), Decimal(3)))
    ledger.add(Decimal(5))
    assert ledger.remaining() == Decimal(-2)
    assert ledger.status() == "Exceeded"


# --- kernel math -------------------------------------------------------------

def test_gemm_flops_counts_multiply_and_add():
    assert gemm_flops(7, 5, 3) == 2 * 7 * 5 * 3
    with pytest.raises(NonPositiveDim):
        gemm_flops(0, 5, 3)


def test_efficiency_pct():
    assert efficiency_pct(3900.0, 7800.0) == 50.0
    with pytest.raises(NonPositivePeak):
        efficiency_pct(1.0, 0.0)


def test_reference_matches_triple_loop_oracle():
    a, b, c = make_problem(7, 5, 3, seed=11)
    want = np.array(gemm_oracle(1.5, a.tolist(), b.tolist(), -0.5, c.tolist()))
    got = gemm_reference(1.5, a, b, -0.5, c)
    assert verify_error_norm(got, want) < 1e-13


def test_error_norm_of_identical_inputs_is_exactly_zero():
    a, b, c = make_problem(7, 5, 3, seed=3)
    out = gemm_reference(1.0, a, b, 1.0, c)
    assert verify_error_norm(out, out) == 0.0


def test_buggy_kernel_diverges_from_oracle():
    a, b, c = make_problem(7, 5, 3, seed=3)
    want = np.array(gemm_oracle(1.0, a.tolist(), b.tolist(), 1.0, c.tolist()))
    bad = simulate_kernel(1.0, a, b, 1.0, c, buggy=True)
    norm = verify_error_norm(bad, want)
    assert norm > 1e-12
    # only the dropped final row differs
    assert verify_error_norm(bad[:-1], want[:-1]) < 1e-13


def test_shape_mismatch_raises():
    with pytest.raises(ShapeMismatch):
        verify_error_norm(np.zeros((2, 2)), np.zeros((3, 2)))
    with pytest.raises(ShapeMismatch):
        gemm_reference(1.0, np.zeros((2, 3)), np.zeros((4, 2)), 0.0,
                       np.zeros((2, 2)))


def test_make_problem_is_deterministic():
    first = make_problem(4, 4, 4, seed=9)
    second = make_problem(4, 4, 4, seed=9)
    for x, y in zip(first, second):
        assert np.array_equal(x, y)


# --- lint + anonymization ----------------------------------------------------

FORBIDDEN = ["cuBLAS", "MKL"]


def test_lint_flags_case_insensitive_substring():
    src = "#include <cublas_v2.h>\nint main() { return 0; }\n"
    hits = lint_forbidden(src, FORBIDDEN)
    assert [(h.token, h.line_no) for h in hits] == [("cuBLAS", 1)]


def test_lint_clean_fixture_has_no_hits():
    path = resources.files("vibetuner") / "fixtures" / "gemm_triple_loop.c"
    assert lint_forbidden(path.read_text(), FORBIDDEN) == []


def test_lint_reports_every_offending_line():
    src = "cblas_dgemm();\nmkl_set_num_threads(4);\nuse_mkl();\n"
    hits = lint_forbidden(src, ["MKL"])
    assert [h.line_no for h in hits] == [2, 3]


def test_anonymize_scrubs_home_paths_only():
    src = "// built under /home/u10234/tuning\ncublasDgemm();\n"
    out = anonymize_text(src)
    assert "/home/ANON/tuning" in out
    assert "u10234" not in out
    # anonymization is not a lint pass: forbidden calls stay visible
    assert "cublasDgemm" in out


def test_anonymize_scrubs_named_tokens():
    out = anonymize_text("login as alice from /home/alice\n", ["alice"])
    assert "alice" not in out
    assert out.count("ANON") >= 2


def test_scan_anonymization_hits():
    hits = scan_anonymization("path /home/bob/x\n")
    assert hits and hits[0].line_no == 1


# --- simulated backend -------------------------------------------------------

@pytest.fixture(scope="module")
def model() -> PerformanceModel:
    return build_scenario("baseline", seed=0).model


def test_model_peak_at_optimum(model):
    got = model.gflops("DoubleBuffering", OPTIMUM)
    assert got == pytest.approx(3365.2, abs=1e-6)


def test_model_penalizes_off_optimum_tiles(model):
    off = dict(OPTIMUM, BLOCK_K=32)  # one index step away
    assert model.gflops("DoubleBuffering", off) == pytest.approx(3365.2 / 2,
                                                                 abs=1e-6)


def test_model_elapsed_scales_inverse_to_gflops(model):
    fast = model.elapsed_s("DoubleBuffering", OPTIMUM)
    slow = model.elapsed_s("Baseline", OPTIMUM)
    assert slow > fast > 0


def test_model_footprint_overflow():
    scenario = build_scenario("baseline", seed=0)
    big = {"BLOCK_M": 128, "BLOCK_N": 128, "BLOCK_K": 64}
    assert scenario.model.footprint_bytes(big) > scenario.model.sm_limit_bytes


class _Candidate:
    def __init__(self, version, label, params):
        self.version, self.label, self.params = version, label, params


def test_backend_latency_is_seeded(model):
    jobs = [SimulatedBackend(model, seed=5).submit(
        _Candidate("1.1.0", "Baseline", OPTIMUM), 4, "small", tick=0)
        for _ in range(2)]
    assert jobs[0].ready_tick == jobs[1].ready_tick
    assert jobs[0].job_id == "sim-1"


def test_backend_poll_sequence(model):
    backend = SimulatedBackend(model, seed=0)
    job = backend.submit(_Candidate("1.1.0", "Baseline", OPTIMUM), 4,
                         "small", tick=0)
    states = []
    for tick in range(5):
        state, outputs, error = backend.poll(job, tick)
        states.append(state)
        if state == "done":
            assert error is None
            assert float(outputs["gflops"]) > 0
            assert Decimal(outputs["elapsed_s"]) > 0
            break
    assert states[-1] == "done"
    assert all(s in ("pending", "running") for s in states[:-1])


def test_backend_resource_overflow_errors(model):
    backend = SimulatedBackend(model, seed=0)
    big = {"BLOCK_M": 128, "BLOCK_N": 128, "BLOCK_K": 64}
    job = backend.submit(_Candidate("1.1.0", "WideTiles", big), 4,
                         "small", tick=0)
    state = "pending"
    for tick in range(5):
        state, outputs, error = backend.poll(job, tick)
        if state == "error":
            break
    assert state == "error"
    assert "resource overflow" in error


def test_buggy_label_fails_verification_tolerance():
    scenario = build_scenario("violation-demo", seed=0)
    model = scenario.model
    assert "EdgeUnroll" in model.buggy_labels
    assert model.error_norm("EdgeUnroll") > 1e-12
    assert model.error_norm("Baseline") <= 1e-12


# --- metric parsing and local execution ---------------------------------------

def test_parse_metrics_extracts_pairs():
    text = "noise\nMETRIC gflops=12.5\nMETRIC elapsed_s=0.25\ntrailer\n"
    assert parse_metrics(text) == {"gflops": 12.5, "elapsed_s": 0.25}


def test_parse_metrics_requires_at_least_one():
    with pytest.raises(MetricParseError):
        parse_metrics("no metrics here\n")


@pytest.mark.skipif(shutil.which("gcc") is None, reason="needs a C compiler")
def test_submit_local_runs_the_bundled_kernel(tmp_path):
    src = (resources.files("vibetuner") / "fixtures" /
           "gemm_triple_loop.c").read_text()
    record = submit_local(
        src,
        build_cmd="gcc {src} -O2 -o {bin} -lm",
        run_cmd="{bin}",
        workdir=tmp_path,
    )
    assert record.metrics["error_norm"] == 0.0
    assert record.metrics["gflops"] > 0
    assert record.elapsed_s > 0


@pytest.mark.skipif(shutil.which("gcc") is None, reason="needs a C compiler")
def test_submit_local_build_failure(tmp_path):
    with pytest.raises(BuildFailed):
        submit_local("int main( {", build_cmd="gcc {src} -o {bin}",
                     run_cmd="{bin}", workdir=tmp_path)
