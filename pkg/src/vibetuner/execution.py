"""Job execution: point accounting, verification numerics, lint, backends.

Points are exact decimal arithmetic end to end: a job costs
elapsed seconds x rate x GPUs with no rounding, and the ledger total is
the exact sum of job costs. The simulated backend evaluates a closed-form
performance model, so identical seeds reproduce identical job records.
"""

from __future__ import annotations

import random
import re
import shlex
import subprocess
import time
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path

import numpy as np

from .errors import (
    BuildFailed,
    FetchFailed,
    MetricParseError,
    NegativeInput,
    NonPositiveDim,
    NonPositivePeak,
    PollTimeout,
    RunFailed,
    ShapeMismatch,
    SubmitRejected,
    TransferFailed,
)
from .requirements import Budget

UNDER_MIN = "UnderMin"
IN_RANGE = "InRange"
NEAR_MAX = "NearMax"
EXCEEDED = "Exceeded"

_NEAR_FACTOR = Decimal("0.9")


def as_decimal(value) -> Decimal:
    """Exact Decimal; floats go through str() to shed binary noise."""
    if isinstance(value, Decimal):
        return value
    if isinstance(value, float):
        return Decimal(str(value))
    return Decimal(value)


def compute_points(elapsed_s, gpus, rate) -> Decimal:
    """Job cost: elapsed seconds x rate x GPU count, exact."""
    elapsed = as_decimal(elapsed_s)
    cost_rate = as_decimal(rate)
    if elapsed < 0 or gpus < 0 or cost_rate < 0:
        raise NegativeInput(f"elapsed={elapsed} gpus={gpus} rate={cost_rate}")
    return elapsed * cost_rate * int(gpus)


def budget_status(spent, budget: Budget) -> str:
    """Band for the current spend: UnderMin, InRange, NearMax, or Exceeded.

    NearMax starts at 90% of the maximum; Exceeded is strictly above it.
    """
    spent = as_decimal(spent)
    if spent > budget.max_points:
        return EXCEEDED
    if spent >= budget.max_points * _NEAR_FACTOR:
        return NEAR_MAX
    if spent >= budget.min_points:
        return IN_RANGE
    return UNDER_MIN


class BudgetLedger:
    """Exact running total of job points against the budget thresholds."""

    def __init__(self, budget: Budget):
        self.budget = budget
        self.spent = Decimal("0")
        self.job_count = 0
        self.history: list[Decimal] = []

    def add(self, points) -> Decimal:
        value = as_decimal(points)
        if value < 0:
            raise NegativeInput(str(points))
        self.spent += value
        self.job_count += 1
        self.history.append(value)
        return self.spent

    def status(self) -> str:
        return budget_status(self.spent, self.budget)

    def remaining(self) -> Decimal:
        return self.budget.max_points - self.spent


# --- kernel math ------------------------------------------------------------

def gemm_flops(m: int, n: int, k: int) -> int:
    """Floating-point operations of one dense multiply-accumulate pass."""
    if m <= 0 or n <= 0 or k <= 0:
        raise NonPositiveDim(f"{m}x{n}x{k}")
    return 2 * m * n * k


def efficiency_pct(gflops: float, peak_gflops: float) -> float:
    if peak_gflops <= 0:
        raise NonPositivePeak(str(peak_gflops))
    return 100.0 * gflops / float(peak_gflops)


def verify_error_norm(result, reference) -> float:
    """Frobenius norm of the difference between result and reference."""
    a = np.asarray(result, dtype=float)
    b = np.asarray(reference, dtype=float)
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def relative_error_norm(result, reference) -> float:
    """verify_error_norm scaled by the reference norm (absolute when zero)."""
    denom = float(np.linalg.norm(np.asarray(reference, dtype=float)))
    err = verify_error_norm(result, reference)
    return err if denom == 0.0 else err / denom


def gemm_reference(alpha, a, b, beta, c) -> np.ndarray:
    """alpha * A @ B + beta * C over float64 arrays."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    if a.shape[1] != b.shape[0] or (a.shape[0], b.shape[1]) != c.shape:
        raise ShapeMismatch(f"{a.shape} @ {b.shape} -> {c.shape}")
    return alpha * (a @ b) + beta * c


def make_problem(m: int, n: int, k: int, seed: int):
    """Deterministic (A, B, C) input matrices for a verification problem."""
    if m <= 0 or n <= 0 or k <= 0:
        raise NonPositiveDim(f"{m}x{n}x{k}")
    rng = np.random.default_rng(seed)
    return (rng.uniform(-1, 1, (m, k)),
            rng.uniform(-1, 1, (k, n)),
            rng.uniform(-1, 1, (m, n)))


def simulate_kernel(alpha, a, b, beta, c, buggy: bool = False) -> np.ndarray:
    """Modeled kernel output for small verification problems.

    The buggy variant drops the multiply-accumulate on the final row, the
    classic boundary-condition mistake, so its output diverges from any
    correct reference.
    """
    out = gemm_reference(alpha, a, b, beta, c)
    if buggy:
        out = out.copy()
        out[-1, :] = beta * np.asarray(c, dtype=float)[-1, :]
    return out


# --- lint -------------------------------------------------------------------

@dataclass(frozen=True)
class LintHit:
    token: str
    line_no: int
    line: str


def lint_forbidden(source: str, forbidden: list[str]) -> list[LintHit]:
    """Case-insensitive scan for library tokens used as identifiers,
    headers, or link flags; each hit carries its 1-based line number."""
    hits: list[LintHit] = []
    for line_no, line in enumerate(source.splitlines(), start=1):
        lowered = line.lower()
        for token in forbidden:
            if token.lower() in lowered:
                hits.append(LintHit(token=token, line_no=line_no, line=line.strip()))
    return hits


_HOME_PATH_RE = re.compile(r"/home/[A-Za-z0-9_.-]+")


def scan_anonymization(source: str, sensitive_tokens: list[str] | None = None) -> list[LintHit]:
    """Flag user ids and home-directory paths that must not be published."""
    hits: list[LintHit] = []
    tokens = sensitive_tokens or []
    for line_no, line in enumerate(source.splitlines(), start=1):
        lowered = line.lower()
        for token in tokens:
            if token and token.lower() in lowered:
                hits.append(LintHit(token=token, line_no=line_no, line=line.strip()))
        for match in _HOME_PATH_RE.finditer(line):
            hits.append(LintHit(token=match.group(0), line_no=line_no, line=line.strip()))
    return hits


def anonymize_text(source: str, sensitive_tokens: list[str] | None = None) -> str:
    """Blank out home-directory paths and named sensitive tokens."""
    text = _HOME_PATH_RE.sub("/home/ANON", source)
    for token in sensitive_tokens or []:
        if token:
            text = re.sub(re.escape(token), "ANON", text, flags=re.IGNORECASE)
    return text


# --- job records ------------------------------------------------------------

@dataclass
class JobRecord:
    job_id: str
    version: str
    backend: str
    gpus: int
    resource_group: str
    submitted_tick: int
    ended_tick: int | None
    elapsed_s: Decimal
    points: Decimal
    metrics: dict
    state: str  # "done" | "error"
    error: str | None = None
    stdout_ref: str = ""
    stderr_ref: str = ""


# --- simulated backend ------------------------------------------------------

@dataclass
class PerformanceModel:
    """Closed-form throughput model for scripted scenarios.

    GFLOPS = peak x base efficiency of the optimization label x a tile
    factor that peaks at the hidden optimum. Tile parameter sets whose
    footprint exceeds the on-chip memory budget error out at run time.
    """

    problem: tuple[int, int, int]
    peak_gflops: float
    label_eff: dict[str, float]
    optimum: dict[str, int]
    choices: dict[str, tuple[int, ...]]
    sm_limit_bytes: int = 49152
    dtype_bytes: int = 8
    buffers: int = 2
    default_eff: float = 0.15
    iterations: int = 1000  # benchmark repetitions per job
    buggy_labels: frozenset = frozenset()
    clean_error_norm: float = 1e-15
    buggy_error_norm: float = 2e-3

    def tile_factor(self, params: dict) -> float:
        factor = 1.0
        for name, target in self.optimum.items():
            values = self.choices.get(name)
            if values is None or name not in params:
                continue
            value = params[name]
            if value not in values or target not in values:
                factor *= 0.5
                continue
            distance = abs(values.index(value) - values.index(target))
            factor *= 1.0 / (1.0 + distance)
        return factor

    def footprint_bytes(self, params: dict) -> int:
        needed = ("BLOCK_M", "BLOCK_N", "BLOCK_K")
        if not all(name in params for name in needed):
            return 0
        bm, bn, bk = (params[name] for name in needed)
        return self.buffers * (bm * bk + bk * bn) * self.dtype_bytes

    def gflops(self, label: str, params: dict) -> float:
        raw = self.peak_gflops * self.label_eff.get(label, self.default_eff) \
            * self.tile_factor(params)
        return round(raw, 6)  # shed float noise so 0.2312...*7800 prints 1803.7

    def elapsed_s(self, label: str, params: dict) -> Decimal:
        m, n, k = self.problem
        seconds = (self.iterations * gemm_flops(m, n, k)
                   / (self.gflops(label, params) * 1e9))
        return Decimal(str(round(seconds, 3)))

    def error_norm(self, label: str) -> float:
        return self.buggy_error_norm if label in self.buggy_labels \
            else self.clean_error_norm


@dataclass
class _SimJob:
    job_id: str
    version: str
    label: str
    params: dict
    gpus: int
    resource_group: str
    submitted_tick: int
    ready_tick: int


class SimulatedBackend:
    """Scheduler double: queue latency is seeded, outcomes are modeled."""

    name = "simulated"

    def __init__(self, model: PerformanceModel, seed: int,
                 latency_ticks: tuple[int, int] = (1, 2)):
        self.model = model
        self.seed = seed
        self.latency_ticks = latency_ticks
        self._submitted = 0

    def submit(self, candidate, gpus: int, resource_group: str, tick: int) -> _SimJob:
        self._submitted += 1
        rng = random.Random(f"{self.seed}:{self._submitted}")
        latency = rng.randint(*self.latency_ticks)
        return _SimJob(
            job_id=f"sim-{self._submitted}",
            version=candidate.version,
            label=candidate.label,
            params=dict(candidate.params),
            gpus=gpus,
            resource_group=resource_group,
            submitted_tick=tick,
            ready_tick=tick + latency,
        )

    def poll(self, job: _SimJob, tick: int) -> tuple[str, dict | None, str | None]:
        """Returns (state, outputs, error); state is pending/running/done/error."""
        if tick < job.ready_tick:
            return ("running" if tick > job.submitted_tick else "pending", None, None)
        footprint = self.model.footprint_bytes(job.params)
        if footprint > self.model.sm_limit_bytes:
            return ("error", None,
                    f"resource overflow: tile footprint {footprint}B "
                    f"exceeds {self.model.sm_limit_bytes}B shared memory")
        gflops = self.model.gflops(job.label, job.params)
        outputs = {
            "gflops": gflops,
            "elapsed_s": str(self.model.elapsed_s(job.label, job.params)),
            "error_norm": self.model.error_norm(job.label),
        }
        return ("done", outputs, None)


def submit_simulated(candidate, gpus: int, seed: int, model: PerformanceModel,
                     point_rate=Decimal("0.007"),
                     resource_group: str = "cx-share") -> JobRecord:
    """Synchronous convenience wrapper over the simulated backend."""
    backend = SimulatedBackend(model, seed)
    job = backend.submit(candidate, gpus, resource_group, tick=0)
    tick = 0
    while True:
        state, outputs, error = backend.poll(job, tick)
        if state in ("done", "error"):
            break
        tick += 1
    if state == "error":
        return JobRecord(
            job_id=job.job_id, version=job.version, backend=backend.name,
            gpus=gpus, resource_group=resource_group, submitted_tick=0,
            ended_tick=tick, elapsed_s=Decimal("0"), points=Decimal("0"),
            metrics={}, state="error", error=error,
        )
    elapsed = Decimal(outputs["elapsed_s"])
    return JobRecord(
        job_id=job.job_id, version=job.version, backend=backend.name,
        gpus=gpus, resource_group=resource_group, submitted_tick=0,
        ended_tick=tick, elapsed_s=elapsed,
        points=compute_points(elapsed, gpus, point_rate),
        metrics=outputs, state="done",
    )


# --- metric parsing ---------------------------------------------------------

_METRIC_RE = re.compile(r"^METRIC\s+([A-Za-z_]\w*)=(\S+)$", re.MULTILINE)


def parse_metrics(text: str) -> dict:
    """Collect METRIC name=value lines; raises when none are present."""
    metrics = {}
    for name, raw in _METRIC_RE.findall(text):
        try:
            metrics[name] = float(raw)
        except ValueError:
            metrics[name] = raw
    if not metrics:
        raise MetricParseError("no METRIC lines in job output")
    return metrics


# --- local backend ----------------------------------------------------------

def submit_local(source_text: str, build_cmd: str, run_cmd: str,
                 workdir: str | Path, job_id: str = "local-1",
                 version: str = "0.0.0", gpus: int = 1,
                 point_rate=Decimal("0"), tick: int = 0,
                 timeout_s: float = 120.0,
                 source_name: str = "kernel.c") -> JobRecord:
    """Build and run a candidate in a sandbox directory.

    Commands are templates with {src}, {bin}, and {out} slots. The run
    must print METRIC name=value lines; elapsed seconds come from a
    METRIC elapsed_s line when present, wall time otherwise.
    """
    workdir = Path(workdir)
    src_dir, build_dir, out_dir = (workdir / "src", workdir / "build", workdir / "out")
    for d in (src_dir, build_dir, out_dir):
        d.mkdir(parents=True, exist_ok=True)
    src = src_dir / source_name
    src.write_text(source_text, encoding="utf-8")
    binary = build_dir / "candidate"

    slots = {"src": str(src), "bin": str(binary), "out": str(out_dir)}
    build = subprocess.run(shlex.split(build_cmd.format(**slots)),
                           capture_output=True, text=True, timeout=timeout_s)
    if build.returncode != 0:
        raise BuildFailed(build.stderr + build.stdout)

    started = time.monotonic()
    run = subprocess.run(shlex.split(run_cmd.format(**slots)),
                         capture_output=True, text=True, timeout=timeout_s)
    wall = time.monotonic() - started
    stdout_path = out_dir / "stdout.txt"
    stderr_path = out_dir / "stderr.txt"
    stdout_path.write_text(run.stdout, encoding="utf-8")
    stderr_path.write_text(run.stderr, encoding="utf-8")
    if run.returncode != 0:
        raise RunFailed(run.stderr + run.stdout)

    metrics = parse_metrics(run.stdout)
    if "elapsed_s" in metrics:
        elapsed = as_decimal(str(metrics["elapsed_s"]))
    else:
        elapsed = Decimal(str(round(wall, 3)))
    return JobRecord(
        job_id=job_id, version=version, backend="local", gpus=gpus,
        resource_group="local", submitted_tick=tick, ended_tick=tick,
        elapsed_s=elapsed, points=compute_points(elapsed, gpus, point_rate),
        metrics=metrics, state="done",
        stdout_ref=str(stdout_path), stderr_ref=str(stderr_path),
    )


# --- remote backend ---------------------------------------------------------

@dataclass
class ConnectionProfile:
    """Command templates for a batch-scheduler site.

    Defaults model a pjsub-style scheduler reached over ssh; tests swap in
    local fake scripts through the same templates. Slots: {host}, {user},
    {workdir}, {src}, {script}, {jobid}, {out}.
    """

    host: str = "login-node"
    user: str = "tuner"
    workdir: str = "/work/tuning"
    transfer_cmd: str = "scp {src} {host}:{workdir}/"
    build_cmd: str = ""
    submit_cmd: str = "ssh {host} pjsub {script}"
    poll_cmd: str = "ssh {host} pjstat {jobid}"
    fetch_cmd: str = "scp {host}:{workdir}/{jobid}.out {out}"
    jobid_pattern: str = r"Job\s+(\d+)\s+submitted"
    done_pattern: str = r"\b(DONE|COMPLETED|EXIT|END)\b"
    error_pattern: str = r"\b(ERROR|FAILED|CANCEL)\b"
    poll_interval_s: float = 0.0
    poll_timeout_s: float = 10.0
    resource_group: str = "cx-share"


def _run_command(template: str, slots: dict, timeout_s: float = 60.0):
    return subprocess.run(shlex.split(template.format(**slots)),
                          capture_output=True, text=True, timeout=timeout_s)


def submit_remote(source_text: str, profile: ConnectionProfile,
                  staging_dir: str | Path, job_id_hint: str = "remote-1",
                  version: str = "0.0.0", gpus: int = 1,
                  point_rate=Decimal("0.007"), tick: int = 0) -> JobRecord:
    """Full remote lifecycle: transfer, build, submit, poll, fetch.

    Blocking by design; the poll loop gives up with PollTimeout after the
    profile's deadline, in which case no points are charged.
    """
    staging = Path(staging_dir)
    staging.mkdir(parents=True, exist_ok=True)
    src = staging / "kernel.c"
    src.write_text(source_text, encoding="utf-8")
    script = staging / "job.sh"
    script.write_text("#!/bin/sh\n# scheduler job script\n", encoding="utf-8")
    out_path = staging / "job.out"

    slots = {
        "host": profile.host, "user": profile.user, "workdir": profile.workdir,
        "src": str(src), "script": str(script), "out": str(out_path), "jobid": "",
    }

    transfer = _run_command(profile.transfer_cmd, slots)
    if transfer.returncode != 0:
        raise TransferFailed(transfer.stderr + transfer.stdout)

    if profile.build_cmd:
        build = _run_command(profile.build_cmd, slots)
        if build.returncode != 0:
            raise SubmitRejected(f"remote build failed: {build.stderr + build.stdout}")

    submit = _run_command(profile.submit_cmd, slots)
    if submit.returncode != 0:
        raise SubmitRejected(submit.stderr + submit.stdout)
    match = re.search(profile.jobid_pattern, submit.stdout)
    if not match:
        raise SubmitRejected(f"no job id in scheduler reply: {submit.stdout!r}")
    jobid = match.group(1)
    slots["jobid"] = jobid

    deadline = time.monotonic() + profile.poll_timeout_s
    failed: str | None = None
    while True:
        poll = _run_command(profile.poll_cmd, slots)
        status_text = poll.stdout + poll.stderr
        if re.search(profile.error_pattern, status_text):
            failed = status_text.strip()
            break
        if re.search(profile.done_pattern, status_text):
            break
        if time.monotonic() >= deadline:
            raise PollTimeout(f"job {jobid} still pending after "
                              f"{profile.poll_timeout_s}s")
        time.sleep(profile.poll_interval_s)

    if failed is not None:
        return JobRecord(
            job_id=jobid, version=version, backend="remote", gpus=gpus,
            resource_group=profile.resource_group, submitted_tick=tick,
            ended_tick=tick, elapsed_s=Decimal("0"), points=Decimal("0"),
            metrics={}, state="error", error=failed,
        )

    fetch = _run_command(profile.fetch_cmd, slots)
    if fetch.returncode != 0 or not out_path.exists():
        raise FetchFailed(fetch.stderr + fetch.stdout)
    metrics = parse_metrics(out_path.read_text(encoding="utf-8"))
    try:
        elapsed = as_decimal(str(metrics["elapsed_s"]))
    except (KeyError, InvalidOperation):
        raise MetricParseError("remote output lacks METRIC elapsed_s")
    return JobRecord(
        job_id=jobid, version=version, backend="remote", gpus=gpus,
        resource_group=profile.resource_group, submitted_tick=tick,
        ended_tick=tick, elapsed_s=elapsed,
        points=compute_points(elapsed, gpus, point_rate),
        metrics=metrics, state="done", stdout_ref=str(out_path),
    )
