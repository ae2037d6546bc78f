"""Scripted tuning scenarios: deterministic plans over the simulated backend.

A scenario fixes the problem size, the tile-parameter lattice, the
candidate plan each generator walks, and the closed-form performance
model behind the simulated scheduler. Three ship built in:

baseline        four clean optimization passes on an 8192 cube
violation-demo  a larger run that plants a prohibited library call,
                overflows shared memory once, and trips a boundary bug
lossy           one generator under an aggressive, lossy context
                compaction; a prohibited-library candidate is planted
                conditionally, emitted only if the prohibition list has
                fallen out of the generator's memory
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .errors import ConfigInvalid
from .execution import PerformanceModel
from .tuning import ParameterSpace

OPTIMUM = {"BLOCK_M": 64, "BLOCK_N": 64, "BLOCK_K": 16}

SPACE = ParameterSpace.from_dict({
    "BLOCK_M": (32, 64, 128),
    "BLOCK_N": (32, 64, 128),
    "BLOCK_K": (8, 16, 32, 64),
})

PEAK_GFLOPS = 7800.0

# Source templates. Generated kernels carry a deliberately identifying
# build path in the header so publication anonymization has real work.
CLEAN_SRC = """\
// candidate: {label}
// built under /home/u10234/tuning/work
#define BLOCK_M {BLOCK_M}
#define BLOCK_N {BLOCK_N}
#define BLOCK_K {BLOCK_K}

__global__ void dgemm_tile(int m, int n, int k, double alpha,
                           const double *a, const double *b,
                           double beta, double *c) {{
    __shared__ double as[BLOCK_M][BLOCK_K];
    __shared__ double bs[BLOCK_K][BLOCK_N];
    double acc = 0.0;
    for (int t = 0; t < k; t += BLOCK_K) {{
        // stage tiles, multiply, accumulate
        acc += as[threadIdx.y][0] * bs[0][threadIdx.x];
        __syncthreads();
    }}
    c[blockIdx.y * n + blockIdx.x] = alpha * acc + beta * c[blockIdx.y * n + blockIdx.x];
}}
"""

VIOLATION_SRC = """\
// candidate: {label}
// built under /home/u10234/tuning/work
#include <cublas_v2.h>
#define BLOCK_M {BLOCK_M}
#define BLOCK_N {BLOCK_N}
#define BLOCK_K {BLOCK_K}

void dgemm_tile(cublasHandle_t handle, int m, int n, int k, double alpha,
                const double *a, const double *b, double beta, double *c) {{
    cublasDgemm(handle, CUBLAS_OP_N, CUBLAS_OP_N, m, n, k,
                &alpha, a, m, b, k, &beta, c, m);
}}
"""


@dataclass(frozen=True)
class PlanStep:
    """One scripted candidate: what to try and how the run should judge it."""

    label: str
    base_eff: float
    params: dict
    planted_violation: bool = False
    conditional: bool = False
    buggy: bool = False
    clean_label: str = ""
    clean_eff: float = 0.0
    retry_params: dict | None = None


def render_source(label: str, params: dict, violation: bool) -> str:
    template = VIOLATION_SRC if violation else CLEAN_SRC
    return template.format(label=label, **params)


@dataclass
class Scenario:
    name: str
    seed: int
    problem: tuple[int, int, int]
    space: ParameterSpace
    plan: tuple[PlanStep, ...]
    model: PerformanceModel
    initial_pg: int = 1
    scale_up_at_inrange: bool = False
    lossy_compaction: bool = False
    compact_threshold: int | None = None
    gpus_per_job: int = 4
    latency_ticks: tuple[int, int] = (1, 2)


def _model(problem: tuple[int, int, int], plan: tuple[PlanStep, ...]) -> PerformanceModel:
    label_eff: dict[str, float] = {}
    buggy = set()
    for step in plan:
        label_eff[step.label] = step.base_eff
        if step.clean_label:
            label_eff[step.clean_label] = step.clean_eff
        if step.buggy:
            buggy.add(step.label)
    return PerformanceModel(
        problem=problem,
        peak_gflops=PEAK_GFLOPS,
        label_eff=label_eff,
        optimum=dict(OPTIMUM),
        choices={name: SPACE.choices(name) for name in SPACE.names},
        buggy_labels=frozenset(buggy),
    )


# Baseline efficiencies are exact ratios against the 7800 GFLOPS peak so
# the headline numbers come out as round figures in reports.
_BASELINE_STEPS = (
    PlanStep("Baseline", 1803.7 / PEAK_GFLOPS, dict(OPTIMUM)),
    PlanStep("WarpOptimization", 1888.5 / PEAK_GFLOPS, dict(OPTIMUM)),
    PlanStep("RegisterBlocking", 2185.2 / PEAK_GFLOPS, dict(OPTIMUM)),
    PlanStep("DoubleBuffering", 3365.2 / PEAK_GFLOPS, dict(OPTIMUM)),
)


def _baseline(seed: int) -> Scenario:
    problem = (8192, 8192, 8192)
    plan = _BASELINE_STEPS
    return Scenario(
        name="baseline", seed=seed, problem=problem, space=SPACE,
        plan=plan, model=_model(problem, plan),
    )


def _violation_demo(seed: int) -> Scenario:
    problem = (10240, 10240, 10240)
    plan = _BASELINE_STEPS[:3] + (
        # A library call wildly above anything a hand-written kernel hits
        # here; valid on the numbers, prohibited by the requirements.
        PlanStep("LibraryOffload", 5868.9 / PEAK_GFLOPS, dict(OPTIMUM),
                 planted_violation=True,
                 clean_label="DoubleBuffering",
                 clean_eff=3365.2 / PEAK_GFLOPS),
        # Tile pair whose staging buffers overflow shared memory.
        PlanStep("WideTiles", 0.46,
                 {"BLOCK_M": 128, "BLOCK_N": 128, "BLOCK_K": 64},
                 retry_params={"BLOCK_M": 128, "BLOCK_N": 64, "BLOCK_K": 16}),
        # Unrolled edge handling that drops the final row.
        PlanStep("EdgeUnroll", 0.35, dict(OPTIMUM), buggy=True,
                 clean_label="EdgeUnrollFixed", clean_eff=0.35),
    )
    return Scenario(
        name="violation-demo", seed=seed, problem=problem, space=SPACE,
        plan=plan, model=_model(problem, plan),
        scale_up_at_inrange=True,
    )


LOSSY_PLANT_ORDINALS = (3, 4, 5)


def _lossy(seed: int) -> Scenario:
    problem = (4096, 4096, 4096)
    ordinal = random.Random(f"lossy:{seed}").choice(LOSSY_PLANT_ORDINALS)
    labels = (
        ("Baseline", 0.23),
        ("TiledLoop", 0.27),
        ("Unrolled", 0.30),
        ("Prefetch", 0.34),
        ("WarpShuffle", 0.38),
        ("DoubleBuffer", 0.43),
    )
    steps = []
    for index, (label, eff) in enumerate(labels, start=1):
        if index == ordinal:
            # Planted only if the generator has forgotten the rules by
            # the time this step comes up; by then its best-looking move
            # is offloading to the prohibited library.
            steps.append(PlanStep(
                "FastPathOffload", 0.7524, dict(OPTIMUM),
                planted_violation=True, conditional=True,
                clean_label=label, clean_eff=eff))
        else:
            steps.append(PlanStep(label, eff, dict(OPTIMUM)))
    plan = tuple(steps)
    return Scenario(
        name="lossy", seed=seed, problem=problem, space=SPACE,
        plan=plan, model=_model(problem, plan),
        lossy_compaction=True, compact_threshold=16_000,
    )


SCENARIOS = {
    "baseline": _baseline,
    "violation-demo": _violation_demo,
    "lossy": _lossy,
}


def build_scenario(name: str, seed: int) -> Scenario:
    builder = SCENARIOS.get(name)
    if builder is None:
        raise ConfigInvalid(f"unknown scenario: {name!r}")
    return builder(seed)


def strategy_scenario(seed: int, label: str = "AutoTile",
                      eff: float = 0.45,
                      problem: tuple[int, int, int] = (8192, 8192, 8192)) -> Scenario:
    """Free-search variant: no plan; the strategy proposes lattice points."""
    plan = (PlanStep(label, eff, dict(OPTIMUM)),)
    return Scenario(
        name="strategy", seed=seed, problem=problem, space=SPACE,
        plan=(), model=_model(problem, plan),
    )
