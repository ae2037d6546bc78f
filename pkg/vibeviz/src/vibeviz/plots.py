"""Render run-export CSVs into figures.

Input contract — three delimited files written by a tuning run's export
step, consumed here by column name:

- ``performance.csv``: tick, version, gflops, efficiency_pct, status, is_sota
- ``tokens.csv``: tick, agent, context_tokens, compaction_flag
- ``budget.csv``: tick, spent_points, min, reference, max

Files with no content render empty axes; a header missing a required
column raises :class:`MissingColumn` naming it.  Output bytes are
reproducible run to run: figure geometry is pinned and SVG output carries
no timestamp.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

plt.rcParams["svg.hashsalt"] = "vibeviz"

FIGSIZE = (8.0, 4.5)
DPI = 120

PERFORMANCE_COLUMNS = ("tick", "version", "gflops", "efficiency_pct",
                       "status", "is_sota")
TOKEN_COLUMNS = ("tick", "agent", "context_tokens", "compaction_flag")
BUDGET_COLUMNS = ("tick", "spent_points", "min", "reference", "max")

_STATUS_STYLE = {
    # status -> (marker, color, plotted-at-zero)
    "Valid": ("o", "tab:blue", False),
    "Failed": ("x", "tab:red", True),
    "Pending": ("s", "tab:gray", True),
    "Invalid": ("X", "tab:orange", True),
}


class VibevizError(Exception):
    """Base class for everything this renderer raises on purpose."""


class MissingInput(VibevizError):
    """An expected CSV file is absent."""


class MissingColumn(VibevizError):
    """A CSV header lacks a column the plot needs."""

    def __init__(self, column: str, source: str):
        self.column = column
        self.source = source
        super().__init__(f"{source} is missing required column '{column}'")


@dataclass
class PlotResult:
    """What one render call produced, for callers that want to verify it."""

    path: Path
    points: int = 0        # scatter points drawn (performance plot)
    series: int = 0        # line series drawn
    markers: int = 0       # compaction markers drawn (token plot)
    thresholds: tuple = field(default_factory=tuple)  # guide lines (budget)


def read_rows(path: Path, required: tuple[str, ...]) -> list[dict]:
    """Load a CSV as dicts; empty file -> no rows, bad header -> error."""
    if not path.is_file():
        raise MissingInput(f"no input file at {path}")
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            return []
        for column in required:
            if column not in reader.fieldnames:
                raise MissingColumn(column, path.name)
        return list(reader)


def _new_axes(title: str, xlabel: str, ylabel: str):
    fig, ax = plt.subplots(figsize=FIGSIZE, dpi=DPI)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    return fig, ax


def _save(fig, out_dir: Path, stem: str, fmt: str) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{stem}.{fmt}"
    # SVG embeds a creation date by default; drop it so identical inputs
    # give identical bytes.
    metadata = {"Date": None} if fmt == "svg" else None
    fig.savefig(path, format=fmt, metadata=metadata)
    plt.close(fig)
    return path


def plot_performance(exports: Path, out_dir: Path, *,
                     invalid_as_zero: bool = False,
                     fmt: str = "png") -> PlotResult:
    """Candidate throughput over time plus the running best-valid step.

    Measured candidates sit at their GFLOPS; failed and pending ones at
    zero.  Invalidated candidates are omitted unless ``invalid_as_zero``
    pins them to the zero line, so a default plot never lends a struck
    result visual credit.
    """
    rows = read_rows(Path(exports) / "performance.csv", PERFORMANCE_COLUMNS)
    fig, ax = _new_axes("Candidate performance", "tick", "GFLOPS")

    groups: dict[str, list[tuple[float, float]]] = {}
    frontier: list[tuple[float, float]] = []
    best = 0.0
    for row in rows:
        status = row["status"]
        if status == "Invalid" and not invalid_as_zero:
            continue
        marker, color, at_zero = _STATUS_STYLE.get(
            status, ("o", "tab:purple", False))
        tick = float(row["tick"])
        if at_zero or not row["gflops"]:
            value = 0.0
        else:
            value = float(row["gflops"])
        groups.setdefault(status, []).append((tick, value))
        if status == "Valid" and row["gflops"]:
            best = max(best, float(row["gflops"]))
            frontier.append((tick, best))

    points = 0
    for status, coords in groups.items():
        marker, color, _ = _STATUS_STYLE.get(status,
                                             ("o", "tab:purple", False))
        ax.scatter([t for t, _ in coords], [v for _, v in coords],
                   marker=marker, color=color, label=status, zorder=3)
        points += len(coords)

    series = 0
    if frontier:
        ax.step([t for t, _ in frontier], [v for _, v in frontier],
                where="post", color="tab:green", linewidth=1.5,
                label="best valid", zorder=2)
        series = 1
    if groups or frontier:
        ax.legend(loc="best")
    fig.tight_layout()
    path = _save(fig, out_dir, "performance", fmt)
    return PlotResult(path=path, points=points, series=series)


def plot_tokens(exports: Path, out_dir: Path, *,
                fmt: str = "png") -> PlotResult:
    """Per-agent context-token usage with a marker on every compaction."""
    rows = read_rows(Path(exports) / "tokens.csv", TOKEN_COLUMNS)
    fig, ax = _new_axes("Context tokens per agent", "tick", "context tokens")

    by_agent: dict[str, list[tuple[float, float]]] = {}
    compactions: list[tuple[float, float]] = []
    for row in rows:
        point = (float(row["tick"]), float(row["context_tokens"]))
        by_agent.setdefault(row["agent"], []).append(point)
        if row["compaction_flag"] == "1":
            compactions.append(point)

    for agent, coords in by_agent.items():
        ax.plot([t for t, _ in coords], [v for _, v in coords],
                label=agent, linewidth=1.2)
    if compactions:
        ax.scatter([t for t, _ in compactions], [v for _, v in compactions],
                   marker="v", color="black", s=60, zorder=4,
                   label="compaction")
    if by_agent:
        ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    path = _save(fig, out_dir, "tokens", fmt)
    return PlotResult(path=path, series=len(by_agent),
                      markers=len(compactions))


def plot_budget(exports: Path, out_dir: Path, *,
                fmt: str = "png") -> PlotResult:
    """Cumulative points spent against the thresholds the CSV carries."""
    rows = read_rows(Path(exports) / "budget.csv", BUDGET_COLUMNS)
    fig, ax = _new_axes("Budget", "tick", "points spent")

    thresholds: tuple = ()
    if rows:
        ax.step([float(r["tick"]) for r in rows],
                [float(r["spent_points"]) for r in rows],
                where="post", color="tab:blue", linewidth=1.5, label="spent")
        last = rows[-1]
        thresholds = (float(last["min"]), float(last["reference"]),
                      float(last["max"]))
        for value, name, color in zip(thresholds,
                                      ("min", "reference", "max"),
                                      ("tab:gray", "tab:olive", "tab:red")):
            ax.axhline(value, linestyle="--", linewidth=1.0, color=color,
                       label=f"{name} ({value:g})")
        ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    path = _save(fig, out_dir, "budget", fmt)
    return PlotResult(path=path, series=1 if rows else 0,
                      thresholds=thresholds)


def render_all(exports: Path, out_dir: Path, *,
               invalid_as_zero: bool = False,
               fmt: str = "png") -> list[PlotResult]:
    """Render all three figures; returns their results in a fixed order."""
    return [
        plot_performance(exports, out_dir, invalid_as_zero=invalid_as_zero,
                         fmt=fmt),
        plot_tokens(exports, out_dir, fmt=fmt),
        plot_budget(exports, out_dir, fmt=fmt),
    ]
