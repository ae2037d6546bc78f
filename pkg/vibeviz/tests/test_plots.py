"""Unit coverage for the plot functions and their input handling."""

from __future__ import annotations

import csv
from pathlib import Path

import pytest

from vibeviz.plots import (
    MissingColumn,
    MissingInput,
    plot_budget,
    plot_performance,
    plot_tokens,
    read_rows,
    render_all,
)

from conftest import copy_exports


def write_csv(path: Path, header: list[str], rows: list[list]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)
    return path


# --------------------------------------------------------------- loading


def test_read_rows_missing_file_names_it(tmp_path):
    with pytest.raises(MissingInput) as exc:
        read_rows(tmp_path / "performance.csv", ("tick",))
    assert "performance.csv" in str(exc.value)


def test_read_rows_missing_column_names_it(tmp_path):
    path = write_csv(tmp_path / "performance.csv",
                     ["tick", "version"], [["0", "1.0.0"]])
    with pytest.raises(MissingColumn) as exc:
        read_rows(path, ("tick", "gflops"))
    assert exc.value.column == "gflops"
    assert "gflops" in str(exc.value)
    assert "performance.csv" in str(exc.value)


def test_read_rows_zero_byte_file_is_empty(tmp_path):
    path = tmp_path / "tokens.csv"
    path.write_text("", encoding="utf-8")
    assert read_rows(path, ("tick",)) == []


# ----------------------------------------------------------- performance


def test_performance_statuses_and_frontier(tmp_path):
    write_csv(tmp_path / "performance.csv",
              ["tick", "version", "gflops", "efficiency_pct", "status",
               "is_sota"],
              [["1", "1.0.0", "100.0", "10.0", "Valid", "0"],
               ["2", "1.1.0", "300.0", "30.0", "Valid", "0"],
               ["3", "1.2.0", "200.0", "20.0", "Valid", "1"],
               ["4", "1.3.0", "", "", "Failed", "0"],
               ["5", "1.4.0", "900.0", "90.0", "Invalid", "0"],
               ["6", "1.5.0", "", "", "Pending", "0"]])
    result = plot_performance(tmp_path, tmp_path / "img")
    assert result.points == 5          # Invalid omitted by default
    assert result.series == 1          # the best-valid step line
    assert result.path.is_file()

    zeroed = plot_performance(tmp_path, tmp_path / "img2",
                              invalid_as_zero=True)
    assert zeroed.points == 6


def test_performance_empty_input_renders_empty_axes(tmp_path):
    write_csv(tmp_path / "performance.csv",
              ["tick", "version", "gflops", "efficiency_pct", "status",
               "is_sota"], [])
    result = plot_performance(tmp_path, tmp_path / "img")
    assert result.points == 0
    assert result.series == 0
    assert result.path.is_file()


# ---------------------------------------------------------------- tokens


def test_tokens_series_per_agent_and_markers(tmp_path):
    write_csv(tmp_path / "tokens.csv",
              ["tick", "agent", "context_tokens", "compaction_flag"],
              [["0", "PM", "1500", "0"],
               ["1", "PG1.1", "140000", "0"],
               ["2", "PG1.1", "160000", "0"],
               ["2", "PG1.1", "900", "1"],
               ["3", "SE1", "2000", "0"],
               ["4", "PG1.1", "151000", "0"],
               ["4", "PG1.1", "700", "1"]])
    result = plot_tokens(tmp_path, tmp_path / "img")
    assert result.series == 3
    assert result.markers == 2
    assert result.path.is_file()


def test_tokens_no_rows(tmp_path):
    write_csv(tmp_path / "tokens.csv",
              ["tick", "agent", "context_tokens", "compaction_flag"], [])
    result = plot_tokens(tmp_path, tmp_path / "img")
    assert result.series == 0
    assert result.markers == 0
    assert result.path.is_file()


# ---------------------------------------------------------------- budget


def test_budget_thresholds_come_from_the_data(tmp_path):
    write_csv(tmp_path / "budget.csv",
              ["tick", "spent_points", "min", "reference", "max"],
              [["0", "0", "10", "30", "40"],
               ["3", "17.068436", "10", "30", "40"],
               ["6", "33.370428", "10", "30", "40"]])
    result = plot_budget(tmp_path, tmp_path / "img")
    assert result.thresholds == (10.0, 30.0, 40.0)
    assert result.series == 1


def test_budget_empty_has_no_thresholds(tmp_path):
    write_csv(tmp_path / "budget.csv",
              ["tick", "spent_points", "min", "reference", "max"], [])
    result = plot_budget(tmp_path, tmp_path / "img")
    assert result.thresholds == ()
    assert result.series == 0
    assert result.path.is_file()


# ------------------------------------------------------------ render_all


def test_render_all_is_reproducible_png(fixture_exports, tmp_path):
    first = render_all(fixture_exports, tmp_path / "a")
    second = render_all(fixture_exports, tmp_path / "b")
    for one, two in zip(first, second):
        assert one.path.name == two.path.name
        assert one.path.read_bytes() == two.path.read_bytes()


def test_render_all_is_reproducible_svg(fixture_exports, tmp_path):
    first = render_all(fixture_exports, tmp_path / "a", fmt="svg")
    second = render_all(fixture_exports, tmp_path / "b", fmt="svg")
    for one, two in zip(first, second):
        assert one.path.suffix == ".svg"
        content = one.path.read_text(encoding="utf-8")
        assert "dc:date" not in content
        assert one.path.read_bytes() == two.path.read_bytes()


def test_render_all_missing_file_raises(fixture_exports, tmp_path):
    partial = copy_exports(fixture_exports, tmp_path / "partial")
    (partial / "tokens.csv").unlink()
    with pytest.raises(MissingInput) as exc:
        render_all(partial, tmp_path / "img")
    assert "tokens.csv" in str(exc.value)
