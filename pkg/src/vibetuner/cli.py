"""Command-line entry points.

Exit codes: 0 normal end (plan exhausted, stall, time limit), 2 when the
run stopped because the point budget was hit, 3 for invalid
configuration or project layout, 4 for unexpected runtime failures.
A lint that finds prohibited-library usage exits 1.
"""

from __future__ import annotations

import argparse
import shutil
import subprocess
import sys
from importlib import resources
from pathlib import Path

from .config import (
    CONFIG_NAME,
    ProjectConfig,
    init_project,
    load_config,
    open_project,
    save_config,
)
from .errors import ConfigInvalid, DirNotEmpty, NotAProject, VibetunerError
from .execution import lint_forbidden, scan_anonymization
from .orchestrator import EXIT_CONFIG, EXIT_RUNTIME, run_project
from .requirements import parse_requirements
from .scenarios import build_scenario, strategy_scenario
from .telemetry import (
    EventLog,
    export_series,
    render_markdown_report,
    replay_state,
)


def _add_run_overrides(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--mode", choices=("multi", "solo"))
    parser.add_argument("--scenario",
                        help="scripted scenario name, or 'none' to free-search")
    parser.add_argument("--strategy", help="search strategy for free-search runs")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--backend")
    parser.add_argument("--max-ticks", type=int, dest="max_ticks")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vibetuner",
        description="Agent-team auto-tuning runs over a simulated cluster.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_init = sub.add_parser("init", help="create a project directory")
    p_init.add_argument("directory")
    p_init.add_argument("--name", default="")
    p_init.add_argument("--force", action="store_true")
    _add_run_overrides(p_init)

    p_run = sub.add_parser("run", help="run a tuning project")
    p_run.add_argument("directory")
    p_run.add_argument("--dry", action="store_true",
                       help="validate and describe the run without starting it")
    _add_run_overrides(p_run)

    p_replay = sub.add_parser(
        "replay", help="rebuild run state from an event log and print it")
    p_replay.add_argument("source",
                          help="events.jsonl path, a project directory, or "
                               "the bundled 'version-history' fixture")

    p_status = sub.add_parser("status", help="summarize a project's event log")
    p_status.add_argument("directory")

    p_report = sub.add_parser("report",
                              help="regenerate CSV exports and the report")
    p_report.add_argument("directory")
    p_report.add_argument("--render", action="store_true",
                          help="also render figures if a renderer is installed")

    p_lint = sub.add_parser("lint",
                            help="scan a source file against the requirements")
    p_lint.add_argument("file")
    p_lint.add_argument("--requirements",
                        help="requirements document (default: bundled)")
    return parser


def _apply_overrides(config: ProjectConfig, args: argparse.Namespace) -> None:
    if getattr(args, "mode", None):
        config.mode = args.mode
    if getattr(args, "scenario", None):
        if args.scenario == "none":
            config.scenario = None
            config.strategy = config.strategy or "grid"
        else:
            config.scenario = args.scenario
    if getattr(args, "strategy", None):
        config.strategy = args.strategy
        config.scenario = None
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "backend", None):
        config.backend = args.backend
    if getattr(args, "max_ticks", None):
        config.max_ticks = args.max_ticks


def _cmd_init(args: argparse.Namespace) -> int:
    config = ProjectConfig(project_name=args.name)
    _apply_overrides(config, args)
    init_project(args.directory, config, force=args.force)
    print(f"initialized project at {args.directory}")
    return 0


def _load_or_init(args: argparse.Namespace) -> tuple[Path, ProjectConfig]:
    directory = Path(args.directory)
    if (directory / CONFIG_NAME).is_file():
        directory, config = open_project(directory)
        _apply_overrides(config, args)
        config.validate()
        return directory, config
    config = ProjectConfig()
    _apply_overrides(config, args)
    init_project(directory, config)
    return directory, config


def _cmd_run(args: argparse.Namespace) -> int:
    directory, config = _load_or_init(args)
    spec = parse_requirements(
        (directory / config.requirements_path).read_text(encoding="utf-8"))
    if config.scenario is not None:
        scenario = build_scenario(config.scenario, config.seed)
    else:
        scenario = strategy_scenario(config.seed)
    if args.dry:
        steps = len(scenario.plan) if scenario.plan else 0
        plan = (f"{steps} scripted candidates" if steps
                else f"free search via {config.strategy}")
        print(f"project: {spec.project_name}")
        print(f"mode: {config.mode}; seed: {config.seed}; plan: {plan}")
        print(f"budget: {spec.budget.min_points}/{spec.budget.reference_points}"
              f"/{spec.budget.max_points} points")
        print("dry run only; nothing started")
        return 0
    save_config(config, directory / CONFIG_NAME)
    summary = run_project(directory, config, spec, scenario)
    sota = (f"v{summary.sota[0]} at {summary.sota[1]:g} GFLOPS "
            f"({summary.sota[2]:.2f}%)" if summary.sota else "none")
    print(f"finished: reason={summary.reason or 'end'} ticks={summary.ticks} "
          f"spent={summary.spent} points")
    print(f"best valid: {sota}")
    if summary.published:
        print(f"published: v{summary.published}")
    print(f"events: {summary.events_path}")
    print(f"exports: {summary.exports_dir}")
    return summary.exit_code


def _events_for(source: str) -> list:
    path = Path(source)
    if source == "version-history":
        fixture = resources.files("vibetuner") / "fixtures" / "version_history.jsonl"
        with resources.as_file(fixture) as concrete:
            return EventLog.read(concrete)
    if path.is_dir():
        path = path / "events.jsonl"
    if not path.is_file():
        raise NotAProject(f"no event log at {path}")
    return EventLog.read(path)


def _print_state(events: list) -> None:
    state = replay_state(events)
    print(f"phase: {state.phase}" + (f" ({state.reason})" if state.reason else ""))
    if state.thresholds:
        lo, ref, hi = state.thresholds
        print(f"budget: {state.spent} spent of {hi} "
              f"(min {lo}, reference {ref}) [{state.budget_status}]")
    else:
        print(f"budget: {state.spent} spent [{state.budget_status}]")
    print(f"agents: {', '.join(state.agent_order) or 'none'}")
    print(f"messages: {state.message_count}; jobs: {state.job_count}")
    if state.candidate_order:
        print("candidates:")
        for version in state.candidate_order:
            cand = state.candidates[version]
            perf = (f" {cand.gflops:g} GFLOPS, {cand.efficiency_pct:.2f}%"
                    if cand.gflops is not None else "")
            print(f"  v{cand.version} [{cand.status}] {cand.label}{perf}")
    sota = state.sota()
    if sota is not None:
        print(f"best valid: v{sota.version}, {sota.gflops:g} GFLOPS, "
              f"{sota.efficiency_pct:.2f}%")
    if state.violations:
        for violation in state.violations:
            print(f"violation: v{violation.get('version')} "
                  f"{violation.get('token', '')}")
    for version in state.published:
        print(f"published: v{version}" if version else "published: nothing")


def _cmd_replay(args: argparse.Namespace) -> int:
    _print_state(_events_for(args.source))
    return 0


def _cmd_status(args: argparse.Namespace) -> int:
    directory, _ = open_project(args.directory)
    _print_state(_events_for(str(directory)))
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    directory, config = open_project(args.directory)
    events = _events_for(str(directory))
    exports = directory / "exports"
    export_series(events, "all", exports)
    if args.render:
        tool = shutil.which("vibeviz")
        if tool is None:
            print("no figure renderer on PATH; skipping figures",
                  file=sys.stderr)
        else:
            proc = subprocess.run(
                [tool, str(exports), "--out", str(exports / "img")],
                capture_output=True, text=True, timeout=120)
            if proc.returncode != 0:
                print(f"figure renderer failed: {proc.stderr.strip()}",
                      file=sys.stderr)
    path = render_markdown_report(events, exports)
    print(f"report: {path}")
    return 0


def _cmd_lint(args: argparse.Namespace) -> int:
    source = Path(args.file).read_text(encoding="utf-8")
    if args.requirements:
        doc = Path(args.requirements).read_text(encoding="utf-8")
    else:
        doc = (resources.files("vibetuner") / "fixtures" / "requirements.md") \
            .read_text(encoding="utf-8")
    spec = parse_requirements(doc)
    hits = lint_forbidden(source, spec.forbidden_libraries)
    for hit in hits:
        print(f"{args.file}:{hit.line_no}: prohibited {hit.token}: {hit.line}")
    for warn in scan_anonymization(source):
        print(f"{args.file}:{warn.line_no}: identifying {warn.token}",
              file=sys.stderr)
    if hits:
        return 1
    print(f"{args.file}: clean against "
          f"{', '.join(spec.forbidden_libraries) or 'no prohibitions'}")
    return 0


_COMMANDS = {
    "init": _cmd_init,
    "run": _cmd_run,
    "replay": _cmd_replay,
    "status": _cmd_status,
    "report": _cmd_report,
    "lint": _cmd_lint,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigInvalid, NotAProject, DirNotEmpty) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except VibetunerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
