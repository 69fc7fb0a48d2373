"""Command-line entry point.

Exit codes: 0 all properties hold, 2 a property was violated (or a
scenario expectation failed), 3 parse or configuration error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, RunConfig, apply_setting, parse_config_text, parse_header
from .fuzz import fuzz as run_fuzz, generate
from .monitor import evaluate_trace, exit_code, render_verdicts
from .scenario import (
    RunResult,
    ScenarioError,
    load_test,
    parse_scenario,
    replay_crash,
    run_scenario,
)
from .trace import parse_trace

PARSE_ERROR = 3


def _load_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg = parse_config_text(Path(args.config).read_text(), cfg)
    for setting in getattr(args, "set", None) or []:
        key, eq, value = setting.partition("=")
        if not eq:
            raise ConfigError(f"--set expects key=value, got {setting!r}")
        cfg = apply_setting(cfg, key, value)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "inject", None):
        flag = args.inject.lower()
        if flag not in tuple(f"p{i}" for i in range(1, 12)):
            raise ConfigError(f"--inject expects p1..p11, got {args.inject}")
        cfg = replace(cfg, inject=flag)
    if getattr(args, "cap", None) is not None:
        cfg = replace(cfg, cap=args.cap)
    return cfg


def _write_outputs(args: argparse.Namespace, result: RunResult) -> None:
    if getattr(args, "trace", None):
        Path(args.trace).write_text(result.log.text())
    if getattr(args, "dump", None):
        Path(args.dump).write_text(result.store.dump())
    if getattr(args, "journal", None):
        Path(args.journal).write_text("\n".join(result.store.journal_lines) + "\n")


def _report_result(result: RunResult) -> int:
    for line in result.reports:
        print(line)
    sys.stdout.write(render_verdicts(result.verdicts))
    for failure in result.expectation_failures:
        print(f"expectation|failed|{failure}")
    print(f"# rounds={result.rounds_used} max_reply_latency={result.monitor.max_reply_latency}")
    print(f"# trace_sha256={result.trace_hash}")
    return result.exit_code


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    commands = parse_scenario(Path(args.scenario).read_text())
    result = run_scenario(commands, cfg)
    _write_outputs(args, result)
    return _report_result(result)


def cmd_fuzz(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    if args.print_only:
        for command in generate(args.seed, args.events, cfg):
            print(command.render())
        return 0
    result = run_fuzz(args.seed, args.events, cfg)
    _write_outputs(args, result)
    return _report_result(result)


def cmd_load(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    summary = load_test(cfg, clients=args.clients)
    print(f"clients={summary.clients} granted={summary.granted} busy={summary.busy}")
    sys.stdout.write(render_verdicts(summary.result.verdicts))
    return summary.result.exit_code


def cmd_replay_crash(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    commands = parse_scenario(Path(args.scenario).read_text())
    verdict = replay_crash(commands, args.at, cfg, torn=args.torn)
    status = "equivalent" if verdict.equivalent else "MISMATCH"
    print(f"replay_crash|at={verdict.crash_at}|{status}")
    return 0 if verdict.equivalent else 2


def cmd_report(args: argparse.Namespace) -> int:
    parsed = parse_trace(Path(args.trace).read_text().splitlines())
    cfg = parse_header(parsed.header) if parsed.header else RunConfig()
    verdicts = evaluate_trace(parsed, cfg)
    sys.stdout.write(render_verdicts(verdicts))
    return exit_code(verdicts)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="unimas",
        description="Deterministic multi-agent IMS runtime with runtime verification",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, seeded: bool = True) -> None:
        p.add_argument("--config", help="config file of key = value lines")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one setting")
        if seeded:
            p.add_argument("--seed", type=int, default=None)

    run_p = sub.add_parser("run", help="run a scenario file")
    run_p.add_argument("scenario")
    common(run_p)
    run_p.add_argument("--inject", metavar="pN", help="disable one guard (p1..p11)")
    run_p.add_argument("--trace", help="write the trace to this path")
    run_p.add_argument("--dump", help="write the store dump to this path")
    run_p.add_argument("--journal", help="write the journal to this path")
    run_p.set_defaults(fn=cmd_run)

    fuzz_p = sub.add_parser("fuzz", help="run a seeded random scenario")
    fuzz_p.add_argument("--seed", type=int, required=True)
    fuzz_p.add_argument("--events", type=int, required=True)
    fuzz_p.add_argument("--config", help="config file of key = value lines")
    fuzz_p.add_argument("--set", action="append", metavar="KEY=VALUE")
    fuzz_p.add_argument("--inject", metavar="pN")
    fuzz_p.add_argument("--trace", help="write the trace to this path")
    fuzz_p.add_argument("--print-only", action="store_true", help="print commands, do not run")
    fuzz_p.set_defaults(fn=cmd_fuzz)

    load_p = sub.add_parser("load", help="session capacity load test")
    load_p.add_argument("--clients", type=int, required=True)
    load_p.add_argument("--cap", type=int, default=None)
    common(load_p)
    load_p.set_defaults(fn=cmd_load)

    crash_p = sub.add_parser("replay-crash", help="crash/recover equivalence check")
    crash_p.add_argument("scenario")
    crash_p.add_argument("--at", type=int, required=True, help="crash after this event index")
    crash_p.add_argument("--torn", action="store_true", help="tear the last journal line")
    common(crash_p)
    crash_p.set_defaults(fn=cmd_replay_crash)

    report_p = sub.add_parser("report", help="re-evaluate verdicts from a trace file")
    report_p.add_argument("trace")
    report_p.set_defaults(fn=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ScenarioError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return PARSE_ERROR


if __name__ == "__main__":
    sys.exit(main())
