"""Command-line entry point.

    touchsim run <scenario> [--firewall <policy>] [--trace-out <path>] [--seed <u64>]
    touchsim replay <trace> [--scenario <scenario>]
    touchsim fuzz --profile <name> --seed <u64> -n <count>
    touchsim report <trace>

Scenarios and policies are file paths or the names of shipped ones.
Exit status: 0 when every expectation holds, 1 when one fails, 2 on bad
arguments or unreadable input.
"""

from __future__ import annotations

import argparse
import sys

from ..controller import ReplayMiss
from ..schemas import SchemaError
from ..trace import MalformedTrace, import_trace
from .fuzz import fuzz
from .report import summarize_trace
from .scenario import ScriptError, replay_scenario, run_scenario

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def _u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def _count(text: str) -> int:
    value = _u64(text)
    if value < 1:
        raise argparse.ArgumentTypeError("count must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="touchsim", description="Touchscreen supply-chain attack simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and check its expectations")
    run.add_argument("scenario")
    run.add_argument("--firewall", metavar="POLICY")
    run.add_argument("--trace-out", metavar="PATH")
    run.add_argument("--seed", type=_u64)
    run.add_argument("--json", action="store_true", help="print the machine-readable report")

    replay = sub.add_parser("replay", help="re-drive driver and UI from a recorded trace")
    replay.add_argument("trace")
    replay.add_argument("--scenario", help="script to use instead of the one named in the trace")
    replay.add_argument("--json", action="store_true")

    fz = sub.add_parser("fuzz", help="boot the driver against random device tables")
    fz.add_argument("--profile", required=True)
    fz.add_argument("--seed", type=_u64, required=True)
    fz.add_argument("-n", dest="count", type=_count, required=True)
    fz.add_argument("--benign", action="store_true", help="draw only in-bounds tables")
    fz.add_argument("--json", action="store_true")

    rep = sub.add_parser("report", help="summarize a trace")
    rep.add_argument("trace")
    rep.add_argument("--json", action="store_true")
    return parser


def _emit(obj, as_json: bool) -> None:
    print(obj.to_json() if as_json else obj.to_text())


def _fail(msg: str) -> int:
    print(f"touchsim: {msg}", file=sys.stderr)
    return EXIT_USAGE


def _load_trace(path: str):
    try:
        return import_trace(path)
    except FileNotFoundError:
        raise _Usage(f"no such trace: {path}") from None
    except (OSError, MalformedTrace) as exc:
        raise _Usage(f"{path}: {exc}") from None


class _Usage(Exception):
    pass


def _dispatch(args) -> int:
    if args.command == "run":
        try:
            report, _ = run_scenario(args.scenario, policy=args.firewall, seed=args.seed,
                                     trace_out=args.trace_out)
        except ScriptError as exc:
            raise _Usage(str(exc)) from None
        except (FileNotFoundError, SchemaError) as exc:
            raise _Usage(str(exc)) from None
        _emit(report, args.json)
        return EXIT_OK if report.passed else EXIT_FAILED
    if args.command == "replay":
        trace = _load_trace(args.trace)
        try:
            report, _ = replay_scenario(trace, args.scenario)
        except ScriptError as exc:
            raise _Usage(str(exc)) from None
        except ReplayMiss as exc:
            print(f"replay diverged: {exc}", file=sys.stderr)
            return EXIT_FAILED
        _emit(report, args.json)
        return EXIT_OK if report.passed else EXIT_FAILED
    if args.command == "fuzz":
        try:
            summary = fuzz(args.profile, args.seed, args.count, benign=args.benign)
        except ValueError as exc:
            raise _Usage(str(exc)) from None
        _emit(summary, args.json)
        return EXIT_OK if summary.ok else EXIT_FAILED
    summary = summarize_trace(_load_trace(args.trace))
    _emit(summary, args.json)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return _dispatch(args)
    except _Usage as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
