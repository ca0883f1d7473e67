"""``proofchannels`` command line: run, list and check scenarios.

Exit codes: 0 when every check passes, 1 on an invariant violation, 2 when
the scenario cannot be parsed or validated.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from .scenario import ScenarioError, builtin_names, builtin_text, load_scenario, parse_scenario, run_scenario

EXIT_OK, EXIT_VIOLATION, EXIT_INVALID = 0, 1, 2


def _summary(name: str) -> str:
    try:
        return parse_scenario(builtin_text(name)).summary
    except ScenarioError as e:
        return f"(invalid: {e})"


def cmd_run(args) -> int:
    s = load_scenario(args.scenario)
    report = run_scenario(s, args.seed)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(report.log_text)
    sys.stdout.write(report.render())
    return EXIT_OK if report.ok else EXIT_VIOLATION


def cmd_list(args) -> int:
    for name in builtin_names():
        print(f"{name:28} {_summary(name)}")
    return EXIT_OK


def cmd_check(args) -> int:
    s = load_scenario(args.scenario)
    print(f"ok {s.name}: {len(s.actors)} actors, {len(s.channels)} channels, "
          f"{len(s.script)} directives")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="proofchannels",
                                description="Run payment-channel bet scenarios on a simulated chain.")
    p.add_argument("--log-level", default="WARNING",
                   choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                   help="logging verbosity; DEBUG echoes every event to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="execute a scenario and print its report")
    run.add_argument("scenario", help="path to a scenario file or builtin:<name>")
    run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run.add_argument("--out", help="write the event log to this file")
    run.add_argument("--log-level", default=argparse.SUPPRESS,
                     choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    run.set_defaults(func=cmd_run)
    ls = sub.add_parser("list", help="list builtin scenarios")
    ls.set_defaults(func=cmd_list)
    check = sub.add_parser("check", help="parse and validate a scenario without running it")
    check.add_argument("scenario")
    check.set_defaults(func=cmd_check)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(message)s")
    try:
        return args.func(args)
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
