"""Command line entry point: ``nma <command> --config <path> [--seed N] [--format json|csv] [--out <path>]``.

Exit status is 0 when every check passes, 1 when a check fails or a
domain error is recorded in the report, and 2 for unusable configuration.
"""

from __future__ import annotations

import argparse
import sys

from .config import COMMANDS, parse_config
from .errors import ParseError, SchemaError
from .report import emit_report
from .suites import run_command

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def build_parser():
    p = argparse.ArgumentParser(prog="nma", description="Run one verification or solver suite.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="path to a JSON configuration document")
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides command.seed)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", default=None, help="output path (stdout when absent)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
        doc = parse_config(text)
    except OSError as err:
        print(f"nma: cannot read config: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except ParseError as err:
        print(f"nma: parse error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except SchemaError as err:
        print(f"nma: schema error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None and args.seed < 0:
        print("nma: seed must be nonnegative", file=sys.stderr)
        return EXIT_CONFIG
    rep = run_command(doc, args.command, args.seed, text)
    out = emit_report(rep, args.format)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(out)
    else:
        sys.stdout.write(out)
    if rep.error is not None:
        print(f"nma: {rep.error['type']}: {rep.error['message']}", file=sys.stderr)
    for c in rep.checks:
        if not c["passed"]:
            print(f"nma: check failed: {c['name']} (value {c['value']}, limit {c['limit']})", file=sys.stderr)
    return EXIT_OK if rep.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
