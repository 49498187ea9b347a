"""Command line entry point: ``dnlap <subcommand> --config run.json``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import _backend
from .errors import LabError
from .harness import count_failures, emit_report, load_config, load_reports, run_experiment

SUBCOMMANDS = {
    "exponents": "exponents",
    "march": "march",
    "extract": "extract",
    "barrier": "barrier",
    "verify": "verify-suite",
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dnlap", description="Doubly nonlinear fractional diffusion laboratory")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in (*SUBCOMMANDS, "report"):
        sp = sub.add_parser(name)
        if name == "report":
            sp.add_argument("run_dir", nargs="?", help="run directory (default: --out)")
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--threads", type=int, default=0, help="kernel threads (0 = auto)")
        sp.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="dot-path override into the config, e.g. params.p=1.8")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    _backend.set_threads(args.threads)
    try:
        if args.command == "report":
            run_dir = args.run_dir or args.out
            if run_dir is None:
                run_dir = load_config(args.config, args.override).output
            emit_report(run_dir, sys.stdout)
            return 0
        overrides = [f"experiment={SUBCOMMANDS[args.command]}", *args.override]
        cfg = load_config(args.config, overrides, args.out)
        out = run_experiment(cfg)
    except LabError as exc:
        print(f"dnlap: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2 if args.command != "verify" else 1
    if args.command == "exponents":
        print((out / "exponents.json").read_text(), end="")
    if args.command in ("verify", "barrier"):
        emit_report(out, sys.stdout)
        if args.command == "verify":
            return count_failures(load_reports(out))
    return 0


if __name__ == "__main__":
    sys.exit(main())
