"""Command-line entry point: ``logsynth <stage> --config FILE [overrides]``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .pipeline import STAGES, GuardViolation, StageError, run_pipeline

log = logging.getLogger("logsynth")

EXIT_OK, EXIT_CONFIG, EXIT_STAGE, EXIT_GUARD = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="YAML configuration file")
    common.add_argument("--seed", type=int, help="override the reasoner seed")
    common.add_argument("--mock", action="store_true", help="force the offline mock reasoner")
    common.add_argument("--ratio", help="augmentation ratio R (e.g. 0.01 or 1/100)")
    common.add_argument("--entries", type=int, help="number of entry points (t_entry)")
    common.add_argument("--depth", type=int, help="call depth limit (t_depth)")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="logsynth", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "analyze": "parse sources, extract templates, build and prune the call graph",
        "lcfg": "build per-method log-oriented CFGs and export them as dot",
        "generate": "assemble, verify and parameterize log sequences",
        "label": "label sequences and write sessions",
        "augment": "mix synthetic sessions into the training split",
        "audit-coverage": "report source-template coverage",
        "pipeline": "run every stage in order",
    }
    for name in (*STAGES, "pipeline"):
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    overrides = {"seed": args.seed, "mock": args.mock or None, "ratio": args.ratio,
                 "entries": args.entries, "depth": args.depth, "out": args.out}
    try:
        config = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    stages = STAGES if args.command == "pipeline" else (args.command,)
    try:
        results = run_pipeline(config, stages=stages)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GuardViolation as exc:
        print(f"guard violation: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except StageError as exc:
        print(f"stage failure: {exc}", file=sys.stderr)
        return EXIT_STAGE
    for r in results:
        summary = ", ".join(f"{k}={v}" for k, v in r.counts.items())
        print(f"{r.stage}: {summary}" if summary else r.stage)
        for note in r.notes:
            print(f"  {note}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
