"""Command-line entry point: ``augkit <stage> --config cfg.json``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 dependency error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import load_config
from .errors import AugkitError
from .pipeline import COMMANDS, STAGES


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="augkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name in STAGES:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--work-dir", help="override work_dir")
        p.add_argument("--seed", type=int, help="override the top-level seed")
        p.add_argument("--jobs", type=int, help="worker threads within the stage")
        p.add_argument("--condition", help="name under which evaluate stores metrics")
        p.add_argument("-v", "--verbose", action="store_true")
    p = sub.add_parser("synth", help="write a small synthetic corpus with a ready-to-run config")
    p.add_argument("out_dir")
    p.add_argument("--speakers", type=int, default=8)
    p.add_argument("--utts", type=int, default=4)
    p.add_argument("--test-speakers", type=int, default=4)
    p.add_argument("--test-utts", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            from .synthetic import make_corpus
            counts = make_corpus(args.out_dir, args.speakers, args.utts, args.test_speakers, args.test_utts, args.seed)
            print(f"wrote {counts['train']} training and {counts['test']} test utterances, "
                  f"{counts['trials']} trials to {args.out_dir}")
            return 0
        if args.seed is not None and args.seed < 0:
            parser.error("--seed must be non-negative")
        cfg = load_config(args.config, {"work_dir": args.work_dir, "seed": args.seed, "jobs": args.jobs,
                                        "condition": args.condition})
        result = COMMANDS[args.command](cfg)
    except AugkitError as exc:
        print(f"augkit {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except SystemExit as exc:
        return 1 if exc.code else 0
    print(result.get("message", "done"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
