"""Command-line entry point: pipeline stages as subcommands.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numerical
divergence.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .errors import DataError, TrainingDivergence, UsageError
from .eval import format_report

STAGES = {
    "prepare": pipeline.cmd_prepare,
    "embed": pipeline.cmd_embed,
    "train-index": pipeline.cmd_train_index,
    "gen-prompts": pipeline.cmd_gen_prompts,
    "rank": pipeline.cmd_rank,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", "-c", required=True, help="pipeline config JSON")
    common.add_argument("--workdir", help="override paths.workdir")
    common.add_argument("--seed", type=int, help="override every stage seed")
    common.add_argument("--verbose", "-v", action="store_true", help="debug logging")

    parser = _Parser(
        prog="semidrec",
        description="Semantic user IDs and two-stage ranking for review corpora.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    descriptions = {
        "prepare": "ingest raw reviews, 5-core filter, leave-one-out split",
        "embed": "embed review texts and user-ID strings",
        "train-index": "train fusion + quantizer, assign semantic IDs",
        "gen-prompts": "build and mix the six alignment-task corpora",
        "rank": "retrieve candidates and rank them for test users",
        "eval": "aggregate ranking results into the metrics report",
        "all": "run every stage in order",
        "ablate-index": "compare P-ID / N-ID / O-ID metrics",
    }
    for name, desc in descriptions.items():
        sub.add_parser(name, parents=[common], help=desc,
                       description=desc)
    return parser


def run(args: argparse.Namespace) -> int:
    cfg = pipeline.load_config(args.config, workdir=args.workdir, seed=args.seed)
    if args.command in STAGES:
        for path in STAGES[args.command](cfg):
            print(f"wrote {path}")
    elif args.command == "eval":
        report, paths = pipeline.cmd_eval(cfg)
        for path in paths:
            print(f"wrote {path}")
        print(format_report(report, cfg.eval_ks))
    elif args.command == "all":
        report = pipeline.cmd_all(cfg)
        print(format_report(report, cfg.eval_ks))
    elif args.command == "ablate-index":
        print(pipeline.cmd_ablate_index(cfg))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.DEBUG if args.verbose else logging.INFO,
            format="%(levelname)s %(name)s: %(message)s",
        )
        return run(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except TrainingDivergence as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
