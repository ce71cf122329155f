"""Command-line entry point: staged experiment runs from a config file.

Exit codes: 0 success, 1 stage failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, ExperimentConfig, load_config
from .pipeline import STAGES, PipelineError, run_pipeline


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rangewalk",
        description="Range-of-random-walk simulation laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("generate", "materialize the trajectory cache"),
            ("graph", "export range-graph edge lists and vertex tables"),
            ("cuts", "export cut-time CSVs"),
            ("metrics", "export resistance/distance profile CSVs"),
            ("walk", "export a walk trace and heat-kernel CSV"),
            ("estimate", "run the ensemble estimators"),
            ("verify", "run oracle-equivalence and invariant checks"),
            ("report", "run the full pipeline and emit report.json")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", metavar="PATH",
                       help="flat key = value config file")
        p.add_argument("--seed", type=int, metavar="U64",
                       help="override the master seed")
        p.add_argument("--threads", type=int, metavar="N",
                       help="worker cap for within-stage parallelism")
        p.add_argument("--out", metavar="DIR", help="output directory")
        p.add_argument("--stage", metavar="NAME",
                       help="with 'report': run the pipeline only through "
                            "this stage")
    return parser


def _configure(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    if args.out is not None:
        cfg.out_dir = args.out
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _configure(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.command == "report":
        stages = STAGES
        if args.stage:
            if args.stage not in STAGES:
                print(f"config error: unknown stage '{args.stage}'",
                      file=sys.stderr)
                return 2
            stages = STAGES[:STAGES.index(args.stage) + 1]
    else:
        stages = ("generate",) if args.command == "generate" else \
            ("generate", args.command)
    try:
        manifest = run_pipeline(cfg, out_dir=cfg.out_dir, stages=stages)
    except PipelineError as exc:
        print(f"pipeline failure: {exc}", file=sys.stderr)
        return 1
    done = [s for s, status in manifest.stages.items()
            if status not in ("skipped",)]
    print(f"completed stages: {', '.join(done)}; "
          f"{len(manifest.files)} files in {cfg.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
