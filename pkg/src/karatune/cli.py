"""Command-line entry point: ``karatune {analyze,tune,metrics,train-predictor,train-vocoder}``."""
from __future__ import annotations

import argparse
import logging
import os
import sys

from . import pipeline
from .config import BACKENDS, MODES, load_config
from .errors import ConfigError

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3

log = logging.getLogger("karatune")


def _setup_logging() -> None:
    level = os.environ.get("KARATUNE_LOG", "WARNING").upper()
    level = int(level) if level.isdigit() else logging.getLevelName(level)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--mode", choices=MODES)
    common.add_argument("--backend", choices=BACKENDS)

    parser = argparse.ArgumentParser(prog="karatune", description="Karaoke vocal pitch correction.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("analyze", parents=[common], help="extract pitch, envelope and notes")
    p.add_argument("inputs", nargs="+")
    p = sub.add_parser("tune", parents=[common], help="pitch-correct a recording")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--ref", help="reference notes (.mid or .txt); default: decoded from the input")
    p = sub.add_parser("metrics", parents=[common], help="score a recording against reference notes")
    p.add_argument("input")
    p.add_argument("--ref", required=True)
    p = sub.add_parser("train-predictor", parents=[common], help="train the pitch predictor")
    p.add_argument("inputs", nargs="+")
    p = sub.add_parser("train-vocoder", parents=[common], help="train the neural vocoder")
    p.add_argument("inputs", nargs="+")
    return parser


def run(args: argparse.Namespace) -> None:
    cfg = load_config(args.config, mode=args.mode, backend=args.backend, seed=args.seed, out_dir=args.out)
    if args.command == "analyze":
        for path in args.inputs:
            _, summary = pipeline.cmd_analyze(path, cfg)
            print(summary)
    elif args.command == "tune":
        if args.ref and len(args.inputs) > 1:
            raise ConfigError("--ref applies to a single input")
        for path in args.inputs:
            result = pipeline.cmd_tune(path, cfg, args.ref)
            print(f"{result['paths']['wav']}: cent_rmse={result['metrics'].cent_rmse:.2f}")
    elif args.command == "metrics":
        print(pipeline.cmd_metrics(args.input, args.ref, cfg).to_text(), end="")
    elif args.command == "train-predictor":
        print(pipeline.cmd_train_predictor(args.inputs, cfg))
    else:
        print(pipeline.cmd_train_vocoder(args.inputs, cfg))


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        run(args)
    except ConfigError as exc:
        print(f"karatune: config error: [config] {args.config or '<defaults>'}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except pipeline.StageError as exc:
        print(f"karatune: {exc.kind} error: {exc}", file=sys.stderr)
        return EXIT_CONFIG if exc.kind == "config" else EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
