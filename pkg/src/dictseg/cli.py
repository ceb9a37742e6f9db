"""Command-line interface.

Subcommands: synth, train, eval, ablate, summary, gradcheck. Exit codes:
0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

from .ablation import GROUPS, ablate, render_table
from .config import RunConfig, load_config, with_overrides
from .errors import ConfigError, DataError, DictsegError, NumericalError
from .model import Model
from .rng import Rng
from .summary import model_summary
from .synthetic import generate
from .train import (
    SegmentationDataset,
    end_to_end_gradcheck,
    evaluate,
    load_checkpoint,
    train,
)

GRADCHECK_THRESHOLD = 1e-4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dictseg",
        description="Dynamic class-dictionary segmentation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, checkpoint: bool = False):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory override")
        p.add_argument("--data", help="dataset root override")
        if checkpoint:
            p.add_argument("--checkpoint", help="checkpoint directory")

    common(sub.add_parser("synth", help="generate the synthetic dataset"))
    common(sub.add_parser("train", help="train a model"))
    eval_p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    common(eval_p, checkpoint=True)
    eval_p.add_argument("--split", default="val", help="dataset split (default val)")
    eval_p.add_argument(
        "--dump-predictions",
        action="store_true",
        help="write colorized prediction images",
    )
    ablate_p = sub.add_parser("ablate", help="run the ablation study")
    common(ablate_p)
    ablate_p.add_argument(
        "--groups",
        default=",".join(GROUPS),
        help=f"comma-separated subset of {{{','.join(GROUPS)}}}",
    )
    common(sub.add_parser("summary", help="parameter and MAC accounting"))
    common(sub.add_parser("gradcheck", help="finite-difference gradient check"))
    return parser


def _load(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "out", None):
        overrides["out_dir"] = args.out
    if getattr(args, "data", None):
        overrides["data_root"] = args.data
    return with_overrides(config, overrides) if overrides else config


def _run(args) -> int:
    config = _load(args)
    if args.command == "synth":
        paths = generate(config.synthetic_config(), config.data_root)
        for split, pairs in paths.items():
            print(f"{split}: {len(pairs)} samples under {config.data_root}/{split}")
        return 0
    if args.command == "train":
        summary = train(config)
        print(f"trained {summary['steps_run']} steps -> {summary['out_dir']}")
        print(f"final val miou = {summary.get('final_val_miou', float('nan')):.4f}")
        return 0
    if args.command == "eval":
        model = Model(config, Rng(config.seed))
        if args.checkpoint:
            load_checkpoint(args.checkpoint, model)
        dataset = SegmentationDataset(config.data_root, args.split)
        dump = None
        if args.dump_predictions:
            dump = f"{config.out_dir}/predictions_{args.split}"
        report = evaluate(model, dataset, config, dump_dir=dump)
        print(report.render_table())
        return 0
    if args.command == "ablate":
        groups = [g.strip() for g in args.groups.split(",") if g.strip()]
        unknown = [g for g in groups if g not in GROUPS]
        if unknown:
            raise ConfigError(f"unknown ablation groups: {', '.join(unknown)}")
        rows = ablate(config, config.data_root, config.out_dir, groups)
        print(render_table(rows))
        return 0
    if args.command == "summary":
        print(model_summary(config).render(), end="")
        return 0
    if args.command == "gradcheck":
        error = end_to_end_gradcheck(config)
        print(f"max relative gradient error = {error:.3e}")
        if error >= GRADCHECK_THRESHOLD:
            print(
                f"FAIL: error above threshold {GRADCHECK_THRESHOLD:.0e}",
                file=sys.stderr,
            )
            return 4
        return 0
    raise ConfigError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    except DictsegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
