"""Command-line interface.

Subcommands: ``phantom``, ``saliency``, ``eval``, ``ablate``, ``sweep``.
All take ``--config`` (flat key = value file), ``--out``, and where it
makes sense ``--seed``.  ``TSE_THREADS`` caps per-image parallelism.
Exits nonzero on any contract or format error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from . import pipeline
from .config import PipelineConfig, load_config
from .errors import TseError


def _load(args) -> PipelineConfig:
    config = load_config(args.config) if args.config else PipelineConfig()
    if getattr(args, "seed", None) is not None:
        config = replace(config, seed=args.seed)
    if getattr(args, "count", None) is not None:
        config = replace(config, count=args.count)
    return config


def _add_common(parser, count: bool = False):
    parser.add_argument("--config", help="path to a key = value config file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, help="override the config seed")
    if count:
        parser.add_argument("--count", type=int, help="number of phantom cases")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tse", description="Anatomy-guided tumor saliency estimation"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    _add_common(sub.add_parser("phantom", help="generate synthetic phantom cases"),
                count=True)
    _add_common(sub.add_parser("saliency", help="run the saliency pipeline"))
    ev = sub.add_parser("eval", help="score saliency maps against ground truths")
    _add_common(ev)
    ev.add_argument("--saliency-dir", required=True)
    ev.add_argument("--gt-dir", required=True)
    _add_common(sub.add_parser("ablate", help="compare background-map variants"),
                count=True)
    _add_common(sub.add_parser("sweep", help="grid search over energy weights"),
                count=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load(args)
        if args.command == "phantom":
            names = pipeline.write_phantom_dataset(config, args.out)
            print(f"wrote {len(names)} phantom case(s) to {args.out}")
        elif args.command == "saliency":
            result = pipeline.run_saliency(config, args.out)
            print(
                f"saliency done: {result.graph.n_regions} regions, "
                f"{result.solve.iterations} iterations, "
                f"energy {result.solve.energies[-1]:.4f}"
            )
        elif args.command == "eval":
            report = pipeline.run_eval(config, args.saliency_dir, args.gt_dir, args.out)
            print(
                f"evaluated {len(report['rows'])} image(s): "
                f"mean F={report['mean_f']:.4f} mean MAE={report['mean_mae']:.4f}"
            )
        elif args.command == "ablate":
            summary = pipeline.run_ablation(config, args.out)
            print(
                "ablation: "
                f"F(bg_full)={summary['f_measure_bg_full']:.4f} "
                f"F(bg_nc2)={summary['f_measure_bg_nc2']:.4f}"
            )
        elif args.command == "sweep":
            records = pipeline.run_sweep(config, args.out)
            best = max(records, key=lambda r: r[3])
            print(
                f"swept {len(records)} combination(s); best F={best[3]:.4f} "
                f"at alpha={best[0]:g} beta={best[1]:g} gamma={best[2]:g}"
            )
    except TseError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
