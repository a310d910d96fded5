"""Command line entry points.

One verb per pipeline stage plus ``pipeline`` to run several in order,
``compare`` to score trained loss families side by side, and ``synth`` to
generate a long-tailed benchmark dataset.  Set the SEGHARM_LOG environment
variable (DEBUG, INFO, WARNING, ERROR) to control log verbosity.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import corpus, pipeline, synth
from .losses import FAMILIES
from .pipeline import STAGES, PipelineError

log = logging.getLogger("segharm")

_STAGE_VERBS = ("ingest", "clean", "threshold", "segment", "split", "train", "eval")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE", help="flat key = value configuration file")
    parser.add_argument("--out", metavar="DIR", help="run directory for artifacts")
    parser.add_argument("--dataset", metavar="FILE", help="input dataset (JSON lines)")
    parser.add_argument("--seed", type=int, help="seed for splitting and training")
    parser.add_argument("--loss", choices=FAMILIES, help="loss family to train or evaluate")
    parser.add_argument("--eta", type=float, help="segmentation tolerance in (0, 1]")
    parser.add_argument("--min-count", type=int, help="frequency threshold for keeping a class")
    parser.add_argument("--threshold", type=float, help="similarity threshold for label cleaning")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segharm",
        description="Segmented training for long-tailed multi-label classification.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    helps = {
        "ingest": "parse and normalize the raw dataset",
        "clean": "drop label codes dissimilar to their record's note",
        "threshold": "remove classes below the frequency threshold",
        "segment": "cut the frequency table into head, body, and tail segments",
        "split": "stratified train/validation/test split",
        "train": "fit classifiers with the configured loss family",
        "eval": "score the trained models on the test split",
    }
    for verb in _STAGE_VERBS:
        p = sub.add_parser(verb, help=helps[verb])
        _add_common(p)

    p = sub.add_parser("pipeline", help="run pipeline stages in order")
    _add_common(p)
    p.add_argument(
        "--stages",
        metavar="LIST",
        help=f"comma-separated subset of {','.join(STAGES)} (default: all)",
    )

    p = sub.add_parser("compare", help="compare trained loss families on the test split")
    _add_common(p)
    p.add_argument(
        "families",
        nargs="*",
        metavar="FAMILY",
        help="loss families to compare (default: from the configuration)",
    )

    p = sub.add_parser("synth", help="generate a synthetic long-tailed dataset")
    p.add_argument("--out", metavar="DIR", default="run", help="directory for synthetic.jsonl")
    p.add_argument("--classes", type=int, default=60, help="number of classes")
    p.add_argument("--samples", type=int, default=5000, help="number of records")
    p.add_argument("--dim", type=int, default=32, help="feature dimension")
    p.add_argument("--ratio", type=float, default=100.0, help="head to tail frequency ratio")
    p.add_argument(
        "--labels-per-sample", type=float, default=2.0, help="mean number of codes per record"
    )
    p.add_argument("--noise", type=float, default=0.1, help="feature noise standard deviation")
    p.add_argument("--seed", type=int, default=0, help="generator seed")
    return parser


def _config_from_args(args: argparse.Namespace) -> pipeline.RunConfig:
    overrides = {
        "out": args.out,
        "dataset": args.dataset,
        "seed": args.seed,
        "loss": args.loss,
        "eta": args.eta,
        "min_count": args.min_count,
        "clean_threshold": args.threshold,
    }
    return pipeline.load_run_config(args.config, overrides)


def _run_stages(args: argparse.Namespace, stages) -> int:
    config = _config_from_args(args)
    for name, status in pipeline.run_pipeline(config, stages=stages):
        print(f"{name}: {status}")
    return 0


def _run_compare(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    pipeline.compare_losses(config, args.families or None)
    print((Path(config.out) / "compare.txt").read_text(encoding="utf-8"), end="")
    return 0


def _run_synth(args: argparse.Namespace) -> int:
    spec = synth.SynthSpec(
        num_classes=args.classes,
        num_samples=args.samples,
        feature_dim=args.dim,
        head_tail_ratio=args.ratio,
        labels_per_sample=args.labels_per_sample,
        noise_std=args.noise,
        seed=args.seed,
    )
    dataset = synth.generate(spec)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "synthetic.jsonl"
    corpus.save_dataset(dataset, path)
    print(f"wrote {path} ({len(dataset)} records, {len(dataset.class_universe)} classes)")
    return 0


def main(argv=None) -> int:
    level = os.environ.get("SEGHARM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.verb in _STAGE_VERBS:
            return _run_stages(args, [args.verb])
        if args.verb == "pipeline":
            stages = None
            if args.stages:
                stages = [s.strip() for s in args.stages.split(",") if s.strip()]
            return _run_stages(args, stages)
        if args.verb == "compare":
            return _run_compare(args)
        if args.verb == "synth":
            return _run_synth(args)
        raise PipelineError(f"unknown verb {args.verb!r}")
    except (PipelineError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
