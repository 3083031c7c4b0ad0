"""
dar-rerank command-line interface.

Usage:
    dar-rerank gen-data <spec> [--out DIR]
    dar-rerank train <config> [--resume STATE] [--set KEY=VALUE ...]
    dar-rerank evaluate <config> [--dataset FILE] [--baseline REPORT] [--out DIR] [--set ...]
    dar-rerank index <config> [--set ...]
    dar-rerank retrieve <config> <dataset> [<dataset> ...] [--set ...]
    dar-rerank significance <dump_a> <dump_b> [--trials N] [--seed S] [--exact] [--output FILE]

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from dar_rerank import pipeline
from dar_rerank.config import ExperimentConfig, parse_overrides
from dar_rerank.errors import DarRerankError

logger = logging.getLogger("dar_rerank")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_config(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", help="key=value (or .json) experiment config")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="Override a config key; repeatable")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dar-rerank", description="Answer-verification rerankers: train, evaluate, retrieve.")
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    # ── gen-data: synthetic planted-bridge corpus ──
    gen = sub.add_parser("gen-data", help="Generate the synthetic corpus")
    gen.add_argument("spec", help="Synthetic spec file (key=value or .json)")
    gen.add_argument("--out", "-o", default="data", help="Output directory (default: data)")

    # ── train ──
    tr = sub.add_parser("train", help="Train the configured model")
    _add_config(tr)
    tr.add_argument("--resume", default=None, metavar="STATE",
                    help="Continue from the <checkpoint>.state file of an earlier run")

    # ── evaluate ──
    ev = sub.add_parser("evaluate", help="Rank an evaluation set and report P@1/MAP/MRR")
    _add_config(ev)
    ev.add_argument("--dataset", default=None, help="Evaluation set (default: paths.test)")
    ev.add_argument("--baseline", default=None, help="Baseline report.json for the RER column")
    ev.add_argument("--out", "-o", default=None, help="Output directory (default: paths.out_dir)")
    ev.add_argument("--json", action="store_true", help="Print JSON instead of the table")

    # ── index / retrieve ──
    ix = sub.add_parser("index", help="Embed the passage corpus with a trained dual encoder")
    _add_config(ix)
    rt = sub.add_parser("retrieve", help="Write support sentences for every (question, target)")
    _add_config(rt)
    rt.add_argument("datasets", nargs="+", help="Datasets whose targets need supports")

    # ── significance ──
    sg = sub.add_parser("significance", help="Paired randomization test over two prediction dumps")
    sg.add_argument("dump_a")
    sg.add_argument("dump_b")
    sg.add_argument("--trials", "-n", type=int, default=100_000, help="Randomization trials (default: 100000)")
    sg.add_argument("--seed", type=int, default=0)
    sg.add_argument("--exact", action="store_true", help="Enumerate all sign patterns (<= 20 differing pairs)")
    sg.add_argument("--output", "-o", default=None, help="Save the result as JSON")
    sg.add_argument("--json", action="store_true", help="Print JSON instead of the summary")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    commands = {
        "gen-data": _cmd_gen_data,
        "train": _cmd_train,
        "evaluate": _cmd_evaluate,
        "index": _cmd_index,
        "retrieve": _cmd_retrieve,
        "significance": _cmd_significance,
    }
    if args.command not in commands:
        parser.print_help()
        return 1
    try:
        commands[args.command](args)
    except DarRerankError as exc:
        logger.error("%s", exc)
        return exc.exit_code
    return 0


def _load_config(args) -> ExperimentConfig:
    return ExperimentConfig.load(args.config, parse_overrides(args.overrides))


def _cmd_gen_data(args):
    manifest = pipeline.generate_data(args.spec, args.out)
    print(f"Corpus written to {args.out}")
    for split, n in manifest["questions"].items():
        print(f"  {split:<6} {n} questions")
    print(f"  passages {manifest['passages']}")


def _cmd_train(args):
    cfg = _load_config(args)
    _, log = pipeline.train(cfg, resume=args.resume)
    print(log.summary())
    print(f"\nCheckpoint saved to {pipeline.checkpoint_path(cfg)}")


def _cmd_evaluate(args):
    cfg = _load_config(args)
    report = pipeline.evaluate(cfg, dataset_path=args.dataset, baseline=args.baseline, out_dir=args.out)
    if args.json:
        print(json.dumps(report.to_json(), indent=2))
    else:
        print(report.summary())


def _cmd_index(args):
    cfg = _load_config(args)
    idx = pipeline.index(cfg)
    print(f"Indexed {len(idx)} passages (d={idx.dim}) into {cfg.paths.index}")


def _cmd_retrieve(args):
    cfg = _load_config(args)
    records = pipeline.retrieve(cfg, args.datasets)
    print(f"Wrote {len(records)} support sentences to {cfg.paths.supports}")


def _cmd_significance(args):
    result = pipeline.compare_dumps(args.dump_a, args.dump_b, trials=args.trials, seed=args.seed,
                                    exact=args.exact)
    if args.json:
        print(json.dumps(result.to_json(), indent=2))
    else:
        print(result.summary())
    if args.output:
        result.save(args.output)
        print(f"\nResult saved to {args.output}")


if __name__ == "__main__":
    sys.exit(main())
