"""Command-line interface: train, parse, eval, oracle-check.

Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure,
4 oracle counterexample.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields

from .encoder import Hyper, NumericError
from .metrics import MetricsError, corpus_parseval
from .model_io import ModelFormatError, load_model, save_model
from .training import MODES, TrainingConfig, parse_sentences, report_tsv, train
from .treebank import (
    NormalizationRules,
    TreebankError,
    parse_tagged_line,
    prepare,
    read_treebank,
    tree_to_brackets,
    write_tree,
)
from .verify import MAX_LEN, EnumerationTooLarge, dyna, mutated_dyna, run_oracle_check

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC, EXIT_COUNTEREXAMPLE = 0, 1, 2, 3, 4

log = logging.getLogger("spanparser")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def load_corpus(path):
    rules = NormalizationRules()
    return [prepare(t, rules) for t in read_treebank(path)]


# ---------------------------------------------------------------------------
# train

TRAIN_FLAGS = {
    "epochs": int,
    "batch_size": int,
    "mode": str,
    "alpha": float,
    "seed": int,
    "dropout": float,
    "unk_rate": float,
    "threads": int,
}
HYPER_FLAGS = {
    "word_dim": int,
    "tag_dim": int,
    "lstm_units": int,
    "hidden_units": int,
}


def resolve_config(args):
    """TrainingConfig and Hyper from defaults, then --config, then flags."""
    values = {}
    if args.config:
        with open(args.config) as f:
            values = json.load(f)
        known = {f.name for f in fields(TrainingConfig)} | {f.name for f in fields(Hyper)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise UsageError(f"unknown keys in {args.config}: {', '.join(unknown)}")
    for name in list(TRAIN_FLAGS) + list(HYPER_FLAGS):
        v = getattr(args, name)
        if v is not None:
            values[name] = v
    cfg_keys = {f.name for f in fields(TrainingConfig)}
    try:
        cfg = TrainingConfig(**{k: v for k, v in values.items() if k in cfg_keys})
        hyper = Hyper(**{k: v for k, v in values.items() if k not in cfg_keys})
    except (TypeError, ValueError) as e:
        raise UsageError(str(e)) from None
    hyper.dropout = cfg.dropout
    return cfg, hyper


def cmd_train(args) -> int:
    cfg, hyper = resolve_config(args)
    if args.dump_config:
        with open(args.dump_config, "w") as f:
            json.dump({**cfg.to_dict(), **hyper.to_dict()}, f, indent=2, sort_keys=True)
            f.write("\n")
    train_trees = load_corpus(args.train)
    dev_trees = load_corpus(args.dev)
    if not train_trees or not dev_trees:
        raise TreebankError("training and dev treebanks must be nonempty")
    result = train(train_trees, dev_trees, cfg, hyper, on_epoch=lambda r: print(r.line(), flush=True))
    save_model(result.model, args.model)
    with open(args.report or args.model + ".tsv", "w") as f:
        f.write(report_tsv(result.epochs))
    print(f"best epoch {result.best_epoch}; model written to {args.model}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parse / eval


def read_tagged(stream):
    sents = []
    for lineno, line in enumerate(stream, 1):
        if line.strip():
            sents.append(parse_tagged_line(line, lineno))
    return sents


def cmd_parse(args) -> int:
    model = load_model(args.model)
    if args.input and args.input != "-":
        with open(args.input) as f:
            sents = read_tagged(f)
    else:
        sents = read_tagged(sys.stdin)
    trees = parse_sentences(model, sents, args.threads)
    text = "".join(write_tree(t) + "\n" for t in trees)
    if args.output:
        with open(args.output, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_eval(args) -> int:
    pred = load_corpus(args.pred)
    gold = load_corpus(args.gold)
    if len(pred) != len(gold):
        raise MetricsError(f"{args.pred} has {len(pred)} trees but {args.gold} has {len(gold)}")
    for k, (p, g) in enumerate(zip(pred, gold), 1):
        if [t.word for t in p.leaves()] != [t.word for t in g.leaves()]:
            raise MetricsError(f"tree {k}: predicted and gold words differ")
    report = corpus_parseval((tree_to_brackets(p), tree_to_brackets(g)) for p, g in zip(pred, gold))
    print(report.format())
    return EXIT_OK


# ---------------------------------------------------------------------------
# oracle-check


def cmd_oracle_check(args) -> int:
    if args.max_len > MAX_LEN:
        raise UsageError(
            f"--max-len {args.max_len} is too large: brute-force enumeration is exponential "
            f"in sentence length; use --max-len {MAX_LEN} or less"
        )
    trees = load_corpus(args.treebank)
    summary = run_oracle_check(
        trees,
        max_len=args.max_len,
        exhaustive_len=min(args.exhaustive_len, args.max_len),
        samples=args.samples,
        seed=args.seed,
        dyna_fn=mutated_dyna if args.mutate_oracle else dyna,
        progress=log.info,
    )
    report = summary.report
    print(f"{summary.exhaustive} sentences enumerated, {summary.sampled} sampled, "
          f"{report.configurations} configurations")
    for reason in summary.skipped:
        print(f"skipped sentence: {reason}")
    for line in report.lines():
        print(line)
    return EXIT_OK if report.ok else EXIT_COUNTEREXAMPLE


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="spanparser", description="Span-based transition constituency parser")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--train", required=True, help="training treebank (bracketed trees)")
    t.add_argument("--dev", required=True, help="dev treebank")
    t.add_argument("--model", required=True, help="output model bundle")
    t.add_argument("--report", help="per-epoch TSV report (default: MODEL.tsv)")
    t.add_argument("--config", help="JSON file of training and model settings")
    t.add_argument("--dump-config", help="write the resolved settings as JSON")
    t.add_argument("--mode", choices=MODES)
    t.add_argument("--alpha", type=float, help="exploration sharpness (dynamic-explore)")
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--dropout", type=float)
    t.add_argument("--unk-rate", type=float, help="target UNK rate (default: dev OOV rate)")
    t.add_argument("--threads", type=int)
    for name in HYPER_FLAGS:
        t.add_argument("--" + name.replace("_", "-"), type=int)
    t.set_defaults(func=cmd_train)

    q = sub.add_parser("parse", help="parse tagged sentences (word_TAG per token)")
    q.add_argument("--model", required=True)
    q.add_argument("--input", help="tagged input, one sentence per line (default: stdin)")
    q.add_argument("--output", help="output treebank (default: stdout)")
    q.add_argument("--threads", type=int, default=1)
    q.set_defaults(func=cmd_parse)

    e = sub.add_parser("eval", help="labeled bracket LR / LP / F1")
    e.add_argument("pred")
    e.add_argument("gold")
    e.set_defaults(func=cmd_eval)

    o = sub.add_parser("oracle-check", help="verify the dynamic oracle by brute force")
    o.add_argument("treebank")
    o.add_argument("--max-len", type=int, default=5, help="longest sentence checked")
    o.add_argument("--exhaustive-len", type=int, default=4,
                   help="longest sentence enumerated exhaustively; longer ones are sampled")
    o.add_argument("--samples", type=int, default=1000,
                   help="configurations sampled over the longer sentences")
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--mutate-oracle", action="store_true",
                   help="check a deliberately broken oracle (harness self-test)")
    o.set_defaults(func=cmd_oracle_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "threads", None) is not None and args.threads < 1:
        parser.error("--threads must be positive")
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except EnumerationTooLarge as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (TreebankError, MetricsError, ModelFormatError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
