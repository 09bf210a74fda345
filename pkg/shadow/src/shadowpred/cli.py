"""Command line entry point.

shadow train --dataset runs/<id>/dataset.jsonl \
             --records runs/<id>/judgments/<model>/records.jsonl \
             --target <model_id> --out-dir runs/<id>/shadow/<model>

Joins the dataset against one judge's records on triple_id, serializes,
splits, trains for one epoch, and writes report.json plus scores.csv into
--out-dir. Unjudged rows are skipped; oversized I/O pairs are dropped and
counted in the report.
"""
from __future__ import annotations

import argparse
import os
import sys

from . import serialize, trainer
from .encoder import make_encoder


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shadow")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train and evaluate a success predictor")
    train.add_argument("--dataset", required=True, help="dataset JSON-lines file")
    train.add_argument("--records", required=True, help="judgment records JSON-lines file")
    train.add_argument("--target", required=True, help="judge model id to predict")
    train.add_argument("--out-dir", required=True, help="directory for report.json and scores.csv")
    train.add_argument("--encoder", default="tiny", help="'tiny' or a local checkpoint path")
    train.add_argument("--batch", type=int, default=16)
    train.add_argument("--lr", type=float, default=None, help="override the encoder default")
    train.add_argument("--max-len", type=int, default=512)
    train.add_argument("--seed", type=int, default=0)
    train.set_defaults(func=_cmd_train)
    return parser


def _cmd_train(args: argparse.Namespace) -> int:
    rows = serialize.read_dataset_rows(args.dataset)
    success_by_id = serialize.read_success_labels(args.records, args.target)
    if not success_by_id:
        print(f"no judgment records for model {args.target!r}", file=sys.stderr)
        return 1
    examples, dropped = serialize.build_examples(rows, success_by_id, max_chars=args.max_len)
    if dropped:
        print(f"dropped {len(dropped)} oversized examples", file=sys.stderr)

    hyper = trainer.Hyper(batch_size=args.batch, learning_rate=args.lr, max_len=args.max_len)
    train_part, test_part = trainer.stratified_split(examples, hyper.split_ratio, args.seed)
    encoder = make_encoder(args.encoder, max_len=args.max_len, seed=args.seed)
    model = trainer.train_shadow(train_part, hyper, encoder, args.seed)
    report, scores = trainer.eval_shadow(
        model, test_part, target_model_id=args.target, n_dropped=len(dropped)
    )

    os.makedirs(args.out_dir, exist_ok=True)
    report_path = os.path.join(args.out_dir, "report.json")
    scores_path = os.path.join(args.out_dir, "scores.csv")
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")
    trainer.write_scores_csv(scores_path, test_part, scores)
    print(report_path)
    print(scores_path)
    print(f"auroc {report.auroc:.4f}  accuracy {report.accuracy:.4f}  "
          f"train {report.n_train}  test {report.n_test}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
