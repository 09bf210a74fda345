"""Command line entry points.

Exit codes: 0 success, 1 stage or runtime failure, 2 bad configuration or
bad arguments.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import boosting, judge as judge_mod, sage as sage_mod
from .corpus import SplitManifest, read_dataset
from .pipeline import (
    ConfigError,
    RunConfig,
    RunDir,
    StageError,
    read_labeled_csv,
    run_pipeline,
    write_report,
)
from .sidecar_script import main as sidecar_main
from .util import canonical_json, write_text_atomic


def _cmd_pipeline_run(args: argparse.Namespace) -> int:
    cfg = RunConfig.load(args.config)
    done = run_pipeline(cfg, RunDir(args.run_dir), only_stage=args.stage, force=args.force)
    for stage, ran in done.items():
        print(f"{stage}: {'ran' if ran else 'up to date'}")
    return 0


def _cmd_pipeline_report(args: argparse.Namespace) -> int:
    json_path, md_path = write_report(RunDir(args.run))
    print(json_path)
    print(md_path)
    return 0


def _cmd_judge_run(args: argparse.Namespace) -> int:
    triples = read_dataset(args.dataset)
    if args.split != "all":
        if not args.split_manifest:
            raise ConfigError("--split eval/train needs --split-manifest")
        split = SplitManifest.from_json(Path(args.split_manifest).read_text(encoding="utf-8"))
        pool = split.eval_problems if args.split == "eval" else split.train_problems
        triples = [t for t in triples if t.program.problem_id in pool]
    if args.model.startswith(judge_mod.MOCK_PREFIX):
        client = None
        cache = None
    else:
        if not args.endpoint:
            raise ConfigError(f"model {args.model} needs --endpoint")
        client = judge_mod.ChatClient(args.endpoint, api_key_env=args.api_key_env)
        cache = judge_mod.JudgmentCache(Path(args.out) / "cache")
    records = judge_mod.run_judgments(
        triples, args.model, client=client, cache=cache, concurrency=args.concurrency
    )
    out = Path(args.out) / f"{judge_mod.sanitize_model_id(args.model)}.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    judge_mod.write_records(out, records)
    print(out)
    return 0


def _cmd_judge_report(args: argparse.Namespace) -> int:
    records = judge_mod.read_records(args.records)
    agg = judge_mod.aggregate(records)
    print(canonical_json(agg.to_dict()))
    return 0


def _read_scorable(path: str) -> tuple[list[str], list[str], np.ndarray, np.ndarray | None]:
    """Read a feature or labeled CSV: ids, feature names, X, optional labels."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header[0] != "triple_id":
            raise ConfigError("data file must have a triple_id first column")
        has_labels = len(header) > 1 and header[1] == "success"
        names = header[2:] if has_labels else header[1:]
        ids, rows, labels = [], [], []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            ids.append(parts[0])
            if has_labels:
                labels.append(int(parts[1]))
                rows.append([float(v) for v in parts[2:]])
            else:
                rows.append([float(v) for v in parts[1:]])
    X = np.asarray(rows, dtype=np.float64)
    return ids, names, X, (np.asarray(labels) if has_labels else None)


def _cmd_predict(args: argparse.Namespace) -> int:
    model = boosting.TreeEnsembleModel.from_json(Path(args.model).read_text(encoding="utf-8"))
    ids, names, X, labels = _read_scorable(args.data)
    try:
        cols = [names.index(n) for n in model.feature_names]
    except ValueError as exc:
        raise ConfigError(f"data file lacks a feature the model needs: {exc}") from exc
    scores = model.predict_proba(X[:, cols]) if len(ids) else np.zeros(0)
    lines = ["triple_id,score,label" if labels is not None else "triple_id,score"]
    for i, tid in enumerate(ids):
        row = f"{tid},{repr(float(scores[i]))}"
        if labels is not None:
            row += f",{int(labels[i])}"
        lines.append(row)
    write_text_atomic(args.out, "\n".join(lines) + "\n")
    print(args.out)
    return 0


def _cmd_sage_run(args: argparse.Namespace) -> int:
    model = boosting.TreeEnsembleModel.from_json(Path(args.model).read_text(encoding="utf-8"))
    matrix = read_labeled_csv(args.data)
    if tuple(model.feature_names) != tuple(matrix.feature_names):
        raise ConfigError("model and data disagree on feature names")
    background = sage_mod.draw_background(matrix, args.background, args.seed)
    report = sage_mod.estimate_sage(model, matrix, background, args.perms, args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_text_atomic(out_dir / "sage_report.json", report.to_json() + "\n")
    write_text_atomic(out_dir / "sage_top.md", sage_mod.render_top_k_table(report, args.top_k))
    print(out_dir / "sage_report.json")
    print(out_dir / "sage_top.md")
    subset = sage_mod.prune_by_positive_mass(report, args.threshold)
    write_text_atomic(
        out_dir / "sage_pruned.json",
        canonical_json(
            {
                "retained": list(subset.retained),
                "covered_mass": subset.covered_mass,
                "total_positive_mass": subset.total_positive_mass,
                "threshold": subset.threshold,
            }
        )
        + "\n",
    )
    print(out_dir / "sage_pruned.json")
    return 0


def _cmd_auroc(args: argparse.Namespace) -> int:
    rows = boosting.read_scores_csv(args.scores)
    scores = np.asarray([r[1] for r in rows])
    labels = np.asarray([r[2] for r in rows])
    value = boosting.auroc(scores, labels)
    print(
        canonical_json(
            {
                "auroc": value,
                "n": len(rows),
                "n_pos": int(labels.sum()),
                "n_neg": int((1 - labels).sum()),
            }
        )
    )
    return 0


def _cmd_sidecar(_args: argparse.Namespace) -> int:
    sidecar_main()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="iojudge")
    sub = parser.add_subparsers(dest="command", required=True)

    p_pipe = sub.add_parser("pipeline", help="staged runs over a corpus")
    pipe_sub = p_pipe.add_subparsers(dest="pipeline_command", required=True)
    p_run = pipe_sub.add_parser("run", help="run the enabled stages")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--run-dir", required=True)
    p_run.add_argument("--stage", choices=["corpus", "metrics", "judge", "predictor", "sage"])
    p_run.add_argument("--force", action="store_true", help="re-run even if artifacts are fresh")
    p_run.set_defaults(func=_cmd_pipeline_run)
    p_rep = pipe_sub.add_parser("report", help="write report.json and report.md")
    p_rep.add_argument("--run", required=True)
    p_rep.set_defaults(func=_cmd_pipeline_report)

    p_judge = sub.add_parser("judge", help="query a judge model over a dataset")
    judge_sub = p_judge.add_subparsers(dest="judge_command", required=True)
    p_jrun = judge_sub.add_parser("run")
    p_jrun.add_argument("--dataset", required=True)
    p_jrun.add_argument("--model", required=True)
    p_jrun.add_argument("--out", required=True)
    p_jrun.add_argument("--endpoint")
    p_jrun.add_argument("--api-key-env", default="IOJUDGE_API_KEY")
    p_jrun.add_argument("--concurrency", type=int, default=8)
    p_jrun.add_argument("--split", choices=["eval", "train", "all"], default="all")
    p_jrun.add_argument("--split-manifest")
    p_jrun.set_defaults(func=_cmd_judge_run)
    p_jrep = judge_sub.add_parser("report")
    p_jrep.add_argument("--records", required=True)
    p_jrep.set_defaults(func=_cmd_judge_report)

    p_predict = sub.add_parser("predict", help="score a feature matrix with a trained model")
    p_predict.add_argument("--model", required=True)
    p_predict.add_argument("--data", required=True)
    p_predict.add_argument("--out", required=True)
    p_predict.set_defaults(func=_cmd_predict)

    p_sage = sub.add_parser("sage", help="feature importance for a trained model")
    sage_sub = p_sage.add_subparsers(dest="sage_command", required=True)
    p_srun = sage_sub.add_parser("run")
    p_srun.add_argument("--model", required=True)
    p_srun.add_argument("--data", required=True, help="labeled csv (triple_id,success,features...)")
    p_srun.add_argument("--perms", type=int, default=512)
    p_srun.add_argument("--background", type=int, default=128)
    p_srun.add_argument("--seed", type=int, default=0)
    p_srun.add_argument("--threshold", type=float, default=0.95)
    p_srun.add_argument("--top-k", type=int, default=20)
    p_srun.add_argument("--out-dir", default=".")
    p_srun.set_defaults(func=_cmd_sage_run)

    p_auroc = sub.add_parser("auroc", help="AUROC of a scores csv (triple_id,score,label)")
    p_auroc.add_argument("--scores", required=True)
    p_auroc.set_defaults(func=_cmd_auroc)

    p_side = sub.add_parser("sidecar", help="run the execution sidecar loop on stdio")
    p_side.set_defaults(func=_cmd_sidecar)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (StageError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
