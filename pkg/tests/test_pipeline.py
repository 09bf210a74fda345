"""Staged runs: config handling, freshness checks, reports, and the CLI."""
import fcntl
import json
import subprocess
import sys

import numpy as np
import pytest

from iojudge import boosting
from iojudge.cli import main as cli_main
from iojudge.judge import read_records, sanitize_model_id
from iojudge.pipeline import (
    ConfigError,
    RunConfig,
    RunDir,
    StageError,
    build_report,
    read_labeled_csv,
    run_pipeline,
    run_stage,
    write_labeled_csv,
    write_report,
)

MODEL_ID = "mock:correct_unless_code_over:120"
MODEL_DIR = sanitize_model_id(MODEL_ID)


def _write_config(path, **overrides):
    obj = {
        "corpus_root": overrides.pop("corpus_root"),
        "fuzz_budget": 8,
        "seeds": {"fuzz": 11, "negatives": 12, "predictor": 13, "sage": 14},
        "judge": {"models": [MODEL_ID], "split": "all"},
    }
    obj.update(overrides)
    path.write_text(json.dumps(obj), encoding="utf-8")
    return path


# --- config loading ----------------------------------------------------------------


def test_config_loads_fixture(fixture_config_path, fixture_corpus_root):
    cfg = RunConfig.load(fixture_config_path)
    assert cfg.corpus_root == fixture_corpus_root.resolve()
    assert cfg.judge_models == (MODEL_ID,)
    assert cfg.judge_split == "all"
    assert cfg.predictor.n_trees == 60
    assert cfg.predictor.seed == 13  # falls back to seeds.predictor
    assert cfg.predictor_split_ratio == 0.8
    assert cfg.enabled_stages == ("corpus", "metrics", "judge", "predictor", "sage")
    assert cfg.memory_cap == 256 * 1024 * 1024


def test_config_relative_corpus_root_resolves_against_config_file(tmp_path):
    (tmp_path / "data").mkdir()
    cfg_path = _write_config(tmp_path / "cfg.json", corpus_root="data")
    cfg = RunConfig.load(cfg_path)
    assert cfg.corpus_root == (tmp_path / "data").resolve()


def test_config_rejects_unknown_key(tmp_path):
    path = _write_config(tmp_path / "cfg.json", corpus_root=".", typo_key=1)
    with pytest.raises(ConfigError, match="typo_key"):
        RunConfig.load(path)


def test_config_requires_corpus_root(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text("{}", encoding="utf-8")
    with pytest.raises(ConfigError, match="corpus_root"):
        RunConfig.load(path)


def test_config_rejects_bad_json_and_non_object(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{nope", encoding="utf-8")
    with pytest.raises(ConfigError):
        RunConfig.load(bad)
    arr = tmp_path / "arr.json"
    arr.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(ConfigError):
        RunConfig.load(arr)


def test_config_rejects_bad_split_and_budget(tmp_path):
    path = _write_config(tmp_path / "a.json", corpus_root=".", judge={"split": "weird"})
    with pytest.raises(ConfigError, match="split"):
        RunConfig.load(path)
    path = _write_config(tmp_path / "b.json", corpus_root=".", fuzz_budget=0)
    with pytest.raises(ConfigError, match="fuzz_budget"):
        RunConfig.load(path)


def test_config_rejects_unknown_predictor_key(tmp_path):
    path = _write_config(tmp_path / "cfg.json", corpus_root=".", predictor={"n_boosters": 10})
    with pytest.raises(ConfigError, match="bad config value"):
        RunConfig.load(path)


def test_config_hash_ignores_formatting(tmp_path, fixture_config_path):
    original = RunConfig.load(fixture_config_path)
    reformatted = tmp_path / "cfg.json"
    obj = json.loads(fixture_config_path.read_text(encoding="utf-8"))
    reformatted.write_text(json.dumps(obj, indent=8, sort_keys=True), encoding="utf-8")
    assert RunConfig.load(reformatted).config_hash() == original.config_hash()
    obj["fuzz_budget"] = 9
    reformatted.write_text(json.dumps(obj), encoding="utf-8")
    assert RunConfig.load(reformatted).config_hash() != original.config_hash()


def test_config_stage_flags(tmp_path):
    path = _write_config(tmp_path / "cfg.json", corpus_root=".", stages={"sage": False})
    cfg = RunConfig.load(path)
    assert "sage" not in cfg.enabled_stages
    assert "predictor" in cfg.enabled_stages


# --- labeled csv --------------------------------------------------------------------


def test_labeled_csv_round_trip(tmp_path):
    matrix = boosting.LabeledMatrix(
        ["t2", "t1"],
        np.array([[1.5, -2.0], [0.0, 0.125]]),
        np.array([0, 1]),
        ("alpha", "beta"),
    )
    path = tmp_path / "labeled.csv"
    write_labeled_csv(path, matrix)
    again = read_labeled_csv(path)
    assert again.triple_ids == matrix.triple_ids
    assert again.feature_names == matrix.feature_names
    assert np.array_equal(again.X, matrix.X)
    assert np.array_equal(again.y, matrix.y)


def test_labeled_csv_header_guard(tmp_path):
    path = tmp_path / "labeled.csv"
    path.write_text("triple_id,label,alpha\nt1,1,0.5\n", encoding="utf-8")
    with pytest.raises(ValueError):
        read_labeled_csv(path)


# --- stage state machine -------------------------------------------------------------


def test_stage_refused_without_upstream(fixture_config_path, tmp_path):
    cfg = RunConfig.load(fixture_config_path)
    rundir = RunDir(tmp_path / "fresh")
    with pytest.raises(StageError, match="no stage has produced it"):
        run_stage(cfg, rundir, "metrics")


def test_unknown_stage_is_config_error(fixture_config_path, tmp_path):
    cfg = RunConfig.load(fixture_config_path)
    with pytest.raises(ConfigError, match="unknown stage"):
        run_stage(cfg, RunDir(tmp_path), "polish")


def test_tampered_upstream_refused(fixture_config_path, copy_run):
    cfg = RunConfig.load(fixture_config_path)
    dataset = copy_run.path("dataset.jsonl")
    with open(dataset, "a", encoding="utf-8") as fh:
        fh.write("\n")
    with pytest.raises(StageError, match="but on disk"):
        run_stage(cfg, copy_run, "metrics")
    # force re-runs fresh stages; it must not bypass corruption checks
    with pytest.raises(StageError, match="but on disk"):
        run_stage(cfg, copy_run, "metrics", force=True)


def test_missing_upstream_file_refused(fixture_config_path, copy_run):
    cfg = RunConfig.load(fixture_config_path)
    copy_run.path("features.csv").unlink()
    with pytest.raises(StageError, match="missing on disk"):
        run_stage(cfg, copy_run, "predictor")


def test_rerun_is_noop(fixture_config_path, copy_run):
    cfg = RunConfig.load(fixture_config_path)
    done = run_pipeline(cfg, copy_run)
    assert done == {s: False for s in ("corpus", "metrics", "judge", "predictor", "sage")}


def test_force_redoes_work(fixture_config_path, copy_run):
    cfg = RunConfig.load(fixture_config_path)
    assert run_stage(cfg, copy_run, "corpus", force=True) is True
    assert run_stage(cfg, copy_run, "corpus") is False


def test_changed_config_refused(fixture_config_path, fixture_corpus_root, copy_run, tmp_path):
    obj = json.loads(fixture_config_path.read_text(encoding="utf-8"))
    obj["corpus_root"] = str(fixture_corpus_root.resolve())
    obj["fuzz_budget"] = 9
    other = tmp_path / "other.json"
    other.write_text(json.dumps(obj), encoding="utf-8")
    cfg = RunConfig.load(other)
    with pytest.raises(StageError, match="different config"):
        run_stage(cfg, copy_run, "corpus")


def test_interpreter_mismatch_refused(fixture_config_path, copy_run):
    cfg = RunConfig.load(fixture_config_path)
    manifest = copy_run.read_manifest()
    manifest["interpreter"] = "cpython-0.0.0"
    copy_run.write_manifest(manifest)
    with pytest.raises(StageError, match="interpreter"):
        run_stage(cfg, copy_run, "corpus")


def test_locked_run_directory_refused(fixture_config_path, copy_run):
    cfg = RunConfig.load(fixture_config_path)
    lock_path = copy_run.path(".lock")
    with open(lock_path, "w") as holder:
        fcntl.flock(holder, fcntl.LOCK_EX | fcntl.LOCK_NB)
        with pytest.raises(StageError, match="locked"):
            run_pipeline(cfg, copy_run)
    # released: now it proceeds (and no-ops)
    assert run_pipeline(cfg, copy_run) == {
        s: False for s in ("corpus", "metrics", "judge", "predictor", "sage")
    }


# --- report -------------------------------------------------------------------------


def test_report_aggregate_matches_brute_force(fixture_run):
    _, rundir = fixture_run
    records = read_records(rundir.path(f"records/{MODEL_DIR}.jsonl"))
    assert records, "fixture run produced no judgments"
    report = json.loads(rundir.path("report.json").read_text(encoding="utf-8"))
    agg = report["models"][MODEL_ID]["aggregate"]

    n_correct = sum(r.success for r in records)
    assert agg["n"] == len(records)
    assert agg["accuracy"] == pytest.approx(n_correct / len(records))
    tp = sum(1 for r in records if r.label == 1 and r.verdict == "match")
    fp = sum(1 for r in records if r.label == 0 and r.verdict == "match")
    fn = sum(1 for r in records if r.label == 1 and r.verdict != "match")
    assert agg["tp"] == tp and agg["fp"] == fp and agg["fn"] == fn
    if tp + fp:
        assert agg["precision"] == pytest.approx(tp / (tp + fp))
    if tp + fn:
        assert agg["recall"] == pytest.approx(tp / (tp + fn))


def test_report_auroc_matches_cli_recompute(fixture_run, capsys):
    _, rundir = fixture_run
    summary = json.loads(
        rundir.path(f"predictor/{MODEL_DIR}/summary.json").read_text(encoding="utf-8")
    )
    scores_path = rundir.path(f"predictor/{MODEL_DIR}/scores_test.csv")
    assert cli_main(["auroc", "--scores", str(scores_path)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["auroc"] == pytest.approx(summary["auroc_full"], abs=1e-9)
    assert out["n"] == out["n_pos"] + out["n_neg"]


def test_report_shadow_not_run(fixture_run):
    _, rundir = fixture_run
    md = rundir.path("report.md").read_text(encoding="utf-8")
    assert "## Shadow predictor" in md
    assert "not run" in md


def test_report_shadow_table_when_present(copy_run):
    shadow_dir = copy_run.path("shadow/demo")
    shadow_dir.mkdir(parents=True)
    (shadow_dir / "report.json").write_text(
        json.dumps(
            {
                "target_model_id": "demo-model",
                "auroc": 0.875,
                "accuracy": 0.8125,
                "n_train": 100,
                "n_test": 40,
            }
        ),
        encoding="utf-8",
    )
    write_report(copy_run)
    md = copy_run.path("report.md").read_text(encoding="utf-8")
    assert "| demo-model | 0.8750 | 0.8125 | 100 | 40 |" in md
    report = json.loads(copy_run.path("report.json").read_text(encoding="utf-8"))
    assert "demo-model" in report["shadow"]


def test_report_requires_judge_stage(tmp_path):
    with pytest.raises(StageError, match="judge"):
        build_report(RunDir(tmp_path / "empty"))


def test_report_lists_sage_top_features(fixture_run):
    _, rundir = fixture_run
    report = json.loads(rundir.path("report.json").read_text(encoding="utf-8"))
    entry = report["models"][MODEL_ID]
    assert entry["sage"]["top"], "expected ranked SAGE values in the report"
    values = [v["value"] for v in entry["sage"]["top"]]
    assert values == sorted(values, reverse=True)
    md = rundir.path("report.md").read_text(encoding="utf-8")
    assert f"## Top features by SAGE value: {MODEL_ID}" in md


# --- cli ----------------------------------------------------------------------------


def test_cli_bad_config_exits_2(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"corpus_root": ".", "typo": 1}), encoding="utf-8")
    proc = subprocess.run(
        [sys.executable, "-m", "iojudge.cli", "pipeline", "run", "--config", str(cfg), "--run-dir", str(tmp_path / "run")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 2
    assert "config error" in proc.stderr


def test_cli_auroc_frozen_case(tmp_path, capsys):
    path = tmp_path / "scores.csv"
    boosting.write_scores_csv(path, [("a", 0.9, 1), ("b", 0.8, 0), ("c", 0.3, 1)])
    assert cli_main(["auroc", "--scores", str(path)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out == {"auroc": 0.5, "n": 3, "n_pos": 2, "n_neg": 1}


def test_cli_judge_run_and_report_mock(fixture_run, tmp_path, capsys):
    _, rundir = fixture_run
    dataset = rundir.path("dataset.jsonl")
    assert cli_main(["judge", "run", "--dataset", str(dataset), "--model", "mock:always:yes", "--out", str(tmp_path)]) == 0
    out_path = tmp_path / "mock_always_yes.jsonl"
    assert out_path.exists()
    records = read_records(out_path)
    assert records and all(r.verdict == "match" for r in records)
    capsys.readouterr()
    assert cli_main(["judge", "report", "--records", str(out_path)]) == 0
    agg = json.loads(capsys.readouterr().out)
    assert agg["recall"] == 1.0  # always-yes never misses a positive
    assert agg["n"] == len(records)


def test_cli_judge_split_needs_manifest(fixture_run, tmp_path):
    _, rundir = fixture_run
    rc = cli_main(
        ["judge", "run", "--dataset", str(rundir.path("dataset.jsonl")), "--model", "mock:always:yes", "--out", str(tmp_path), "--split", "eval"]
    )
    assert rc == 2


def test_cli_judge_eval_split_filters(fixture_run, tmp_path):
    _, rundir = fixture_run
    split = json.loads(rundir.path("split.json").read_text(encoding="utf-8"))
    rc = cli_main(
        [
            "judge", "run",
            "--dataset", str(rundir.path("dataset.jsonl")),
            "--model", "mock:always:yes",
            "--out", str(tmp_path),
            "--split", "eval",
            "--split-manifest", str(rundir.path("split.json")),
        ]
    )
    assert rc == 0
    records = read_records(tmp_path / "mock_always_yes.jsonl")
    full = read_records(rundir.path(f"records/{MODEL_DIR}.jsonl"))
    assert 0 < len(records) < len(full)
    assert split["eval_problems"], "fixture split has no eval problems"


def test_cli_predict_scores_features(fixture_run, tmp_path):
    _, rundir = fixture_run
    out = tmp_path / "scores.csv"
    rc = cli_main(
        [
            "predict",
            "--model", str(rundir.path(f"predictor/{MODEL_DIR}/model_full.json")),
            "--data", str(rundir.path("features.csv")),
            "--out", str(out),
        ]
    )
    assert rc == 0
    lines = out.read_text(encoding="utf-8").strip().splitlines()
    assert lines[0] == "triple_id,score"
    assert len(lines) > 1
    for line in lines[1:]:
        score = float(line.split(",")[1])
        assert 0.0 <= score <= 1.0


def test_cli_sage_run_writes_pruned_subset(tmp_path, capsys):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(60, 3))
    y = (X[:, 0] > 0).astype(int)
    matrix = boosting.LabeledMatrix(
        [f"t{i:03d}" for i in range(60)], X, y, ("a", "b", "c")
    )
    model = boosting.train(matrix, boosting.BoostingConfig(n_trees=10, max_depth=2, min_samples_leaf=5, seed=0))
    model_path = tmp_path / "model.json"
    model_path.write_text(model.to_json(), encoding="utf-8")
    data_path = tmp_path / "labeled.csv"
    write_labeled_csv(data_path, matrix)
    rc = cli_main(
        [
            "sage", "run",
            "--model", str(model_path),
            "--data", str(data_path),
            "--perms", "8",
            "--background", "8",
            "--out-dir", str(tmp_path / "out"),
        ]
    )
    assert rc == 0
    capsys.readouterr()
    report = json.loads((tmp_path / "out" / "sage_report.json").read_text(encoding="utf-8"))
    pruned = json.loads((tmp_path / "out" / "sage_pruned.json").read_text(encoding="utf-8"))
    assert {v["name"] for v in report["values"]} == {"a", "b", "c"}
    assert "a" in pruned["retained"]
    assert (tmp_path / "out" / "sage_top.md").exists()


def test_cli_sage_run_degenerate_model_exits_1(tmp_path, capsys):
    # a treeless model scores every row identically; no feature carries mass
    matrix = boosting.LabeledMatrix(
        ["t0", "t1", "t2", "t3"],
        np.array([[0.0], [1.0], [2.0], [3.0]]),
        np.array([0, 1, 0, 1]),
        ("a",),
    )
    model = boosting.TreeEnsembleModel([], 0.1, 0.0, ("a",))
    model_path = tmp_path / "model.json"
    model_path.write_text(model.to_json(), encoding="utf-8")
    data_path = tmp_path / "labeled.csv"
    write_labeled_csv(data_path, matrix)
    rc = cli_main(
        [
            "sage", "run",
            "--model", str(model_path),
            "--data", str(data_path),
            "--perms", "4",
            "--background", "4",
            "--out-dir", str(tmp_path / "out"),
        ]
    )
    assert rc == 1
    capsys.readouterr()
    # the importance report itself still landed before the pruning failure
    assert (tmp_path / "out" / "sage_report.json").exists()
    assert not (tmp_path / "out" / "sage_pruned.json").exists()


def test_cli_pipeline_report_on_copy(copy_run, capsys):
    assert cli_main(["pipeline", "report", "--run", str(copy_run.root)]) == 0
    printed = capsys.readouterr().out.strip().splitlines()
    assert printed[0].endswith("report.json")
    assert printed[1].endswith("report.md")
