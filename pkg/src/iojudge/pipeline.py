"""Deterministic staged pipeline: corpus -> metrics -> judge -> predictor -> sage.

Each stage writes its artifacts atomically (temp file + rename) into one run
directory and records their content hashes in the run manifest. A stage is
complete exactly when its artifacts hash to the manifest values; re-running a
complete stage with fresh upstream inputs is a no-op, a tampered upstream is
refused with the hash diff, and a changed config refuses the whole directory.
Two runs of the same config over the same corpus produce byte-identical
artifacts (the manifest carries timestamps and is the one exception).
"""
from __future__ import annotations

import datetime
import fcntl
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import boosting, judge as judge_mod, sage as sage_mod
from .corpus import (
    SplitManifest,
    build_corpus,
    discover_programs,
    read_dataset,
    write_dataset,
)
from .features import (
    FeatureCatalog,
    build_catalog,
    extract_all,
    read_feature_matrix,
    write_feature_matrix,
)
from .sidecar import DisassemblyError, SidecarSession
from .util import (
    canonical_json,
    pretty_json,
    read_jsonl,
    sha256_file,
    sha256_text,
    write_text_atomic,
)

STAGES = ("corpus", "metrics", "judge", "predictor", "sage")


class ConfigError(ValueError):
    """Bad or inconsistent run configuration (CLI exit code 2)."""


class StageError(RuntimeError):
    """A stage could not run or failed (CLI exit code 1)."""


def _interp_version() -> str:
    return "%d.%d" % sys.version_info[:2]


@dataclass(frozen=True)
class RunConfig:
    corpus_root: Path
    fuzz_budget: int = 6
    workers: int = 1
    timeout: float = 5.0
    memory_cap: int = 256 * 1024 * 1024
    code_limit: int = 5000
    input_limit: int = 500
    output_limit: int = 500
    seeds: dict = field(default_factory=lambda: {"fuzz": 0, "negatives": 0, "predictor": 0, "sage": 0})
    judge_models: tuple[str, ...] = ()
    judge_endpoint: str | None = None
    judge_api_key_env: str = "IOJUDGE_API_KEY"
    judge_concurrency: int = 8
    judge_request_timeout: float = 60.0
    judge_split: str = "eval"
    predictor: boosting.BoostingConfig = field(default_factory=boosting.BoostingConfig)
    predictor_split_ratio: float = 0.8
    sage_n_permutations: int = 512
    sage_background_size: int = 128
    sage_threshold: float = 0.95
    sage_top_k: int = 20
    enabled_stages: tuple[str, ...] = STAGES
    raw_text: str = ""

    _TOP_KEYS = {
        "corpus_root",
        "fuzz_budget",
        "workers",
        "execution",
        "limits",
        "seeds",
        "judge",
        "predictor",
        "sage",
        "stages",
    }

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
            obj = json.loads(text)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(obj) - cls._TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "corpus_root" not in obj:
            raise ConfigError("config requires corpus_root")

        execution = obj.get("execution", {})
        limits = obj.get("limits", {})
        seeds = {"fuzz": 0, "negatives": 0, "predictor": 0, "sage": 0}
        seeds.update(obj.get("seeds", {}))
        judge_cfg = obj.get("judge", {})
        predictor_cfg = dict(obj.get("predictor", {}))
        split_ratio = predictor_cfg.pop("split_ratio", 0.8)
        predictor_cfg.setdefault("seed", seeds["predictor"])
        sage_cfg = obj.get("sage", {})
        stage_flags = obj.get("stages", {})
        enabled = tuple(s for s in STAGES if stage_flags.get(s, True))

        try:
            cfg = cls(
                corpus_root=(path.parent / obj["corpus_root"]).resolve(),
                fuzz_budget=int(obj.get("fuzz_budget", 6)),
                workers=int(obj.get("workers", 1)),
                timeout=float(execution.get("timeout", 5.0)),
                memory_cap=int(execution.get("memory_cap_mib", 256)) * 1024 * 1024,
                code_limit=int(limits.get("code", 5000)),
                input_limit=int(limits.get("input", 500)),
                output_limit=int(limits.get("output", 500)),
                seeds=seeds,
                judge_models=tuple(judge_cfg.get("models", [])),
                judge_endpoint=judge_cfg.get("endpoint"),
                judge_api_key_env=judge_cfg.get("api_key_env", "IOJUDGE_API_KEY"),
                judge_concurrency=int(judge_cfg.get("concurrency", 8)),
                judge_request_timeout=float(judge_cfg.get("request_timeout", 60.0)),
                judge_split=judge_cfg.get("split", "eval"),
                predictor=boosting.BoostingConfig(**predictor_cfg),
                predictor_split_ratio=float(split_ratio),
                sage_n_permutations=int(sage_cfg.get("n_permutations", 512)),
                sage_background_size=int(sage_cfg.get("background_size", 128)),
                sage_threshold=float(sage_cfg.get("threshold", 0.95)),
                sage_top_k=int(sage_cfg.get("top_k", 20)),
                enabled_stages=enabled,
                raw_text=text,
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad config value: {exc}") from exc
        if cfg.judge_split not in ("eval", "train", "all"):
            raise ConfigError("judge.split must be eval, train, or all")
        if cfg.fuzz_budget < 1:
            raise ConfigError("fuzz_budget must be >= 1")
        return cfg

    def config_hash(self) -> str:
        return sha256_text(canonical_json(json.loads(self.raw_text or "{}")))


# --- run directory and manifest ----------------------------------------------


class RunDir:
    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)

    def path(self, rel: str) -> Path:
        return self.root / rel

    def manifest_path(self) -> Path:
        return self.root / "manifest.json"

    def read_manifest(self) -> dict:
        if not self.manifest_path().exists():
            return {}
        return json.loads(self.manifest_path().read_text(encoding="utf-8"))

    def write_manifest(self, manifest: dict) -> None:
        write_text_atomic(self.manifest_path(), pretty_json(manifest))


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _stage_artifacts_fresh(rundir: RunDir, manifest: dict, stage: str) -> bool:
    entry = manifest.get("stages", {}).get(stage)
    if not entry:
        return False
    for rel, expected in entry["artifacts"].items():
        p = rundir.path(rel)
        if not p.exists() or sha256_file(p) != expected:
            return False
    return True


def _check_upstream(rundir: RunDir, manifest: dict, stage: str, input_rels: list[str]) -> dict:
    """All inputs must exist and hash to what their producing stage recorded."""
    produced_by: dict[str, str] = {}
    for s, entry in manifest.get("stages", {}).items():
        for rel in entry["artifacts"]:
            produced_by[rel] = s
    current: dict[str, str] = {}
    problems = []
    for rel in input_rels:
        p = rundir.path(rel)
        if rel not in produced_by:
            problems.append(f"{rel}: no stage has produced it (run its stage first)")
            continue
        if not p.exists():
            problems.append(f"{rel}: missing on disk")
            continue
        actual = sha256_file(p)
        expected = manifest["stages"][produced_by[rel]]["artifacts"][rel]
        if actual != expected:
            problems.append(f"{rel}: manifest {expected[:12]}.. but on disk {actual[:12]}..")
            continue
        current[rel] = actual
    if problems:
        raise StageError(f"stage {stage}: stale or missing inputs:\n  " + "\n  ".join(problems))
    return current


# --- stage bodies -------------------------------------------------------------


def _sidecar_factory(cfg: RunConfig):
    def make() -> SidecarSession:
        return SidecarSession(timeout=cfg.timeout, memory_cap=cfg.memory_cap)

    return make


def _stage_corpus(cfg: RunConfig, rundir: RunDir) -> list[str]:
    programs = discover_programs(cfg.corpus_root)
    if not programs:
        raise StageError(f"no programs found under {cfg.corpus_root}")
    triples, split, log = build_corpus(
        programs,
        fuzz_budget=cfg.fuzz_budget,
        fuzz_seed=cfg.seeds["fuzz"],
        negative_seed=cfg.seeds["negatives"],
        sidecar_factory=_sidecar_factory(cfg),
        workers=cfg.workers,
        code_limit=cfg.code_limit,
        input_limit=cfg.input_limit,
        output_limit=cfg.output_limit,
    )
    write_dataset(rundir.path("dataset.jsonl"), triples)
    write_text_atomic(rundir.path("split.json"), split.to_json() + "\n")
    log_obj = log.to_dict()
    log_obj["counts"] = {
        "n_triples": len(triples),
        "n_positives": sum(t.label for t in triples),
        "n_negatives": sum(1 - t.label for t in triples),
        "n_problems": len(split.ordering),
    }
    write_text_atomic(rundir.path("corpus_log.json"), pretty_json(log_obj))
    return ["dataset.jsonl", "split.json", "corpus_log.json"]


def _stage_metrics(cfg: RunConfig, rundir: RunDir) -> list[str]:
    triples = read_dataset(rundir.path("dataset.jsonl"))
    split = SplitManifest.from_json(rundir.path("split.json").read_text(encoding="utf-8"))
    opcode_cache: dict = {}
    # allow_run=False: this stage must never execute corpus code, only parse it.
    with SidecarSession(timeout=cfg.timeout, memory_cap=cfg.memory_cap, allow_run=False) as session:
        train_codes = sorted(
            {t.program.source for t in triples if t.program.problem_id in split.train_problems}
        )
        seq_by_code = {}
        for code in train_codes:
            try:
                seq_by_code[code] = session.disassemble(code)
            except DisassemblyError:
                seq_by_code[code] = None
        catalog = build_catalog(train_codes, seq_by_code, _interp_version())
        rows = []
        for t in sorted(triples, key=lambda t: t.triple_id):
            rows.append((t.triple_id, extract_all(t, session, catalog, opcode_cache)))
    write_text_atomic(rundir.path("catalog.json"), catalog.to_json())
    write_feature_matrix(rundir.path("features.csv"), catalog, rows)
    return ["catalog.json", "features.csv"]


def _select_judged(triples, split: SplitManifest, which: str):
    if which == "all":
        return triples
    pool = split.eval_problems if which == "eval" else split.train_problems
    return [t for t in triples if t.program.problem_id in pool]


def _stage_judge(cfg: RunConfig, rundir: RunDir) -> list[str]:
    if not cfg.judge_models:
        raise StageError("judge stage enabled but judge.models is empty")
    triples = read_dataset(rundir.path("dataset.jsonl"))
    split = SplitManifest.from_json(rundir.path("split.json").read_text(encoding="utf-8"))
    judged = _select_judged(triples, split, cfg.judge_split)
    artifacts = []
    for model_id in cfg.judge_models:
        if model_id.startswith(judge_mod.MOCK_PREFIX):
            client = None
            cache = None
        else:
            if not cfg.judge_endpoint:
                raise StageError(f"model {model_id} needs judge.endpoint")
            client = judge_mod.ChatClient(
                cfg.judge_endpoint,
                api_key_env=cfg.judge_api_key_env,
                request_timeout=cfg.judge_request_timeout,
            )
            cache = judge_mod.JudgmentCache(rundir.path("judge_cache"))
        records = judge_mod.run_judgments(
            judged, model_id, client=client, cache=cache, concurrency=cfg.judge_concurrency
        )
        rel = f"records/{judge_mod.sanitize_model_id(model_id)}.jsonl"
        judge_mod.write_records(rundir.path(rel), records)
        artifacts.append(rel)
    return artifacts


def _load_labeled_matrix(rundir: RunDir, catalog: FeatureCatalog, records) -> boosting.LabeledMatrix:
    feature_rows = {tid: vec for tid, vec in read_feature_matrix(rundir.path("features.csv"), catalog)}
    ids, X, y = [], [], []
    for r in records:
        vec = feature_rows.get(r.triple_id)
        if vec is None:
            continue
        ids.append(r.triple_id)
        X.append(vec)
        y.append(r.success)
    if not ids:
        raise StageError("no overlap between judged records and the feature matrix")
    return boosting.LabeledMatrix(ids, np.vstack(X), np.asarray(y), catalog.names)


def write_labeled_csv(path, matrix: boosting.LabeledMatrix) -> None:
    lines = ["triple_id,success," + ",".join(matrix.feature_names)]
    for i, tid in enumerate(matrix.triple_ids):
        lines.append(
            f"{tid},{int(matrix.y[i])}," + ",".join(repr(float(v)) for v in matrix.X[i])
        )
    write_text_atomic(path, "\n".join(lines) + "\n")


def read_labeled_csv(path) -> boosting.LabeledMatrix:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header[:2] != ["triple_id", "success"]:
            raise ValueError("labeled csv must start with triple_id,success")
        names = header[2:]
        ids, X, y = [], [], []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            ids.append(parts[0])
            y.append(int(parts[1]))
            X.append([float(v) for v in parts[2:]])
    return boosting.LabeledMatrix(ids, np.asarray(X), np.asarray(y), tuple(names))


def _model_rel(kind: str, model_id: str, name: str) -> str:
    return f"{kind}/{judge_mod.sanitize_model_id(model_id)}/{name}"


def _stage_predictor(cfg: RunConfig, rundir: RunDir) -> list[str]:
    catalog = FeatureCatalog.from_json(rundir.path("catalog.json").read_text(encoding="utf-8"))
    artifacts = []
    for model_id in cfg.judge_models:
        records = judge_mod.read_records(
            rundir.path(f"records/{judge_mod.sanitize_model_id(model_id)}.jsonl")
        )
        matrix = _load_labeled_matrix(rundir, catalog, records)
        labeled_rel = _model_rel("predictor", model_id, "labeled.csv")
        write_labeled_csv(rundir.path(labeled_rel), matrix)

        train_part, test_part = boosting.stratified_split(
            matrix, cfg.predictor_split_ratio, cfg.seeds["predictor"]
        )
        model = boosting.train(train_part, cfg.predictor)
        scores = model.predict_proba(test_part.X)
        try:
            auroc_full = boosting.auroc(scores, test_part.y)
        except ValueError:
            auroc_full = None
        model_rel = _model_rel("predictor", model_id, "model_full.json")
        write_text_atomic(rundir.path(model_rel), model.to_json() + "\n")
        scores_rel = _model_rel("predictor", model_id, "scores_test.csv")
        boosting.write_scores_csv(
            rundir.path(scores_rel),
            [(test_part.triple_ids[i], float(scores[i]), int(test_part.y[i])) for i in range(len(test_part))],
        )
        summary_rel = _model_rel("predictor", model_id, "summary.json")
        write_text_atomic(
            rundir.path(summary_rel),
            pretty_json(
                {
                    "model_id": model_id,
                    "auroc_full": auroc_full,
                    "n_rows": len(matrix),
                    "n_train": len(train_part),
                    "n_test": len(test_part),
                    "base_rate": float(matrix.y.mean()),
                    "degenerate": model.degenerate,
                }
            ),
        )
        artifacts.extend([labeled_rel, model_rel, scores_rel, summary_rel])
    return artifacts


def _stage_sage(cfg: RunConfig, rundir: RunDir) -> list[str]:
    artifacts = []
    for model_id in cfg.judge_models:
        matrix = read_labeled_csv(rundir.path(_model_rel("predictor", model_id, "labeled.csv")))
        model = boosting.TreeEnsembleModel.from_json(
            rundir.path(_model_rel("predictor", model_id, "model_full.json")).read_text(encoding="utf-8")
        )
        train_part, test_part = boosting.stratified_split(
            matrix, cfg.predictor_split_ratio, cfg.seeds["predictor"]
        )
        background = sage_mod.draw_background(train_part, cfg.sage_background_size, cfg.seeds["sage"])
        report = sage_mod.estimate_sage(
            model, test_part, background, cfg.sage_n_permutations, cfg.seeds["sage"]
        )
        sage_rel = _model_rel("sage", model_id, "sage.json")
        write_text_atomic(rundir.path(sage_rel), report.to_json() + "\n")
        table_rel = _model_rel("sage", model_id, "sage_top.md")
        write_text_atomic(rundir.path(table_rel), sage_mod.render_top_k_table(report, cfg.sage_top_k))

        try:
            subset = sage_mod.prune_by_positive_mass(report, cfg.sage_threshold)
        except ValueError as exc:
            raise StageError(f"sage stage: pruning failed for {model_id}: {exc}") from exc
        pruned_model = boosting.train(train_part.subset_columns(subset.retained), cfg.predictor)
        pruned_rel = _model_rel("sage", model_id, "model_pruned.json")
        write_text_atomic(rundir.path(pruned_rel), pruned_model.to_json() + "\n")

        test_pruned = test_part.subset_columns(subset.retained)
        try:
            auroc_full = boosting.auroc(model.predict_proba(test_part.X), test_part.y)
            auroc_pruned = boosting.auroc(pruned_model.predict_proba(test_pruned.X), test_pruned.y)
        except ValueError:
            auroc_full = None
            auroc_pruned = None
        cmp_rel = _model_rel("sage", model_id, "comparison.json")
        write_text_atomic(
            rundir.path(cmp_rel),
            pretty_json(
                {
                    "model_id": model_id,
                    "auroc_full": auroc_full,
                    "auroc_pruned": auroc_pruned,
                    "retained": list(subset.retained),
                    "retained_count": len(subset.retained),
                    "retained_fraction": len(subset.retained) / len(matrix.feature_names),
                    "covered_mass": subset.covered_mass,
                    "total_positive_mass": subset.total_positive_mass,
                    "threshold": subset.threshold,
                }
            ),
        )
        artifacts.extend([sage_rel, table_rel, pruned_rel, cmp_rel])
    return artifacts


_STAGE_BODIES = {
    "corpus": (_stage_corpus, []),
    "metrics": (_stage_metrics, ["dataset.jsonl", "split.json"]),
    "judge": (_stage_judge, ["dataset.jsonl", "split.json"]),
    "predictor": (_stage_predictor, ["features.csv", "catalog.json"]),
    "sage": (_stage_sage, []),
}


def _stage_inputs(cfg: RunConfig, stage: str) -> list[str]:
    _, inputs = _STAGE_BODIES[stage]
    inputs = list(inputs)
    if stage == "predictor":
        inputs += [f"records/{judge_mod.sanitize_model_id(m)}.jsonl" for m in cfg.judge_models]
    if stage == "sage":
        for m in cfg.judge_models:
            inputs += [_model_rel("predictor", m, "labeled.csv"), _model_rel("predictor", m, "model_full.json")]
    return inputs


def run_stage(cfg: RunConfig, rundir: RunDir, stage: str, force: bool = False) -> bool:
    """Run one stage if needed. Returns True if work was done, False on no-op."""
    if stage not in STAGES:
        raise ConfigError(f"unknown stage: {stage}")
    manifest = rundir.read_manifest()
    if manifest:
        if manifest.get("config_hash") != cfg.config_hash():
            raise StageError(
                "run directory was created with a different config; use a fresh directory"
            )
        if manifest.get("interpreter") != _interp_version():
            raise StageError(
                f"run directory was built with interpreter {manifest.get('interpreter')}, "
                f"current is {_interp_version()}"
            )
    else:
        manifest = {
            "config_hash": cfg.config_hash(),
            "interpreter": _interp_version(),
            "created_at": _now(),
            "stages": {},
        }
        rundir.root.mkdir(parents=True, exist_ok=True)
        write_text_atomic(rundir.path("config.json"), cfg.raw_text)
        rundir.write_manifest(manifest)

    input_rels = _stage_inputs(cfg, stage)
    consumed = _check_upstream(rundir, manifest, stage, input_rels)

    entry = manifest.get("stages", {}).get(stage)
    if (
        not force
        and entry
        and entry.get("inputs") == consumed
        and _stage_artifacts_fresh(rundir, manifest, stage)
    ):
        return False  # complete and fresh: no-op

    body, _ = _STAGE_BODIES[stage]
    artifact_rels = body(cfg, rundir)
    manifest.setdefault("stages", {})[stage] = {
        "artifacts": {rel: sha256_file(rundir.path(rel)) for rel in artifact_rels},
        "inputs": consumed,
        "completed_at": _now(),
    }
    rundir.write_manifest(manifest)
    return True


def run_pipeline(cfg: RunConfig, rundir: RunDir, only_stage: str | None = None, force: bool = False) -> dict:
    """Run the enabled stages in DAG order under an exclusive directory lock."""
    rundir.root.mkdir(parents=True, exist_ok=True)
    lock_path = rundir.path(".lock")
    with open(lock_path, "w") as lock_file:
        try:
            fcntl.flock(lock_file, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError as exc:
            raise StageError(f"run directory is locked by another process: {exc}") from exc
        done = {}
        stages = [only_stage] if only_stage else [s for s in STAGES if s in cfg.enabled_stages]
        for stage in stages:
            if stage == "judge" and not cfg.judge_models:
                continue
            done[stage] = run_stage(cfg, rundir, stage, force=force)
        return done


# --- report -------------------------------------------------------------------


def _fmt(x, digits: int = 4) -> str:
    if x is None:
        return "n/a"
    return f"{x:.{digits}f}"


def build_report(rundir: RunDir) -> dict:
    """Assemble the run report purely from on-disk JSON artifacts."""
    manifest = rundir.read_manifest()
    if not manifest.get("stages", {}).get("judge"):
        raise StageError("report needs at least the judge stage to have run")
    models = {}
    records_dir = rundir.path("records")
    for records_file in sorted(records_dir.glob("*.jsonl")):
        records = judge_mod.read_records(records_file)
        if not records:
            continue
        model_id = records[0].model_id
        agg = judge_mod.aggregate(records)
        entry: dict = {"aggregate": agg.to_dict()}
        summary_path = rundir.path(_model_rel("predictor", model_id, "summary.json"))
        if summary_path.exists():
            entry["predictor"] = json.loads(summary_path.read_text(encoding="utf-8"))
        cmp_path = rundir.path(_model_rel("sage", model_id, "comparison.json"))
        if cmp_path.exists():
            entry["sage"] = json.loads(cmp_path.read_text(encoding="utf-8"))
            sage_path = rundir.path(_model_rel("sage", model_id, "sage.json"))
            report = sage_mod.SageReport.from_json(sage_path.read_text(encoding="utf-8"))
            entry["sage"]["top"] = [
                {"name": v.name, "value": v.value, "std_error": v.std_error}
                for v in report.ranked()[:20]
            ]
        models[model_id] = entry

    shadow = {}
    shadow_dir = rundir.path("shadow")
    if shadow_dir.is_dir():
        for report_path in sorted(shadow_dir.glob("*/report.json")):
            obj = json.loads(report_path.read_text(encoding="utf-8"))
            shadow[obj.get("target_model_id", report_path.parent.name)] = obj
    return {
        "config_hash": manifest.get("config_hash"),
        "interpreter": manifest.get("interpreter"),
        "models": models,
        "shadow": shadow,
    }


def render_report_markdown(report: dict) -> str:
    lines = ["# Run report", ""]
    lines += ["## Judge aggregate metrics", ""]
    lines += [
        "| model | accuracy | precision | recall | f1 | invalid |",
        "| --- | ---: | ---: | ---: | ---: | ---: |",
    ]
    for model_id, entry in sorted(report["models"].items()):
        a = entry["aggregate"]
        lines.append(
            f"| {model_id} | {_fmt(a['accuracy'])} | {_fmt(a['precision'])} "
            f"| {_fmt(a['recall'])} | {_fmt(a['f1'])} | {a['invalid_count']} |"
        )
    lines += ["", "## Success predictor (full vs pruned)", ""]
    lines += [
        "| model | auroc_full | auroc_pruned | retained | fraction |",
        "| --- | ---: | ---: | ---: | ---: |",
    ]
    for model_id, entry in sorted(report["models"].items()):
        s = entry.get("sage")
        p = entry.get("predictor")
        if s:
            lines.append(
                f"| {model_id} | {_fmt(s['auroc_full'])} | {_fmt(s['auroc_pruned'])} "
                f"| {s['retained_count']} | {_fmt(s['retained_fraction'])} |"
            )
        elif p:
            lines.append(f"| {model_id} | {_fmt(p['auroc_full'])} | n/a | n/a | n/a |")
    for model_id, entry in sorted(report["models"].items()):
        if "sage" in entry and entry["sage"].get("top"):
            lines += ["", f"## Top features by SAGE value: {model_id}", ""]
            lines += ["| rank | feature | value | std_error |", "| ---: | --- | ---: | ---: |"]
            for i, v in enumerate(entry["sage"]["top"], start=1):
                lines.append(f"| {i} | {v['name']} | {v['value']:.6f} | {v['std_error']:.6f} |")
    lines += ["", "## Shadow predictor", ""]
    if report["shadow"]:
        lines += ["| target model | auroc | accuracy@0.5 | n_train | n_test |", "| --- | ---: | ---: | ---: | ---: |"]
        for target, obj in sorted(report["shadow"].items()):
            lines.append(
                f"| {target} | {_fmt(obj.get('auroc'))} | {_fmt(obj.get('accuracy'))} "
                f"| {obj.get('n_train')} | {obj.get('n_test')} |"
            )
    else:
        lines.append("not run")
    return "\n".join(lines) + "\n"


def write_report(rundir: RunDir) -> tuple[Path, Path]:
    report = build_report(rundir)
    json_path = rundir.path("report.json")
    md_path = rundir.path("report.md")
    write_text_atomic(json_path, pretty_json(report))
    write_text_atomic(md_path, render_report_markdown(report))
    return json_path, md_path
