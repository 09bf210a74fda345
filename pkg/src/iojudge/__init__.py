"""Measure LLM judging of program input/output consistency and explain it.

The package builds a labeled corpus of (code, input, output) triples by
fuzzing and sandbox-executing real submissions, asks judge models whether
each triple is consistent, then explains per-sample judge success with a
gradient-boosted classifier over static code metrics plus SAGE feature
importance and threshold pruning.
"""
from .boosting import BoostingConfig, LabeledMatrix, TreeEnsembleModel, auroc, stratified_split, train
from .corpus import Program, SplitManifest, Triple, build_corpus, fuzz_inputs, read_dataset, write_dataset
from .features import FeatureCatalog, FeatureVector, build_catalog, extract_all
from .judge import AggregateMetrics, JudgmentRecord, aggregate, parse_judgment, run_judgments
from .sage import SageReport, estimate_sage, prune_by_positive_mass
from .sidecar import ExecutionResult, OpcodeSequence, SidecarSession

__version__ = "0.1.0"

__all__ = [
    "AggregateMetrics",
    "BoostingConfig",
    "ExecutionResult",
    "FeatureCatalog",
    "FeatureVector",
    "JudgmentRecord",
    "LabeledMatrix",
    "OpcodeSequence",
    "Program",
    "SageReport",
    "SidecarSession",
    "SplitManifest",
    "TreeEnsembleModel",
    "Triple",
    "aggregate",
    "auroc",
    "build_catalog",
    "build_corpus",
    "estimate_sage",
    "extract_all",
    "fuzz_inputs",
    "parse_judgment",
    "prune_by_positive_mass",
    "read_dataset",
    "run_judgments",
    "stratified_split",
    "train",
    "write_dataset",
    "__version__",
]
