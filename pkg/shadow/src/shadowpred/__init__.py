"""Feature-free predictor of per-example judge success.

Reads the run dataset and one judge's records, serializes code and I/O into
a single string, and trains a small sequence encoder for exactly one epoch
to predict whether the judge got each example right. No hand-built features
anywhere: whatever signal the scores carry was read off the raw text.
"""
from .encoder import PretrainedEncoder, TinyByteEncoder, make_encoder
from .serialize import (
    SEPARATOR,
    OversizedExample,
    ShadowExample,
    build_examples,
    deserialize,
    read_dataset_rows,
    read_success_labels,
    serialize_example,
)
from .trainer import (
    Hyper,
    ShadowEvalReport,
    ShadowModel,
    accuracy_at_half,
    auroc,
    eval_shadow,
    stratified_split,
    train_shadow,
    write_scores_csv,
)

__all__ = [
    "SEPARATOR",
    "OversizedExample",
    "ShadowExample",
    "build_examples",
    "deserialize",
    "read_dataset_rows",
    "read_success_labels",
    "serialize_example",
    "PretrainedEncoder",
    "TinyByteEncoder",
    "make_encoder",
    "Hyper",
    "ShadowEvalReport",
    "ShadowModel",
    "accuracy_at_half",
    "auroc",
    "eval_shadow",
    "stratified_split",
    "train_shadow",
    "write_scores_csv",
]
