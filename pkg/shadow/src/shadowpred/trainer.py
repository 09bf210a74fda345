"""One-epoch training and evaluation of the judge-success predictor.

The contract is deliberately rigid so runs are comparable across judge
models: a deterministic 80/20 stratified split on the success label, exactly
one epoch of AdamW with linear warmup over the first 10% of steps and linear
decay after, then AUROC and accuracy on the held-out fifth. Scores go to a
CSV so anything downstream can recompute the metrics from the raw numbers;
this module's own AUROC is for the report, not the source of truth.
"""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .serialize import ShadowExample


@dataclass(frozen=True)
class Hyper:
    batch_size: int = 16
    learning_rate: float | None = None  # None: take the encoder's default
    warmup_fraction: float = 0.1
    max_len: int = 512
    split_ratio: float = 0.8

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValueError("warmup_fraction must be in [0, 1)")
        if not 0.0 < self.split_ratio < 1.0:
            raise ValueError("split_ratio must be in (0, 1)")


def stratified_split(
    examples: list[ShadowExample], ratio: float, seed: int
) -> tuple[list[ShadowExample], list[ShadowExample]]:
    """Per-label shuffle and cut, so both sides keep the class mix.

    Every class lands at least one example on each side; asking for that
    with a single-class label set is an error because the evaluation metric
    would be undefined anyway.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must be in (0, 1)")
    by_label: dict[int, list[ShadowExample]] = {}
    for ex in sorted(examples, key=lambda e: e.triple_id):
        by_label.setdefault(ex.success, []).append(ex)
    if len(by_label) < 2:
        raise ValueError("need both success and failure examples to split")
    rng = random.Random(seed)
    train: list[ShadowExample] = []
    test: list[ShadowExample] = []
    for label in sorted(by_label):
        members = by_label[label]
        if len(members) < 2:
            raise ValueError(f"label {label} has fewer than 2 examples")
        rng.shuffle(members)
        k = int(math.floor(ratio * len(members) + 0.5))
        k = max(1, min(len(members) - 1, k))
        train.extend(members[:k])
        test.extend(members[k:])
    train.sort(key=lambda e: e.triple_id)
    test.sort(key=lambda e: e.triple_id)
    return train, test


@dataclass
class ShadowModel:
    encoder: nn.Module
    hyper: Hyper
    seed: int
    n_train: int

    def predict(self, examples: list[ShadowExample]) -> np.ndarray:
        """Success probabilities, batched; order follows the input list."""
        self.encoder.eval()
        scores: list[float] = []
        with torch.no_grad():
            for start in range(0, len(examples), self.hyper.batch_size):
                chunk = examples[start : start + self.hyper.batch_size]
                ids, mask = self.encoder.encode_batch([ex.serialized for ex in chunk])
                logits = self.encoder(ids, mask)
                scores.extend(torch.sigmoid(logits).tolist())
        return np.asarray(scores, dtype=np.float64)


def train_shadow(
    train_examples: list[ShadowExample], hyper: Hyper, encoder: nn.Module, seed: int
) -> ShadowModel:
    """Exactly one epoch. The pass count is part of the protocol: extra
    epochs would let the model memorize the corpus instead of reading it."""
    labels = {ex.success for ex in train_examples}
    if len(labels) < 2:
        raise ValueError("training labels are single-class")
    torch.manual_seed(seed)
    lr = hyper.learning_rate
    if lr is None:
        lr = getattr(encoder, "default_learning_rate", 1e-3)
    optimizer = torch.optim.AdamW(encoder.parameters(), lr=lr)
    n_steps = math.ceil(len(train_examples) / hyper.batch_size)
    warmup = max(1, int(round(hyper.warmup_fraction * n_steps)))

    def lr_scale(step: int) -> float:
        if step < warmup:
            return (step + 1) / warmup
        if n_steps == warmup:
            return 1.0
        return max(0.0, (n_steps - step) / (n_steps - warmup))

    scheduler = torch.optim.lr_scheduler.LambdaLR(optimizer, lr_scale)
    loss_fn = nn.BCEWithLogitsLoss()
    order = torch.randperm(
        len(train_examples), generator=torch.Generator().manual_seed(seed)
    ).tolist()

    encoder.train()
    for start in range(0, len(order), hyper.batch_size):
        chunk = [train_examples[i] for i in order[start : start + hyper.batch_size]]
        ids, mask = encoder.encode_batch([ex.serialized for ex in chunk])
        targets = torch.tensor([float(ex.success) for ex in chunk])
        optimizer.zero_grad()
        loss = loss_fn(encoder(ids, mask), targets)
        loss.backward()
        optimizer.step()
        scheduler.step()
    return ShadowModel(encoder=encoder, hyper=hyper, seed=seed, n_train=len(train_examples))


def auroc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Rank-sum AUROC with midranks on ties.

    Walks tie groups over a stable sort: each group gets the average of the
    positions it spans, then AUROC falls out of the positive rank sum.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC needs both classes")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0  # midrank, 1-based
        i = j + 1
    pos_rank_sum = float(ranks[labels == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def accuracy_at_half(scores: np.ndarray, labels: np.ndarray) -> float:
    predicted = (np.asarray(scores) >= 0.5).astype(int)
    return float((predicted == np.asarray(labels)).mean())


@dataclass(frozen=True)
class ShadowEvalReport:
    target_model_id: str
    auroc: float
    accuracy: float
    n_train: int
    n_test: int
    seed: int
    epochs: int = 1
    split: str = "stratified"
    split_ratio: float = 0.8
    n_dropped: int = 0

    def to_json(self) -> str:
        payload = {
            "target_model_id": self.target_model_id,
            "auroc": self.auroc,
            "accuracy": self.accuracy,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "seed": self.seed,
            "epochs": self.epochs,
            "split": self.split,
            "split_ratio": self.split_ratio,
            "n_dropped": self.n_dropped,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def eval_shadow(
    model: ShadowModel,
    test_examples: list[ShadowExample],
    target_model_id: str,
    n_dropped: int = 0,
) -> tuple[ShadowEvalReport, np.ndarray]:
    scores = model.predict(test_examples)
    labels = np.asarray([ex.success for ex in test_examples])
    report = ShadowEvalReport(
        target_model_id=target_model_id,
        auroc=auroc(scores, labels),
        accuracy=accuracy_at_half(scores, labels),
        n_train=model.n_train,
        n_test=len(test_examples),
        seed=model.seed,
        split_ratio=model.hyper.split_ratio,
        n_dropped=n_dropped,
    )
    return report, scores


def write_scores_csv(
    path: str, examples: list[ShadowExample], scores: np.ndarray
) -> None:
    """triple_id,score,label rows; repr() keeps float round trips exact."""
    if len(examples) != len(scores):
        raise ValueError("one score per example")
    lines = ["triple_id,score,label"]
    for ex, score in zip(examples, scores):
        lines.append(f"{ex.triple_id},{repr(float(score))},{ex.success}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
