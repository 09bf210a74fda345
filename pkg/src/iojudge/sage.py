"""Global feature importance by Shapley additive global explanation (SAGE).

Permutation-sampling estimator with marginal imputation: for each sampled
feature ordering, features are revealed one by one; a feature's value is the
average drop in binary cross-entropy (nats) its revelation causes, with the
still-hidden features marginalized by averaging model predictions over a
fixed background sample. Summed over features the telescoping deltas equal
base_loss - full_loss for every permutation, so the efficiency property holds
by construction and the estimator's only noise is the permutation sampling.

Each permutation owns its own seeded RNG stream (indexed by permutation
number) and results are accumulated in a fixed order, so reports are
byte-identical across reruns and worker layouts.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .boosting import BoostingConfig, LabeledMatrix, TreeEnsembleModel, auroc, stratified_split, train
from .util import canonical_json


@dataclass(frozen=True)
class SageValue:
    name: str
    value: float
    std_error: float


@dataclass(frozen=True)
class SageReport:
    values: tuple[SageValue, ...]  # catalog order
    base_loss: float
    full_loss: float
    n_permutations: int
    background_size: int
    seed: int

    def ranked(self) -> list[SageValue]:
        return sorted(self.values, key=lambda v: (-v.value, v.name))

    def to_json(self) -> str:
        return canonical_json(
            {
                "version": 1,
                "base_loss": self.base_loss,
                "full_loss": self.full_loss,
                "n_permutations": self.n_permutations,
                "background_size": self.background_size,
                "seed": self.seed,
                "values": [
                    {"name": v.name, "value": v.value, "std_error": v.std_error}
                    for v in self.values
                ],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "SageReport":
        obj = json.loads(text)
        return cls(
            values=tuple(SageValue(v["name"], v["value"], v["std_error"]) for v in obj["values"]),
            base_loss=obj["base_loss"],
            full_loss=obj["full_loss"],
            n_permutations=obj["n_permutations"],
            background_size=obj["background_size"],
            seed=obj["seed"],
        )


@dataclass(frozen=True)
class PrunedSubset:
    retained: tuple[str, ...]  # descending value order
    covered_mass: float  # absolute positive mass covered by the retained set
    total_positive_mass: float
    threshold: float


def binary_cross_entropy(y: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Elementwise BCE in nats with probability clipping."""
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    return -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))


def draw_background(matrix: LabeledMatrix, size: int, seed: int) -> np.ndarray:
    """Seeded background rows (without replacement when possible)."""
    if size < 1:
        raise ValueError("background size must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0xB6,)))
    n = len(matrix)
    if size >= n:
        return matrix.X.copy()
    positions = np.sort(rng.permutation(n)[:size])
    return matrix.X[positions]


def estimate_sage(
    model: TreeEnsembleModel,
    eval_matrix: LabeledMatrix,
    background: np.ndarray,
    n_permutations: int,
    seed: int,
) -> SageReport:
    """Permutation-sampling SAGE values for every feature of the model.

    base_loss is the loss with *all* features marginalized (mean prediction
    over the background), not the empirical base rate; full_loss is the loss
    of real predictions on the evaluation rows.
    """
    if n_permutations < 2:
        raise ValueError("n_permutations must be >= 2 (variance needs replicates)")
    background = np.asarray(background, dtype=np.float64)
    if background.ndim != 2 or background.shape[0] == 0:
        raise ValueError("background sample must be a non-empty 2-D array")
    if background.shape[1] != len(model.feature_names):
        raise ValueError("background width does not match the model")
    if tuple(eval_matrix.feature_names) != tuple(model.feature_names):
        raise ValueError("evaluation matrix features do not match the model")
    if len(eval_matrix) == 0:
        raise ValueError("evaluation matrix is empty")

    X = eval_matrix.X
    y = eval_matrix.y.astype(np.float64)
    n, d = X.shape
    m = background.shape[0]

    # With nothing revealed the imputed prediction is the same for every row.
    p_hidden = float(model.predict_proba(background).mean())
    base_losses = binary_cross_entropy(y, np.full(n, p_hidden))
    base_loss = float(base_losses.mean())
    full_loss = float(binary_cross_entropy(y, model.predict_proba(X)).mean())

    # Work matrix: one background copy per evaluation row, revealed in place.
    tiled = np.tile(background, (n, 1))
    row_of = np.repeat(np.arange(n), m)
    contributions = np.zeros((n_permutations, d))

    for k in range(n_permutations):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(k,)))
        permutation = rng.permutation(d)
        work = tiled.copy()
        prev_losses = base_losses
        for j in permutation:
            work[:, j] = X[row_of, j]
            p = model.predict_proba(work).reshape(n, m).mean(axis=1)
            losses = binary_cross_entropy(y, p)
            contributions[k, j] = float((prev_losses - losses).mean())
            prev_losses = losses

    values = contributions.mean(axis=0)
    std_errors = contributions.std(axis=0, ddof=1) / math.sqrt(n_permutations)
    return SageReport(
        values=tuple(
            SageValue(name, float(values[i]), float(std_errors[i]))
            for i, name in enumerate(model.feature_names)
        ),
        base_loss=base_loss,
        full_loss=full_loss,
        n_permutations=n_permutations,
        background_size=m,
        seed=seed,
    )


def prune_by_positive_mass(report: SageReport, threshold: float = 0.95) -> PrunedSubset:
    """Shortest prefix of positive-value features covering the mass threshold.

    Features with positive SAGE values are ranked descending (ties broken by
    name); the retained set is the shortest prefix whose cumulative value
    reaches threshold * (total positive mass). No positive values is an
    error: there is nothing defensible to retain.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must be in (0, 1]")
    positives = sorted(
        (v for v in report.values if v.value > 0.0),
        key=lambda v: (-v.value, v.name),
    )
    if not positives:
        raise ValueError("no feature has positive SAGE value; nothing to retain")
    total = sum(v.value for v in positives)
    target = threshold * total
    retained: list[str] = []
    covered = 0.0
    for v in positives:
        retained.append(v.name)
        covered += v.value
        if covered >= target:
            break
    return PrunedSubset(
        retained=tuple(retained),
        covered_mass=covered,
        total_positive_mass=total,
        threshold=threshold,
    )


def compare_full_vs_pruned(
    matrix: LabeledMatrix,
    cfg: BoostingConfig,
    threshold: float = 0.95,
    n_permutations: int = 512,
    background_size: int = 128,
    split_ratio: float = 0.8,
    seed: int = 0,
) -> dict:
    """Train full, explain, prune, retrain on the retained columns only.

    Returns a plain dict (ready for JSON) with both held-out AUROCs, the
    retained features, and the mass they cover.
    """
    train_part, test_part = stratified_split(matrix, split_ratio, seed)
    full_model = train(train_part, cfg)
    background = draw_background(train_part, background_size, seed)
    report = estimate_sage(full_model, test_part, background, n_permutations, seed)
    subset = prune_by_positive_mass(report, threshold)
    pruned_model = train(train_part.subset_columns(subset.retained), cfg)
    test_pruned = test_part.subset_columns(subset.retained)
    auroc_full = auroc(full_model.predict_proba(test_part.X), test_part.y)
    auroc_pruned = auroc(pruned_model.predict_proba(test_pruned.X), test_pruned.y)
    return {
        "auroc_full": auroc_full,
        "auroc_pruned": auroc_pruned,
        "retained": list(subset.retained),
        "retained_count": len(subset.retained),
        "retained_fraction": len(subset.retained) / len(matrix.feature_names),
        "covered_mass": subset.covered_mass,
        "total_positive_mass": subset.total_positive_mass,
        "threshold": threshold,
        "n_features": len(matrix.feature_names),
    }


def render_top_k_table(report: SageReport, k: int = 20) -> str:
    """Markdown table of the top-k features by SAGE value."""
    lines = [
        "| rank | feature | sage_value | std_error |",
        "| ---: | --- | ---: | ---: |",
    ]
    for i, v in enumerate(report.ranked()[:k], start=1):
        lines.append(f"| {i} | {v.name} | {v.value:.6f} | {v.std_error:.6f} |")
    return "\n".join(lines) + "\n"
