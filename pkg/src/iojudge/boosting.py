"""Per-sample success prediction with gradient-boosted regression trees.

The learner is written here rather than imported: logistic loss, second-order
(Newton) split gains, and shrunken leaf values, trained round by round on a
seeded row subsample. Everything is deterministic given the seed and the
hyperparameters; row order of the input matrix is canonicalized first, so a
permuted matrix trains to the identical model.

Also home to the Mann-Whitney rank AUROC (average ranks for ties) and the
label-stratified train/test split, since they share the labeled-matrix type.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .util import canonical_json

MODEL_FORMAT_VERSION = 1
_MIN_GAIN = 1e-12


@dataclass(frozen=True)
class BoostingConfig:
    n_trees: int = 300
    max_depth: int = 6
    learning_rate: float = 0.1
    subsample: float = 0.8
    min_samples_leaf: int = 20
    reg_lambda: float = 1.0
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "learning_rate": self.learning_rate,
            "subsample": self.subsample,
            "min_samples_leaf": self.min_samples_leaf,
            "reg_lambda": self.reg_lambda,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "BoostingConfig":
        return cls(**obj)


class LabeledMatrix:
    """Dense feature rows keyed by triple id with a binary success label.

    Rows are stored sorted by triple id (the canonical order); duplicate ids
    are rejected, as are non-finite values.
    """

    def __init__(self, triple_ids, X, y, feature_names) -> None:
        triple_ids = list(triple_ids)
        if len(set(triple_ids)) != len(triple_ids):
            raise ValueError("duplicate triple_id in labeled matrix")
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if X.ndim != 2 or X.shape[0] != len(triple_ids) or y.shape != (len(triple_ids),):
            raise ValueError("labeled matrix shapes disagree")
        if X.shape[1] != len(feature_names):
            raise ValueError("feature count does not match names")
        if X.size and not np.all(np.isfinite(X)):
            raise ValueError("labeled matrix contains non-finite values")
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("labels must be 0/1")
        order = sorted(range(len(triple_ids)), key=lambda i: triple_ids[i])
        self.triple_ids = tuple(triple_ids[i] for i in order)
        self.X = X[order]
        self.y = y[order]
        self.feature_names = tuple(feature_names)

    def __len__(self) -> int:
        return len(self.triple_ids)

    def subset_rows(self, positions) -> "LabeledMatrix":
        positions = list(positions)
        return LabeledMatrix(
            [self.triple_ids[i] for i in positions],
            self.X[positions],
            self.y[positions],
            self.feature_names,
        )

    def subset_columns(self, names) -> "LabeledMatrix":
        index = {n: i for i, n in enumerate(self.feature_names)}
        missing = [n for n in names if n not in index]
        if missing:
            raise ValueError(f"unknown feature names: {missing}")
        cols = [index[n] for n in names]
        return LabeledMatrix(self.triple_ids, self.X[:, cols], self.y, tuple(names))


def stratified_split(
    matrix: LabeledMatrix, ratio: float = 0.8, seed: int = 0
) -> tuple[LabeledMatrix, LabeledMatrix]:
    """Seeded split preserving the success-class proportions within one row.

    Each class is shuffled and cut at round(ratio * class_size), clamped so
    both parts keep at least one row of every class with two or more members.
    A single-class matrix is an error: nothing downstream can rank it.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must be in (0, 1)")
    classes = np.unique(matrix.y)
    if len(classes) < 2:
        raise ValueError("stratified_split requires both classes present")
    rng = np.random.default_rng(seed)
    train_pos: list[int] = []
    test_pos: list[int] = []
    for cls in classes:
        members = np.flatnonzero(matrix.y == cls)
        members = members[rng.permutation(len(members))]
        n_train = int(math.floor(ratio * len(members) + 0.5))
        if len(members) >= 2:
            n_train = min(max(n_train, 1), len(members) - 1)
        train_pos.extend(members[:n_train].tolist())
        test_pos.extend(members[n_train:].tolist())
    return matrix.subset_rows(sorted(train_pos)), matrix.subset_rows(sorted(test_pos))


# --- tree growth -------------------------------------------------------------


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _grow_tree(X, g, h, idx, depth, cfg: BoostingConfig):
    G = float(g[idx].sum())
    H = float(h[idx].sum())
    lam = cfg.reg_lambda
    best = None
    if depth < cfg.max_depth and len(idx) >= 2 * cfg.min_samples_leaf:
        parent_score = G * G / (H + lam)
        n = len(idx)
        k_arr = np.arange(n - 1)
        size_ok = (k_arr >= cfg.min_samples_leaf - 1) & (k_arr <= n - cfg.min_samples_leaf - 1)
        for j in range(X.shape[1]):
            xs = X[idx, j]
            order = np.argsort(xs, kind="stable")
            xs_sorted = xs[order]
            if xs_sorted[0] == xs_sorted[-1]:
                continue
            valid = size_ok & (xs_sorted[:-1] < xs_sorted[1:])
            if not valid.any():
                continue
            gl = np.cumsum(g[idx][order])[:-1]
            hl = np.cumsum(h[idx][order])[:-1]
            gains = gl * gl / (hl + lam) + (G - gl) ** 2 / (H - hl + lam) - parent_score
            gains[~valid] = -np.inf
            k = int(np.argmax(gains))
            gain = float(gains[k])
            # strict improvement: ties resolve to the lowest feature index
            if gain > _MIN_GAIN and (best is None or gain > best[0]):
                best = (gain, j, (xs_sorted[k] + xs_sorted[k + 1]) / 2.0)
    if best is None:
        return {"value": -G / (H + lam)}
    _, j, threshold = best
    mask = X[idx, j] <= threshold
    return {
        "feature": j,
        "threshold": float(threshold),
        "left": _grow_tree(X, g, h, idx[mask], depth + 1, cfg),
        "right": _grow_tree(X, g, h, idx[~mask], depth + 1, cfg),
    }


class _PackedTrees:
    """Flat-array form of an ensemble for vectorized prediction.

    Leaves self-loop (left == right == own index), so walking ``max_depth``
    steps lands every row on its leaf regardless of path length.
    """

    def __init__(self, trees: list[dict]) -> None:
        feat, thr, left, right, val = [], [], [], [], []
        self.roots = []
        self.max_depth = 0

        def add(node: dict, depth: int) -> int:
            i = len(feat)
            feat.append(-1)
            thr.append(0.0)
            left.append(i)
            right.append(i)
            val.append(0.0)
            self.max_depth = max(self.max_depth, depth)
            if "value" in node:
                val[i] = node["value"]
            else:
                feat[i] = node["feature"]
                thr[i] = node["threshold"]
                left[i] = add(node["left"], depth + 1)
                right[i] = add(node["right"], depth + 1)
            return i

        for tree in trees:
            self.roots.append(add(tree, 0))
        self.feat = np.asarray(feat, dtype=np.int32)
        self.thr = np.asarray(thr, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int32)
        self.right = np.asarray(right, dtype=np.int32)
        self.val = np.asarray(val, dtype=np.float64)
        self.root_arr = np.asarray(self.roots, dtype=np.int32)

    def margin_sum(self, X: np.ndarray) -> np.ndarray:
        n = X.shape[0]
        t = len(self.roots)
        if t == 0 or n == 0:
            return np.zeros(n)
        out = np.zeros(n)
        # keep the (trees x rows) work matrix around 4M cells
        chunk = max(1, int(4_000_000 // max(t, 1)))
        cols = np.arange(n)
        for start in range(0, n, chunk):
            rows = slice(start, min(start + chunk, n))
            node = np.repeat(self.root_arr[:, None], rows.stop - rows.start, axis=1)
            row_index = cols[rows][None, :]
            for _ in range(self.max_depth):
                f = self.feat[node]
                x = X[row_index, np.maximum(f, 0)]
                node = np.where(x <= self.thr[node], self.left[node], self.right[node])
            out[rows] = self.val[node].sum(axis=0)
        return out


class TreeEnsembleModel:
    def __init__(
        self,
        trees: list[dict],
        learning_rate: float,
        base_score: float,
        feature_names,
        degenerate: bool = False,
        config: BoostingConfig | None = None,
    ) -> None:
        self.trees = trees
        self.learning_rate = learning_rate
        self.base_score = base_score
        self.feature_names = tuple(feature_names)
        self.degenerate = degenerate
        self.config = config
        self._validate()
        self._packed: _PackedTrees | None = None

    def _validate(self) -> None:
        d = len(self.feature_names)

        def check(node: dict) -> None:
            if "value" in node:
                return
            if not 0 <= node["feature"] < d:
                raise ValueError(f"split feature index {node['feature']} out of range")
            check(node["left"])
            check(node["right"])

        for tree in self.trees:
            check(tree)

    @property
    def packed(self) -> _PackedTrees:
        if self._packed is None:
            self._packed = _PackedTrees(self.trees)
        return self._packed

    def predict_margin(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise ValueError("input width does not match the model's features")
        margins = np.full(X.shape[0], self.base_score, dtype=np.float64)
        if self.trees:
            margins += self.learning_rate * self.packed.margin_sum(X)
        return margins

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self.predict_margin(X))

    def predict_proba_one(self, fv) -> float:
        if tuple(fv.catalog.names) != self.feature_names:
            raise ValueError("feature vector catalog does not match the model")
        return float(self.predict_proba(fv.values[None, :])[0])

    def to_json(self) -> str:
        return canonical_json(
            {
                "version": MODEL_FORMAT_VERSION,
                "base_score": self.base_score,
                "learning_rate": self.learning_rate,
                "feature_names": list(self.feature_names),
                "degenerate": self.degenerate,
                "config": self.config.to_dict() if self.config else None,
                "trees": self.trees,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "TreeEnsembleModel":
        obj = json.loads(text)
        if obj.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model version: {obj.get('version')!r}")
        return cls(
            trees=obj["trees"],
            learning_rate=obj["learning_rate"],
            base_score=obj["base_score"],
            feature_names=obj["feature_names"],
            degenerate=obj.get("degenerate", False),
            config=BoostingConfig.from_dict(obj["config"]) if obj.get("config") else None,
        )


def train(matrix: LabeledMatrix, cfg: BoostingConfig) -> TreeEnsembleModel:
    """Boost cfg.n_trees rounds of Newton-step regression trees.

    base_score is the log-odds of the training base rate. When no split
    clears the gain floor in the first round (e.g. all-constant features),
    the model degenerates to that base rate and says so via its flag.
    """
    if len(matrix) == 0:
        raise ValueError("cannot train on an empty matrix")
    if len(np.unique(matrix.y)) < 2:
        raise ValueError("training labels are single-class")
    X, y = matrix.X, matrix.y.astype(np.float64)
    n = len(matrix)
    p_base = min(max(float(y.mean()), 1e-6), 1.0 - 1e-6)
    base_score = math.log(p_base / (1.0 - p_base))
    margin = np.full(n, base_score)
    rng = np.random.default_rng(cfg.seed)
    trees: list[dict] = []
    degenerate = False
    for _ in range(cfg.n_trees):
        p = _sigmoid(margin)
        g = p - y
        h = p * (1.0 - p)
        if cfg.subsample < 1.0:
            k = max(1, int(round(cfg.subsample * n)))
            idx = np.sort(rng.permutation(n)[:k])
        else:
            idx = np.arange(n)
        tree = _grow_tree(X, g, h, idx, 0, cfg)
        if "value" in tree:
            # no usable split this round; either nothing to learn or done
            if not trees:
                degenerate = True
            break
        trees.append(tree)
        margin += cfg.learning_rate * _PackedTrees([tree]).margin_sum(X)
    return TreeEnsembleModel(
        trees, cfg.learning_rate, base_score, matrix.feature_names, degenerate, cfg
    )


# --- ranking -----------------------------------------------------------------


def auroc(scores, labels) -> float:
    """Mann-Whitney rank AUROC with average ranks for ties.

    (sum of positive ranks - n_pos*(n_pos+1)/2) / (n_pos * n_neg), equal to
    the probability a random positive outscores a random negative with ties
    counted half.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if s.ndim != 1 or s.shape != y.shape:
        raise ValueError("scores and labels must be equal-length 1-D")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auroc requires at least one positive and one negative")
    n = len(s)
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    group_start = np.r_[True, sorted_s[1:] != sorted_s[:-1]]
    group_ids = np.cumsum(group_start) - 1
    counts = np.bincount(group_ids)
    firsts = np.r_[0, np.cumsum(counts)[:-1]]
    avg_ranks = firsts + (counts + 1) / 2.0  # 1-based average rank per group
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = avg_ranks[group_ids]
    pos_rank_sum = float(ranks[y == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


# --- score files -------------------------------------------------------------


@dataclass
class ScoreRow:
    triple_id: str
    score: float
    label: int = field(default=0)


def write_scores_csv(path, rows: list[tuple[str, float, int]]) -> None:
    from .util import write_text_atomic

    lines = ["triple_id,score,label"]
    for triple_id, score, label in rows:
        lines.append(f"{triple_id},{repr(float(score))},{int(label)}")
    write_text_atomic(path, "\n".join(lines) + "\n")


def read_scores_csv(path) -> list[tuple[str, float, int]]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "triple_id,score,label":
            raise ValueError("scores file must have header triple_id,score,label")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            triple_id, score, label = line.split(",")
            out.append((triple_id, float(score), int(label)))
    return out
