"""Per-class feature statistics and a from-scratch random forest.

The forest exists to rank feature importance, not to serve as the production
classifier. Trees are grown on bootstrap samples with Gini impurity; the best
(feature, threshold) is searched over a random feature subset per node with
thresholds at midpoints of consecutive distinct values. All randomness comes
from per-tree seeds derived from one forest seed, so serial and parallel
training would agree exactly; ties in Gini gain resolve to the lowest feature
index and then the lowest threshold, making training fully deterministic.

Importance is mean decrease in impurity: per tree, each split contributes its
weighted impurity decrease to the split feature; per-tree vectors are
normalized, averaged across trees, and renormalized to sum to one. Because
gains depend only on the induced partitions, positively rescaling a feature
column cannot change the ranking.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidConfig, ShapeMismatch, SingleClass
from .features import FeatureMatrix

_CLASS_NAMES = ("benign", "phishing")


@dataclass
class ClassFeatureStats:
    """Per feature x class mean / max / population std, plus supports."""

    feature_names: tuple[str, ...]
    mean: dict[str, np.ndarray]
    max: dict[str, np.ndarray]
    std: dict[str, np.ndarray]
    support: dict[str, int]

    def present(self, class_name: str) -> bool:
        return self.support[class_name] > 0

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["feature", "class", "support", "mean", "max", "std"])
            for i, name in enumerate(self.feature_names):
                for cls in _CLASS_NAMES:
                    if self.present(cls):
                        writer.writerow(
                            [
                                name,
                                cls,
                                self.support[cls],
                                repr(float(self.mean[cls][i])),
                                repr(float(self.max[cls][i])),
                                repr(float(self.std[cls][i])),
                            ]
                        )
                    else:
                        writer.writerow([name, cls, 0, "", "", ""])


def class_feature_stats(X: FeatureMatrix, labels: np.ndarray) -> ClassFeatureStats:
    """Raw-scale per-class statistics; an absent class is reported, not fatal."""
    labels = np.asarray(labels)
    if labels.shape != (X.rows.shape[0],):
        raise ShapeMismatch("labels length != feature rows")
    mean: dict[str, np.ndarray] = {}
    mx: dict[str, np.ndarray] = {}
    std: dict[str, np.ndarray] = {}
    support: dict[str, int] = {}
    d = X.n_features
    for code, cls in enumerate(_CLASS_NAMES):
        rows = X.rows[labels == code]
        support[cls] = rows.shape[0]
        if rows.shape[0] == 0:
            mean[cls] = np.full(d, np.nan)
            mx[cls] = np.full(d, np.nan)
            std[cls] = np.full(d, np.nan)
        else:
            mean[cls] = rows.mean(axis=0)
            mx[cls] = rows.max(axis=0)
            std[cls] = rows.std(axis=0)
    return ClassFeatureStats(X.names, mean, mx, std, support)


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 12
    feature_subsample: int | None = None  # default: ceil(sqrt(n_features))
    min_leaf: int = 2
    seed: int = 0
    balanced: bool = False  # inverse-frequency sample weights

    def validate(self, n_features: int) -> None:
        if self.n_trees < 1:
            raise InvalidConfig("need at least one tree")
        if self.max_depth < 1:
            raise InvalidConfig("max_depth must be positive")
        if self.min_leaf < 1:
            raise InvalidConfig("min_leaf must be positive")
        k = self.resolved_subsample(n_features)
        if not 1 <= k <= n_features:
            raise InvalidConfig("feature_subsample out of range")

    def resolved_subsample(self, n_features: int) -> int:
        if self.feature_subsample is not None:
            return self.feature_subsample
        return max(1, math.ceil(math.sqrt(n_features)))


@dataclass
class DecisionTree:
    """Array-of-nodes binary tree; feature == -1 marks a leaf."""

    feature: np.ndarray       # (n_nodes,) int
    threshold: np.ndarray     # (n_nodes,) float
    left: np.ndarray          # (n_nodes,) int, -1 for leaves
    right: np.ndarray
    class_counts: np.ndarray  # (n_nodes, 2) weighted counts
    impurity: np.ndarray      # (n_nodes,) Gini at the node
    weight: np.ndarray        # (n_nodes,) total sample weight at the node
    max_depth: int

    def predict_one(self, x: np.ndarray) -> int:
        node = 0
        while self.feature[node] >= 0:
            if x[self.feature[node]] <= self.threshold[node]:
                node = self.left[node]
            else:
                node = self.right[node]
        counts = self.class_counts[node]
        return int(np.argmax(counts))

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.array([self.predict_one(row) for row in X], dtype=np.int64)


@dataclass
class Forest:
    trees: list[DecisionTree]
    tree_seeds: list[int]
    feature_subsample: int
    feature_names: tuple[str, ...]
    config: ForestConfig

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Majority vote over trees; exact ties resolve to the benign class."""
        votes = np.zeros((X.shape[0], 2), dtype=np.int64)
        for tree in self.trees:
            pred = tree.predict(X)
            votes[np.arange(X.shape[0]), pred] += 1
        return np.argmax(votes, axis=1)


def _gini(counts: np.ndarray) -> float:
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts / total
    return float(1.0 - np.dot(p, p))


class _TreeBuilder:
    def __init__(
        self,
        X: np.ndarray,
        y: np.ndarray,
        weights: np.ndarray,
        cfg: ForestConfig,
        rng: np.random.Generator,
        n_features: int,
    ):
        self.X = X
        self.y = y
        self.w = weights
        self.cfg = cfg
        self.rng = rng
        self.k = cfg.resolved_subsample(n_features)
        self.n_features = n_features
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.class_counts: list[np.ndarray] = []
        self.impurity: list[float] = []
        self.weight: list[float] = []

    def _new_node(self, counts: np.ndarray) -> int:
        node = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.class_counts.append(counts)
        self.impurity.append(_gini(counts))
        self.weight.append(float(counts.sum()))
        return node

    def grow(self, idx: np.ndarray, depth: int) -> int:
        y_here = self.y[idx]
        w_here = self.w[idx]
        counts = np.array(
            [w_here[y_here == 0].sum(), w_here[y_here == 1].sum()]
        )
        node = self._new_node(counts)
        if (
            depth >= self.cfg.max_depth
            or len(idx) < 2 * self.cfg.min_leaf
            or counts[0] == 0
            or counts[1] == 0
        ):
            return node
        split = self._best_split(idx)
        if split is None:
            return node
        f, thr, left_idx, right_idx = split
        self.feature[node] = f
        self.threshold[node] = thr
        self.left[node] = self.grow(left_idx, depth + 1)
        self.right[node] = self.grow(right_idx, depth + 1)
        return node

    def _best_split(self, idx: np.ndarray):
        """Best (feature, threshold) by weighted Gini gain over a random subset.

        Candidate features are scanned in ascending index and thresholds in
        ascending value with strict improvement required, which pins the
        tie-break order. Returns None when no split improves impurity.
        """
        features = np.sort(
            self.rng.choice(self.n_features, size=self.k, replace=False)
        )
        y = self.y[idx]
        w = self.w[idx]
        total_w = w.sum()
        total_w1 = w[y == 1].sum()
        parent_gini = _gini(np.array([total_w - total_w1, total_w1]))
        n = len(idx)

        best_gain = 0.0
        best = None
        for f in features:
            v = self.X[idx, f]
            order = np.argsort(v, kind="stable")
            v_sorted = v[order]
            boundaries = np.nonzero(np.diff(v_sorted) > 0)[0]
            if boundaries.size == 0:
                continue
            w_sorted = w[order]
            w1_sorted = w_sorted * (y[order] == 1)
            cum_w = np.cumsum(w_sorted)
            cum_w1 = np.cumsum(w1_sorted)

            n_left = boundaries + 1
            valid = (n_left >= self.cfg.min_leaf) & (
                n - n_left >= self.cfg.min_leaf
            )
            if not valid.any():
                continue
            b = boundaries[valid]
            lw = cum_w[b]
            lw1 = cum_w1[b]
            rw = total_w - lw
            rw1 = total_w1 - lw1
            with np.errstate(divide="ignore", invalid="ignore"):
                gini_l = 1.0 - ((lw1 / lw) ** 2 + ((lw - lw1) / lw) ** 2)
                gini_r = 1.0 - ((rw1 / rw) ** 2 + ((rw - rw1) / rw) ** 2)
            gini_l = np.where(lw > 0, gini_l, 0.0)
            gini_r = np.where(rw > 0, gini_r, 0.0)
            child = (lw * gini_l + rw * gini_r) / total_w
            gain = parent_gini - child
            pos = int(np.argmax(gain))
            if gain[pos] > best_gain:
                boundary = int(b[pos])
                thr = float((v_sorted[boundary] + v_sorted[boundary + 1]) / 2.0)
                best_gain = float(gain[pos])
                best = (int(f), thr, order, boundary)

        if best is None:
            return None
        f, thr, order, boundary = best
        left_idx = idx[order[: boundary + 1]]
        right_idx = idx[order[boundary + 1 :]]
        return f, thr, left_idx, right_idx

    def build(self) -> DecisionTree:
        self.grow(np.arange(len(self.y)), 0)
        return DecisionTree(
            feature=np.array(self.feature, dtype=np.int64),
            threshold=np.array(self.threshold),
            left=np.array(self.left, dtype=np.int64),
            right=np.array(self.right, dtype=np.int64),
            class_counts=np.array(self.class_counts),
            impurity=np.array(self.impurity),
            weight=np.array(self.weight),
            max_depth=self.cfg.max_depth,
        )


def train_forest(
    X: FeatureMatrix, labels: np.ndarray, cfg: ForestConfig | None = None
) -> Forest:
    cfg = cfg or ForestConfig()
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (X.rows.shape[0],):
        raise ShapeMismatch("labels length != feature rows")
    if len(np.unique(labels)) < 2:
        raise SingleClass("training requires both classes")
    cfg.validate(X.n_features)

    n = len(labels)
    if cfg.balanced:
        counts = np.bincount(labels, minlength=2)
        per_class = n / (2.0 * counts)
        sample_weights = per_class[labels]
    else:
        sample_weights = np.ones(n)

    seed_rng = np.random.default_rng(cfg.seed)
    tree_seeds = [int(s) for s in seed_rng.integers(0, 2**63, size=cfg.n_trees)]
    trees = []
    for tree_seed in tree_seeds:
        rng = np.random.default_rng(tree_seed)
        bootstrap = rng.integers(0, n, size=n)
        builder = _TreeBuilder(
            X.rows[bootstrap],
            labels[bootstrap],
            sample_weights[bootstrap],
            cfg,
            rng,
            X.n_features,
        )
        trees.append(builder.build())
    return Forest(
        trees=trees,
        tree_seeds=tree_seeds,
        feature_subsample=cfg.resolved_subsample(X.n_features),
        feature_names=X.names,
        config=cfg,
    )


def feature_importance(forest: Forest) -> list[tuple[str, float]]:
    """Mean decrease in Gini impurity, normalized to sum to one, descending.

    Ties break on feature name so the ordering is total. Features never used
    in a split come out exactly zero.
    """
    d = len(forest.feature_names)
    accumulated = np.zeros(d)
    for tree in forest.trees:
        imp = np.zeros(d)
        root_w = tree.weight[0]
        for node in range(len(tree.feature)):
            f = tree.feature[node]
            if f < 0:
                continue
            l, r = tree.left[node], tree.right[node]
            decrease = (
                tree.weight[node] * tree.impurity[node]
                - tree.weight[l] * tree.impurity[l]
                - tree.weight[r] * tree.impurity[r]
            ) / root_w
            imp[f] += decrease
        total = imp.sum()
        if total > 0:
            accumulated += imp / total
    grand_total = accumulated.sum()
    if grand_total > 0:
        accumulated /= grand_total
    ranked = sorted(
        zip(forest.feature_names, accumulated), key=lambda kv: (-kv[1], kv[0])
    )
    return [(name, float(score)) for name, score in ranked]


def importance_json(ranking: list[tuple[str, float]]) -> list[dict]:
    return [
        {"feature": name, "score": score, "rank": i + 1}
        for i, (name, score) in enumerate(ranking)
    ]


def write_importance(ranking: list[tuple[str, float]], path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(importance_json(ranking), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
