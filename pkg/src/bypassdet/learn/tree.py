"""CART decision trees (Gini) and bagged random forests.

Labels are 0 (NORMAL) / 1 (FRAUD). Rows go left when ``x[feature] < threshold``.
Every majority decision that ties resolves to NORMAL.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

_TIE_EPS = 1e-12


@dataclass
class TreeNode:
    counts: tuple[int, int]  # (normal, fraud) training rows routed here
    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    @property
    def label(self) -> int:
        return int(self.counts[1] > self.counts[0])

    def to_dict(self) -> dict[str, Any]:
        if self.is_leaf:
            return {"counts": list(self.counts), "label": "FRAUD" if self.label else "NORMAL"}
        return {
            "counts": list(self.counts),
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TreeNode":
        counts = (int(d["counts"][0]), int(d["counts"][1]))
        if "feature" not in d:
            return cls(counts)
        return cls(counts, int(d["feature"]), float(d["threshold"]),
                   cls.from_dict(d["left"]), cls.from_dict(d["right"]))


def gini(counts) -> float:
    n = sum(counts)
    if n == 0:
        return 0.0
    return 1.0 - sum((c / n) ** 2 for c in counts)


@dataclass
class TreeModel:
    root: TreeNode
    n_features: int
    max_depth: int | None = 12
    min_leaf: int = 2

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.zeros(len(X), dtype=np.int64)
        stack = [(self.root, np.arange(len(X)))]
        while stack:
            node, idx = stack.pop()
            if node.is_leaf:
                out[idx] = node.label
                continue
            go_left = X[idx, node.feature] < node.threshold
            stack.append((node.left, idx[go_left]))
            stack.append((node.right, idx[~go_left]))
        return out

    def nodes(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if not node.is_leaf:
                stack += [node.right, node.left]

    @property
    def depth(self) -> int:
        best = 0
        stack = [(self.root, 0)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            if not node.is_leaf:
                stack += [(node.left, d + 1), (node.right, d + 1)]
        return best

    def to_dict(self) -> dict[str, Any]:
        return {"n_features": self.n_features, "max_depth": self.max_depth, "min_leaf": self.min_leaf,
                "root": self.root.to_dict()}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TreeModel":
        return cls(TreeNode.from_dict(d["root"]), int(d["n_features"]), d["max_depth"], int(d["min_leaf"]))


def best_split(x: np.ndarray, y: np.ndarray, min_leaf: int = 1) -> tuple[float, float] | None:
    """Lowest weighted-Gini threshold on one feature: ``(impurity, threshold)``.

    Candidates are midpoints between consecutive distinct sorted values;
    the lowest threshold wins ties.
    """
    n = len(x)
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    cut = np.flatnonzero(xs[:-1] < xs[1:])
    if len(cut) == 0:
        return None
    n_left = cut + 1
    n_right = n - n_left
    ok = (n_left >= min_leaf) & (n_right >= min_leaf)
    if not ok.any():
        return None
    cut, n_left, n_right = cut[ok], n_left[ok], n_right[ok]
    fraud_left = np.cumsum(ys)[cut]
    fraud_right = ys.sum() - fraud_left
    # n * weighted Gini = sum over children of (n_c - sum_k count_k^2 / n_c)
    left = n_left - (fraud_left**2 + (n_left - fraud_left) ** 2) / n_left
    right = n_right - (fraud_right**2 + (n_right - fraud_right) ** 2) / n_right
    score = (left + right) / n
    i = int(np.flatnonzero(score <= score.min() + _TIE_EPS)[0])
    lo, hi = xs[cut[i]], xs[cut[i] + 1]
    threshold = (lo + hi) / 2.0
    if not lo < threshold <= hi:
        threshold = hi
    return float(score[i]), float(threshold)


def _grow(X: np.ndarray, y: np.ndarray, idx: np.ndarray, max_depth: int | None, min_leaf: int,
          m_try: int | None, rng: np.random.Generator | None) -> TreeNode:
    d = X.shape[1]
    root = TreeNode((0, 0))
    stack = [(root, idx, 0)]
    while stack:
        node, rows, depth = stack.pop()
        fraud = int(y[rows].sum())
        node.counts = (len(rows) - fraud, fraud)
        if fraud in (0, len(rows)) or (max_depth is not None and depth >= max_depth):
            continue
        if m_try is None or m_try >= d:
            feats = range(d)
        else:
            feats = np.sort(rng.choice(d, m_try, replace=False))
        best = None
        for f in feats:
            found = best_split(X[rows, f], y[rows], min_leaf)
            if found is not None and (best is None or found[0] < best[0] - _TIE_EPS):
                best = (found[0], int(f), found[1])
        if best is None:
            continue
        _, f, thr = best
        go_left = X[rows, f] < thr
        node.feature, node.threshold = f, thr
        node.left, node.right = TreeNode((0, 0)), TreeNode((0, 0))
        stack.append((node.right, rows[~go_left], depth + 1))
        stack.append((node.left, rows[go_left], depth + 1))
    return root


def train_tree(X: np.ndarray, y: np.ndarray, max_depth: int | None = 12, min_leaf: int = 2, *,
               m_try: int | None = None, rng: np.random.Generator | None = None) -> TreeModel:
    """Greedy CART; impure nodes always split while a legal split exists."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0:
        raise ValueError("cannot train a tree on an empty training set")
    if min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")
    root = _grow(X, y, np.arange(len(X)), max_depth, min_leaf, m_try, rng)
    return TreeModel(root, X.shape[1], max_depth, min_leaf)


@dataclass
class ForestModel:
    trees: list[TreeModel]
    tree_seeds: list[int]
    m_try: int
    bootstrap: bool = True
    seed: int = 42
    params: dict[str, Any] = field(default_factory=dict)

    def votes(self, X: np.ndarray) -> np.ndarray:
        return np.sum([t.predict(X) for t in self.trees], axis=0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (2 * self.votes(X) > len(self.trees)).astype(np.int64)

    def to_dict(self) -> dict[str, Any]:
        return {"m_try": self.m_try, "bootstrap": self.bootstrap, "seed": self.seed,
                "tree_seeds": self.tree_seeds, "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ForestModel":
        return cls([TreeModel.from_dict(t) for t in d["trees"]], list(d["tree_seeds"]), int(d["m_try"]),
                   bool(d["bootstrap"]), int(d["seed"]))


def tree_seed(seed: int, index: int) -> int:
    """Per-tree seed from (master seed, tree index); independent of scheduling."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])


def train_forest(X: np.ndarray, y: np.ndarray, n_trees: int = 100, m_try: int | None = None, seed: int = 42, *,
                 bootstrap: bool = True, max_depth: int | None = 12, min_leaf: int = 2) -> ForestModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    d = X.shape[1]
    if m_try is None:
        m_try = math.ceil(math.sqrt(d))
    if not 1 <= m_try <= d:
        raise ValueError(f"m_try must lie in [1, {d}], got {m_try}")
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    if len(X) == 0:
        raise ValueError("cannot train a forest on an empty training set")
    trees, seeds = [], []
    for t in range(n_trees):
        s = tree_seed(seed, t)
        rng = np.random.default_rng(s)
        rows = rng.integers(0, len(X), len(X)) if bootstrap else np.arange(len(X))
        root = _grow(X, y, rows, max_depth, min_leaf, m_try, rng)
        trees.append(TreeModel(root, d, max_depth, min_leaf))
        seeds.append(s)
    return ForestModel(trees, seeds, m_try, bootstrap, seed)
