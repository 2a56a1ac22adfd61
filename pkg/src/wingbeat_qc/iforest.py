"""Isolation Forest, written out in full.

Trees are stored as flat arrays so a whole batch of points can be routed
through a tree level by level.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataContractError, DimensionMismatchError

EULER_GAMMA = 0.5772156649
MODEL_FORMAT = "wingbeat_qc.iforest"
MODEL_VERSION = 1


def average_path_length(n: int | float) -> float:
    """Mean depth of an unsuccessful BST search over ``n`` keys.

    ``c(n) = 2 H(n-1) - 2 (n-1) / n`` with ``H(i) ~ ln(i) + gamma``; the two
    small cases are fixed by convention (c(0) = c(1) = 0, c(2) = 1).
    """
    if n <= 1:
        return 0.0
    if n == 2:
        return 1.0
    return 2.0 * (math.log(n - 1) + EULER_GAMMA) - 2.0 * (n - 1) / n


def score_from_path_length(mean_path_length, c_psi: float):
    """``2 ** (-E[h] / c(psi))``; E[h] equal to c(psi) gives exactly 0.5."""
    if c_psi <= 0:
        # psi = 1: every tree is a bare leaf and carries no information
        return np.full_like(np.asarray(mean_path_length, dtype=np.float64), 0.5)[()]
    return np.exp2(-np.asarray(mean_path_length, dtype=np.float64) / c_psi)[()]


@dataclass
class IsolationTree:
    """Array-backed binary tree. Leaves have ``feature == -1``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray
    depth: np.ndarray
    height_limit: int

    def __post_init__(self):
        self._leaf_adjust = np.array([average_path_length(int(s)) for s in self.size])

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def height(self) -> int:
        return int(self.depth.max())

    def leaf_index(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.nonzero(active)[0]
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] < self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return node

    def path_length(self, X: np.ndarray) -> np.ndarray:
        """Edges from root to leaf plus c(leaf size), for each row of ``X``."""
        leaf = self.leaf_index(np.atleast_2d(X))
        return self.depth[leaf] + self._leaf_adjust[leaf]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "size": self.size.tolist(),
            "depth": self.depth.tolist(),
            "height_limit": self.height_limit,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IsolationTree":
        return cls(
            np.array(d["feature"], dtype=np.int64),
            np.array(d["threshold"], dtype=np.float64),
            np.array(d["left"], dtype=np.int64),
            np.array(d["right"], dtype=np.int64),
            np.array(d["size"], dtype=np.int64),
            np.array(d["depth"], dtype=np.int64),
            int(d["height_limit"]),
        )


def path_length(tree: IsolationTree, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(tree.path_length(x.reshape(1, -1))[0])


def grow_tree(X: np.ndarray, height_limit: int, rng: np.random.Generator) -> IsolationTree:
    """Grow one isolation tree on the rows of ``X``.

    At each node the split feature is drawn uniformly among the features that
    still vary on the node's rows (equivalent to drawing uniformly over all D
    and redrawing on a constant one), and the split value uniformly in the open
    interval between that feature's min and max.
    """
    feature, threshold, left, right, size, depth = [], [], [], [], [], []

    def new_node(n, d):
        for lst, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1), (size, n), (depth, d)):
            lst.append(v)
        return len(feature) - 1

    root = new_node(X.shape[0], 0)
    stack = [(root, np.arange(X.shape[0]))]
    while stack:
        node, rows = stack.pop()
        d = depth[node]
        if d >= height_limit or rows.size <= 1:
            continue
        sub = X[rows]
        lo, hi = sub.min(axis=0), sub.max(axis=0)
        varying = np.nonzero(hi > lo)[0]
        if varying.size == 0:
            continue
        q = int(varying[rng.integers(varying.size)])
        p = rng.uniform(lo[q], hi[q])
        while not lo[q] < p < hi[q]:
            p = rng.uniform(lo[q], hi[q])
        mask = sub[:, q] < p
        feature[node], threshold[node] = q, float(p)
        li = new_node(int(mask.sum()), d + 1)
        ri = new_node(int((~mask).sum()), d + 1)
        left[node], right[node] = li, ri
        stack.append((ri, rows[~mask]))
        stack.append((li, rows[mask]))

    return IsolationTree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(size, dtype=np.int64),
        np.array(depth, dtype=np.int64),
        height_limit,
    )


def _canonical_order(X: np.ndarray) -> np.ndarray:
    # sort rows by content so the fit does not depend on input row order
    if X.shape[0] == 0:
        return np.arange(0)
    return np.lexsort(X.T[::-1])


class IsolationForest:
    """Ensemble of isolation trees; ``score`` returns values in (0, 1), higher = more anomalous.

    Parameters
    ----------
    n_trees : int
        Number of trees.
    subsample_size : int
        Rows drawn (without replacement) per tree; clamped to the training size.
    seed : int
        Master seed. Tree ``i`` uses its own child stream, so trees could be grown
        in any order and come out the same.
    contamination : float
        Expected outlier fraction. Kept as metadata only: verdicts come from a
        fixed score threshold applied downstream.
    """

    def __init__(self, n_trees: int = 100, subsample_size: int = 256, seed: int = 0, contamination: float = 0.001):
        if n_trees < 1 or subsample_size < 1:
            raise ValueError("n_trees and subsample_size must be >= 1")
        self.n_trees = n_trees
        self.subsample_size = subsample_size
        self.seed = seed
        self.contamination = contamination
        self.trees: list[IsolationTree] = []
        self.psi: int | None = None
        self.c_psi: float | None = None
        self.feature_dim: int | None = None

    def fit(self, X) -> "IsolationForest":
        X = _as_matrix(X)
        n, dim = X.shape
        if n == 0:
            raise DataContractError("cannot fit an isolation forest on an empty training set")
        if dim == 0:
            raise DataContractError("cannot fit an isolation forest on zero-dimensional features")
        X = X[_canonical_order(X)]
        psi = min(self.subsample_size, n)
        height_limit = math.ceil(math.log2(psi)) if psi > 1 else 0
        children = np.random.SeedSequence(self.seed).spawn(self.n_trees)
        trees = []
        for child in children:
            rng = np.random.default_rng(child)
            rows = np.sort(rng.permutation(n)[:psi])
            trees.append(grow_tree(X[rows], height_limit, rng))
        self.trees = trees
        self.psi = psi
        self.c_psi = average_path_length(psi)
        self.feature_dim = dim
        return self

    def _check(self, X) -> np.ndarray:
        if not self.trees:
            raise DataContractError("isolation forest is not fitted")
        X = _as_matrix(X)
        if X.shape[1] != self.feature_dim:
            raise DimensionMismatchError(f"features have D={X.shape[1]}, forest was fitted on D={self.feature_dim}")
        return X

    def _total_path_length(self, X) -> np.ndarray:
        # correctly rounded sums, so T equal depths h total exactly fl(T * h)
        X = self._check(X)
        depths = np.stack([tree.path_length(X) for tree in self.trees], axis=1)
        return np.array([math.fsum(row) for row in depths])

    def mean_path_length(self, X) -> np.ndarray:
        return self._total_path_length(X) / len(self.trees)

    def score(self, X) -> np.ndarray:
        """Anomaly score per row of ``X`` (a single vector gives a 1-element array)."""
        # compare totals against T * c(psi): E[h] == c(psi) then gives exactly 0.5
        total = self._total_path_length(X)
        return np.atleast_1d(score_from_path_length(total, len(self.trees) * self.c_psi))

    # persistence ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "params": {
                "n_trees": self.n_trees,
                "subsample_size": self.subsample_size,
                "seed": self.seed,
                "contamination": self.contamination,
            },
            "psi": self.psi,
            "c_psi": self.c_psi,
            "feature_dim": self.feature_dim,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IsolationForest":
        if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
            raise DataContractError(f"not an isolation forest model file (format={d.get('format')}, version={d.get('version')})")
        model = cls(**d["params"])
        model.psi = d["psi"]
        model.c_psi = d["c_psi"]
        model.feature_dim = d["feature_dim"]
        model.trees = [IsolationTree.from_dict(t) for t in d["trees"]]
        return model

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "IsolationForest":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _as_matrix(X) -> np.ndarray:
    values = getattr(X, "values", X)
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionMismatchError("expected a 2-D feature matrix")
    return arr
