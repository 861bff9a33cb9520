"""Random forest of Gini trees with out-of-bag tuning.

Growth follows the usual recipe: a full-size bootstrap per tree, ``mtry``
random candidate columns per node, midpoint thresholds between consecutive
distinct values, and leaves at ``min_leaf`` (bootstrap-weighted) rows or
purity.  Predictions average the per-tree leaf means, so the forest
estimates a purchase probability.

Each node samples its columns from a stream keyed by the node's path, so a
tree grown with ``min_leaf=1`` and truncated at nodes holding at most ``k``
rows is exactly the tree grown with ``min_leaf=k``.  Tuning therefore grows
one forest per ``mtry`` value and scores every ``min_leaf`` from it.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import _backend

DEFAULT_MIN_LEAF_GRID = (1, 5, 10)


def mtry_grid(p: int) -> list[int]:
    """Candidate column-subset sizes: sqrt(p), p/3 and p/10, rounded and deduplicated."""
    vals = {max(1, int(round(v))) for v in (math.sqrt(p), p / 3.0, p / 10.0)}
    return sorted(min(v, p) for v in vals)


def encode_columns(X: np.ndarray):
    """Dense value codes per column plus the sorted distinct values."""
    n, p = X.shape
    codes = np.empty((p, n), dtype=np.int32)
    cuts = []
    offsets = np.zeros(p + 1, dtype=np.int64)
    for f in range(p):
        u, inv = np.unique(X[:, f], return_inverse=True)
        codes[f] = inv
        cuts.append(u)
        offsets[f + 1] = offsets[f] + len(u)
    cut_values = np.concatenate(cuts) if cuts else np.zeros(0)
    return codes, np.ascontiguousarray(cut_values, dtype=float), offsets


@dataclass
class _Trees:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    node_weight: np.ndarray
    decrease: np.ndarray
    offsets: np.ndarray

    @classmethod
    def concat(cls, trees):
        sizes = [len(t[0]) for t in trees]
        offsets = np.zeros(len(trees) + 1, dtype=np.int64)
        offsets[1:] = np.cumsum(sizes)
        cols = [np.concatenate([t[k] for t in trees]) for k in range(7)]
        return cls(*cols, offsets=offsets)

    def arrays(self):
        return (self.feature, self.threshold, self.left, self.right, self.value, self.node_weight)

    def pruned(self, min_leaf: float) -> "_Trees":
        """Turn every node holding at most ``min_leaf`` weight into a leaf and drop the dead subtrees."""
        feature = self.feature.copy()
        feature[self.node_weight <= min_leaf] = -1
        n = len(feature)
        tree_of = np.repeat(np.arange(len(self.offsets) - 1), np.diff(self.offsets))
        base = self.offsets[tree_of]
        keep = np.zeros(n, dtype=bool)
        frontier = self.offsets[:-1].copy()
        keep[frontier] = True
        while len(frontier):
            frontier = frontier[feature[frontier] >= 0]
            kids = np.concatenate([base[frontier] + self.left[frontier], base[frontier] + self.right[frontier]])
            keep[kids] = True
            frontier = kids
        new_global = np.cumsum(keep) - 1
        new_offsets = np.zeros_like(self.offsets)
        new_offsets[1:] = np.cumsum(np.add.reduceat(keep.astype(np.int64), self.offsets[:-1]))
        k = np.flatnonzero(keep)
        internal = feature[k] >= 0
        left = np.full(len(k), -1, dtype=np.int32)
        right = np.full(len(k), -1, dtype=np.int32)
        tk = tree_of[k]
        left[internal] = new_global[base[k][internal] + self.left[k][internal]] - new_offsets[tk[internal]]
        right[internal] = new_global[base[k][internal] + self.right[k][internal]] - new_offsets[tk[internal]]
        decrease = np.where(internal, self.decrease[k], 0.0)
        threshold = np.where(internal, self.threshold[k], 0.0)
        return _Trees(
            feature[k].astype(np.int32), threshold, left, right,
            self.value[k].copy(), self.node_weight[k].copy(), decrease, new_offsets,
        )


@dataclass
class FittedForest:
    """A trained forest; ``feature`` indices refer to ``columns``."""

    columns: list[str]
    trees: _Trees
    inbag: np.ndarray  # (n_trees, n_train) bootstrap counts
    n_trees: int
    mtry: int
    min_leaf: int
    oob_error: float
    seed: int
    tuning: list[dict] = field(default_factory=list)
    space: str | None = None

    def predict_proba(self, X: np.ndarray, backend: str | None = None) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        if X.shape[1] != len(self.columns):
            raise ValueError(f"expected {len(self.columns)} columns, got {X.shape[1]}")
        k = _backend.get(backend)
        t = self.trees
        return k.predict_forest(X, *t.arrays(), t.offsets, 0.0)

    def tree_seeds(self) -> np.ndarray:
        return _tree_streams(self.seed, self.n_trees)[1]


def _tree_streams(seed: int, n_trees: int):
    children = np.random.SeedSequence(seed).spawn(n_trees)
    keys = np.array([c.generate_state(1, dtype=np.uint64)[0] for c in children], dtype=np.uint64)
    return children, keys


def _bootstrap(child: np.random.SeedSequence, n: int) -> np.ndarray:
    rng = np.random.default_rng(child)
    return np.bincount(rng.integers(0, n, size=n), minlength=n)


def grow_forest(
    codes, cut_values, cut_offsets, y, weights, keys, mtry, min_leaf, backend=None, n_jobs=1
) -> _Trees:
    k = _backend.get(backend)
    yf = np.ascontiguousarray(y, dtype=float)

    def one(t):
        return k.grow_tree(codes, cut_values, cut_offsets, yf, weights[t], int(mtry), float(min_leaf), int(keys[t]))

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as ex:
            trees = list(ex.map(one, range(len(keys))))
    else:
        trees = [one(t) for t in range(len(keys))]
    return _Trees.concat(trees)


def fit_random_forest(
    X: np.ndarray,
    y: np.ndarray,
    columns: list[str] | None = None,
    n_trees: int = 500,
    mtry_values=None,
    min_leaf_values=DEFAULT_MIN_LEAF_GRID,
    seed: int = 0,
    bootstrap: bool = True,
    backend: str | None = None,
    n_jobs: int = 1,
) -> FittedForest:
    """Fit a forest, choosing (mtry, min_leaf) by out-of-bag MSE.

    Columns that are constant on the training rows are never split on and
    are left out of the candidate pool (``p`` for the mtry grid counts only
    the varying columns).  ``bootstrap=False`` grows every tree on all rows
    once, which leaves no out-of-bag rows.
    """
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y)
    n, p_all = X.shape
    if n < 10:
        raise ValueError("random forest needs at least 10 training rows")
    if columns is None:
        columns = [f"x{k}" for k in range(p_all)]
    min_leaf_values = sorted(set(int(m) for m in min_leaf_values))
    if not min_leaf_values:
        raise ValueError("empty min_leaf grid")

    varying = np.flatnonzero(np.ptp(X, axis=0) > 0) if p_all else np.zeros(0, dtype=int)
    if len(varying) == 0:
        varying = np.arange(min(1, p_all))
    Xv = np.ascontiguousarray(X[:, varying])
    codes, cut_values, cut_offsets = encode_columns(Xv)
    p = len(varying)
    grid = sorted(set(int(m) for m in (mtry_values if mtry_values is not None else mtry_grid(p))))
    if not grid:
        raise ValueError("empty mtry grid")

    children, keys = _tree_streams(seed, n_trees)
    if bootstrap:
        weights = np.vstack([_bootstrap(c, n) for c in children]).astype(float)
    else:
        weights = np.ones((n_trees, n))
    yf = y.astype(float)
    kern = _backend.get(backend)
    grow_leaf = float(min(min_leaf_values))
    best = None
    tuning = []
    inbag = (weights > 0).astype(np.uint8)
    for m in grid:
        trees = grow_forest(codes, cut_values, cut_offsets, yf, weights, keys, m, grow_leaf, backend, n_jobs)
        sums, counts = kern.oob_sums(
            Xv, *trees.arrays(), trees.offsets, np.array(min_leaf_values, dtype=float), inbag
        )
        has = counts > 0
        for li, ml in enumerate(min_leaf_values):
            if has.any():
                err = float(np.mean((yf[has] - sums[li, has] / counts[has]) ** 2))
            else:
                err = float("nan")
            tuning.append({"mtry": int(m), "min_leaf": int(ml), "oob_mse": err})
            if best is None or (err < best[0]) or (np.isnan(best[0]) and not np.isnan(err)):
                best = (err, m, ml, trees)
        if best[3] is not trees:
            del trees
    err, m, ml, trees = best
    if ml != grow_leaf:
        trees = trees.pruned(float(ml))
    # map back to the full column index space
    feat = trees.feature.copy()
    internal = feat >= 0
    feat[internal] = varying[feat[internal]]
    trees.feature = feat.astype(np.int32)
    return FittedForest(
        columns=list(columns),
        trees=trees,
        inbag=weights.astype(np.uint8),
        n_trees=n_trees,
        mtry=int(m),
        min_leaf=int(ml),
        oob_error=err,
        seed=int(seed),
        tuning=tuning,
    )


def variable_importance(f: FittedForest, X: np.ndarray, y: np.ndarray, backend: str | None = None):
    """Permutation (mean decrease in accuracy) and Gini importance per column.

    Returns a dict ``column -> (mean_decrease_accuracy, mean_decrease_gini)``
    and, as a second value, the per-column standard error of the
    permutation importance across trees.
    """
    X = np.ascontiguousarray(X, dtype=float)
    yf = np.asarray(y, dtype=float)
    k = _backend.get(backend)
    t = f.trees
    p = len(f.columns)
    T = f.n_trees
    gini = np.zeros(p)
    acc_sum = np.zeros(p)
    acc_sq = np.zeros(p)
    keys = f.tree_seeds()
    for i in range(T):
        lo, hi = t.offsets[i], t.offsets[i + 1]
        feat = t.feature[lo:hi]
        internal = feat >= 0
        np.add.at(gini, feat[internal], t.decrease[lo:hi][internal])
        used = np.unique(feat[internal]).astype(np.int32)
        oob = np.flatnonzero(f.inbag[i] == 0).astype(np.int32)
        inc = k.permutation_increase(
            X, yf, feat, t.threshold[lo:hi], t.left[lo:hi], t.right[lo:hi],
            t.value[lo:hi], t.node_weight[lo:hi], oob, used, int(keys[i]),
        )
        acc_sum[used] += inc
        acc_sq[used] += inc * inc
    acc = acc_sum / T
    var = np.maximum(acc_sq / T - acc * acc, 0.0) * T / max(T - 1, 1)
    se = np.sqrt(var / T)
    gini /= T
    out = {c: (float(acc[j]), float(gini[j])) for j, c in enumerate(f.columns)}
    return out, dict(zip(f.columns, se.tolist()))
