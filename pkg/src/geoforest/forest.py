"""Unsupervised randomer trees and forests, and the forest proximity matrix."""
from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .projection import SparseProjection, project, project_transposed, sample_projection
from .split import CRITERIA, DEFAULT_MIN_LEAF, EMConfig, best_split_columns

log = logging.getLogger(__name__)

FORMAT_NAME = "geoforest-forest"
FORMAT_VERSION = 1
ALL_POINTS = "all"
IN_BAG = "inbag"
LEAF = -1


@dataclass
class ForestConfig:
    """Forest hyperparameters.

    ``subsample`` is either an absolute count (int) or a fraction of N
    (float in (0, 1]); ``mtry=None`` means ``ceil(sqrt(p))``.
    """

    n_trees: int = 100
    subsample: float | int = 0.632
    mtry: int | None = None
    sparsity: float = 1 / 20
    minparent: int = 100
    criterion: str = "fastbic"
    seed: int = 0
    proximity_mode: str = ALL_POINTS
    min_leaf: int | None = None

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.minparent < 2:
            raise ValueError(f"minparent must be >= 2, got {self.minparent}")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError(f"mtry must be >= 1, got {self.mtry}")
        if not 0 < self.sparsity <= 1:
            raise ValueError(f"sparsity must lie in (0, 1], got {self.sparsity}")
        if self.criterion not in CRITERIA:
            raise ValueError(f"unknown criterion {self.criterion!r}; choose from {CRITERIA}")
        if self.proximity_mode not in (ALL_POINTS, IN_BAG):
            raise ValueError(f"proximity_mode must be {ALL_POINTS!r} or {IN_BAG!r}")
        if isinstance(self.subsample, float) and not 0 < self.subsample <= 1:
            raise ValueError(f"fractional subsample must lie in (0, 1], got {self.subsample}")

    def resolve_mtry(self, p: int) -> int:
        return self.mtry if self.mtry is not None else math.ceil(math.sqrt(p))

    def resolve_subsample(self, n: int) -> int:
        if isinstance(self.subsample, float):
            m = math.ceil(self.subsample * n)
        else:
            m = int(self.subsample)
        if m > n:
            raise ValueError(f"subsample size {m} exceeds N={n}")
        if m < 2:
            raise ValueError(f"subsample size must be >= 2, got {m}")
        return m

    def resolve_min_leaf(self) -> int:
        return self.min_leaf if self.min_leaf is not None else DEFAULT_MIN_LEAF[self.criterion]


def tree_rng(seed: int, t: int) -> np.random.Generator:
    """Independent stream for tree ``t``; unaffected by the forest size."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(t,)))


@dataclass
class Tree:
    """Flat node arrays; node 0 is the root.

    Internal nodes keep the single projection column that won the split;
    leaves (``left == -1``) keep the in-bag sample ids routed to them.
    """

    p: int
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    members: list = field(default_factory=list)

    def _new_node(self):
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.threshold.append(math.nan)
        self.weights.append(None)
        self.members.append(None)
        return len(self.left) - 1

    @property
    def n_nodes(self) -> int:
        return len(self.left)

    def is_leaf(self, node: int) -> bool:
        return self.left[node] == LEAF

    def leaves(self) -> list[int]:
        return [i for i in range(self.n_nodes) if self.is_leaf(i)]

    def route(self, x) -> int:
        """Leaf reached by a single point: left iff projection < threshold."""
        x = np.asarray(x, dtype=np.float64).reshape(1, -1)
        if x.shape[1] != self.p:
            raise ValueError(f"tree expects {self.p} features, got {x.shape[1]}")
        return int(self.apply(x)[0])

    def apply(self, X) -> np.ndarray:
        """Leaf index for every row of ``X``."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.p:
            raise ValueError(f"tree expects {self.p} features, got shape {X.shape}")
        out = np.empty(X.shape[0], dtype=np.int64)
        stack = [(0, np.arange(X.shape[0]))]
        while stack:
            node, idx = stack.pop()
            if self.is_leaf(node):
                out[idx] = node
                continue
            if idx.size == 0:
                continue
            z = project(self.weights[node], X, idx)[:, 0]
            go_left = z < self.threshold[node]
            stack.append((self.right[node], idx[~go_left]))
            stack.append((self.left[node], idx[go_left]))
        return out

    def to_dict(self) -> dict:
        return {
            "left": self.left,
            "right": self.right,
            "threshold": [None if math.isnan(t) else t for t in self.threshold],
            "projection": [None if w is None else w.triplets() for w in self.weights],
            "members": [None if m is None else [int(i) for i in m] for m in self.members],
        }

    @classmethod
    def from_dict(cls, p: int, d: dict) -> "Tree":
        tree = cls(p)
        tree.left = list(d["left"])
        tree.right = list(d["right"])
        tree.threshold = [math.nan if t is None else float(t) for t in d["threshold"]]
        tree.weights = [None if w is None else SparseProjection.from_triplets(p, 1, w) for w in d["projection"]]
        tree.members = [None if m is None else np.asarray(m, dtype=np.int64) for m in d["members"]]
        return tree


def _partition(XT, ids, start, stop, go_left):
    """Reorder columns ``start:stop`` so that points going left come first.

    Only misplaced columns are swapped, so peeling a few points off a large
    node is cheap.  Returns the boundary position.
    """
    mid = start + int(np.count_nonzero(go_left))
    stray_right = start + np.flatnonzero(~go_left[: mid - start])
    stray_left = mid + np.flatnonzero(go_left[mid - start :])
    if stray_right.size:
        XT[:, np.concatenate([stray_right, stray_left])] = XT[:, np.concatenate([stray_left, stray_right])]
        ids[stray_right], ids[stray_left] = ids[stray_left], ids[stray_right].copy()
    return mid


def build_tree(X, sample_ids, cfg: ForestConfig, rng: np.random.Generator, em_config: EMConfig | None = None) -> Tree:
    """Grow one unsupervised randomer tree on ``X[sample_ids]``.

    A node becomes a leaf when it holds fewer than ``cfg.minparent`` points
    or none of its ``mtry`` sparse projections admits a split.  Nodes are
    expanded depth first, left child before right, so the random stream is
    consumed in a fixed order.  Points go left iff their projection is
    strictly below the threshold.
    """
    X = np.asarray(X, dtype=np.float64)
    ids = np.array(sample_ids, dtype=np.int64)
    if ids.size < 1:
        raise ValueError("a tree needs at least one sample")
    p = X.shape[1]
    d = cfg.resolve_mtry(p)
    min_leaf = cfg.resolve_min_leaf()
    # node points occupy a contiguous column block of this working copy
    XT = np.ascontiguousarray(X[ids].T)
    tree = Tree(p)
    stack = [(tree._new_node(), 0, ids.size)]
    while stack:
        node, start, stop = stack.pop()
        split = None
        if stop - start >= cfg.minparent:
            A = sample_projection(p, d, cfg.sparsity, rng)
            Z = project_transposed(A, XT, start, stop).T
            split = best_split_columns(Z, cfg.criterion, min_leaf, em_config)
        if split is not None:
            col, cand = split
            go_left = Z[:, col] < cand.split_point
            if go_left.all() or not go_left.any():
                split = None
        if split is None:
            tree.members[node] = np.sort(ids[start:stop])
            continue
        tree.weights[node] = A.column(col)
        tree.threshold[node] = cand.split_point
        mid = _partition(XT, ids, start, stop, go_left)
        left, right = tree._new_node(), tree._new_node()
        tree.left[node], tree.right[node] = left, right
        stack.append((right, mid, stop))
        stack.append((left, start, mid))
    return tree


@dataclass
class ProximityMatrix:
    """Pair co-occurrence counts and their per-pair denominators.

    ``similarity`` is ``counts / totals``; pairs with a zero denominator
    (possible only in in-bag mode) are 0 and reported by ``unsupported``.
    Matrices built from disjoint tree sets combine with ``+``.
    """

    counts: np.ndarray
    totals: np.ndarray

    @property
    def n(self) -> int:
        return self.counts.shape[0]

    @property
    def unsupported(self) -> np.ndarray:
        return self.totals == 0

    @property
    def similarity(self) -> np.ndarray:
        S = np.zeros(self.counts.shape)
        ok = self.totals > 0
        S[ok] = self.counts[ok] / self.totals[ok]
        return S

    def __add__(self, other: "ProximityMatrix") -> "ProximityMatrix":
        if self.counts.shape != other.counts.shape:
            raise ValueError("proximity matrices cover different point sets")
        return ProximityMatrix(self.counts + other.counts, self.totals + other.totals)

    @classmethod
    def zeros(cls, n: int) -> "ProximityMatrix":
        return cls(np.zeros((n, n), dtype=np.int64), np.zeros((n, n), dtype=np.int64))


def accumulate_leaves(counts: np.ndarray, leaf_of: np.ndarray, ids: np.ndarray | None = None) -> None:
    """Add one to ``counts[i, j]`` for every pair sharing a leaf.

    Work is proportional to the sum of squared leaf sizes.
    """
    if ids is None:
        ids = np.arange(leaf_of.size)
    order = np.argsort(leaf_of, kind="stable")
    bounds = np.flatnonzero(np.diff(leaf_of[order])) + 1
    for group in np.split(ids[order], bounds):
        counts[np.ix_(group, group)] += 1


class Forest:
    """An ensemble of unsupervised randomer trees.

    Tree ``t`` draws its subsample (without replacement) and all node
    projections from ``tree_rng(seed, t)``, so the first trees of a larger
    forest are identical to those of a smaller one with the same seed, and
    the result does not depend on ``n_jobs``.
    """

    def __init__(self, config: ForestConfig | None = None, em_config: EMConfig | None = None, n_jobs: int = 1):
        self.config = config or ForestConfig()
        self.em_config = em_config
        self.n_jobs = n_jobs
        self.trees: list[Tree] = []
        self.in_bag: list[np.ndarray] = []
        self.n_samples = 0
        self.n_features = 0
        self.timings: list[float] = []

    def fit(self, X) -> "Forest":
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] < 2:
            raise ValueError(f"need an N x p matrix with N >= 2, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("data contain non-finite values")
        m = self.config.resolve_subsample(X.shape[0])
        self.n_samples, self.n_features = X.shape
        with ThreadPoolExecutor(max_workers=max(1, self.n_jobs)) as pool:
            built = list(pool.map(lambda t: self._grow(X, m, t), range(self.config.n_trees)))
        self.trees = [b[0] for b in built]
        self.in_bag = [b[1] for b in built]
        self.timings = [b[2] for b in built]
        return self

    def _grow(self, X, m, t):
        start = time.perf_counter()
        rng = tree_rng(self.config.seed, t)
        ids = np.sort(rng.choice(X.shape[0], size=m, replace=False))
        tree = build_tree(X, ids, self.config, rng, self.em_config)
        elapsed = time.perf_counter() - start
        log.debug("tree %d: %d nodes, %.3fs", t, tree.n_nodes, elapsed)
        return tree, ids, elapsed

    def apply(self, X) -> np.ndarray:
        """Leaf index of every row in every tree, shape ``(n_trees, N)``."""
        return np.stack([tree.apply(X) for tree in self.trees])

    def proximity(self, X, mode: str | None = None, trees=None) -> ProximityMatrix:
        """Proximity counts over the training matrix ``X``.

        ``mode="all"`` routes every point down every tree (denominator T for
        all pairs); ``mode="inbag"`` only counts trees holding both points in
        their subsample.  ``trees`` restricts the computation to a subset of
        tree indices.
        """
        X = np.asarray(X, dtype=np.float64)
        mode = mode or self.config.proximity_mode
        if X.shape != (self.n_samples, self.n_features):
            raise ValueError(f"proximity needs the training matrix of shape {(self.n_samples, self.n_features)}")
        prox = ProximityMatrix.zeros(X.shape[0])
        for t in range(len(self.trees)) if trees is None else trees:
            tree = self.trees[t]
            if mode == ALL_POINTS:
                accumulate_leaves(prox.counts, tree.apply(X))
                prox.totals += 1
            elif mode == IN_BAG:
                ids = self.in_bag[t]
                accumulate_leaves(prox.counts, tree.apply(X[ids]), ids)
                prox.totals[np.ix_(ids, ids)] += 1
            else:
                raise ValueError(f"unknown proximity mode {mode!r}")
        return prox

    def leaf_sizes(self, X) -> np.ndarray:
        leaves = self.apply(X)
        return np.concatenate([np.unique(row, return_counts=True)[1] for row in leaves])

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "config": asdict(self.config),
            "n_samples": self.n_samples,
            "n_features": self.n_features,
            "trees": [
                dict(tree.to_dict(), in_bag=[int(i) for i in ids])
                for tree, ids in zip(self.trees, self.in_bag)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Forest":
        if d.get("format") != FORMAT_NAME:
            raise ValueError("not a serialized forest")
        if d.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported forest format version {d.get('version')}")
        forest = cls(ForestConfig(**d["config"]))
        forest.n_samples = int(d["n_samples"])
        forest.n_features = int(d["n_features"])
        forest.trees = [Tree.from_dict(forest.n_features, t) for t in d["trees"]]
        forest.in_bag = [np.asarray(t["in_bag"], dtype=np.int64) for t in d["trees"]]
        return forest

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, separators=(",", ":"))
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Forest":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))
