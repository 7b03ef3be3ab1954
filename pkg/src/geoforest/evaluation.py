"""Geodesic precision and recall of neighbour rankings against a latent oracle."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .synthdata import CONTINUOUS, GeodesicOracle

PROXIMITY = "proximity"
EUCLIDEAN = "euclidean"
EXTERNAL = "external"


class NeighborRanking:
    """Total order of all other points for every query point.

    ``scores`` is an N x N matrix; with ``higher_is_nearer`` it is a
    similarity (e.g. forest proximity), otherwise a distance.  Ties are
    broken by ascending index.
    """

    def __init__(self, scores, higher_is_nearer: bool, source: str = EXTERNAL):
        scores = np.asarray(scores, dtype=np.float64)
        if scores.ndim != 2 or scores.shape[0] != scores.shape[1]:
            raise ValueError(f"ranking needs a square matrix, got shape {scores.shape}")
        if scores.shape[0] < 2:
            raise ValueError("ranking needs at least two points")
        self.scores = scores
        self.higher_is_nearer = higher_is_nearer
        self.source = source

    @property
    def n(self) -> int:
        return self.scores.shape[0]

    def _keys(self, rows):
        keys = -self.scores[rows] if self.higher_is_nearer else self.scores[rows].copy()
        keys[np.arange(len(rows)), rows] = np.inf
        return keys

    def order(self, i: int) -> np.ndarray:
        """All ``j != i`` from nearest to farthest."""
        keys = self._keys(np.array([i]))[0]
        return np.argsort(keys, kind="stable")[: self.n - 1]

    def top_k(self, k: int) -> np.ndarray:
        """``(N, k)`` array of each query's k nearest neighbours."""
        _check_k(k, self.n)
        keys = self._keys(np.arange(self.n))
        return np.argsort(keys, axis=1, kind="stable")[:, :k]


def _check_k(k, n):
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must lie in [1, {n - 1}], got {k}")


def proximity_ranking(S) -> NeighborRanking:
    return NeighborRanking(S, higher_is_nearer=True, source=PROXIMITY)


def euclidean_ranking(X) -> NeighborRanking:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError(f"need an N x p matrix with N >= 2, got shape {X.shape}")
    # squared distances give the same order and skip the square root
    return NeighborRanking(squareform(pdist(X, "sqeuclidean")), higher_is_nearer=False, source=EUCLIDEAN)


def distance_ranking(D, source: str = EXTERNAL) -> NeighborRanking:
    return NeighborRanking(D, higher_is_nearer=False, source=source)


def retrieved_neighbors(ranking: NeighborRanking, i: int, k: int) -> set[int]:
    _check_k(k, ranking.n)
    return {int(j) for j in ranking.order(i)[:k]}


def true_neighbors(oracle: GeodesicOracle, i: int, k: int | None = None) -> set[int]:
    """Relevant set of query ``i``.

    Continuous oracles: the ``k`` geodesically nearest points (ties by index).
    Discrete oracles: every other member of ``i``'s component; ``k`` is ignored.
    """
    if oracle.kind == CONTINUOUS:
        _check_k(k, oracle.n)
        d = oracle.distances_from(i)
        d[i] = np.inf
        return {int(j) for j in np.argsort(d, kind="stable")[:k]}
    if k is not None and k >= oracle.n:
        raise ValueError(f"k must be < N={oracle.n}, got {k}")
    labels = oracle.labels
    members = np.flatnonzero(labels == labels[i])
    return {int(j) for j in members if j != i}


def chance_level(oracle: GeodesicOracle, k: int) -> float:
    """Expected score of a uniformly random ranking.

    ``k / (N - 1)`` for continuous oracles, and the probability that a random
    other point shares the query's component for discrete ones.
    """
    n = oracle.n
    if oracle.kind == CONTINUOUS:
        return k / (n - 1)
    _, sizes = np.unique(oracle.labels, return_counts=True)
    return float(np.sum(sizes / n * (sizes - 1) / (n - 1)))


@dataclass(frozen=True)
class PRPoint:
    k: int
    precision: float
    recall: float
    chance: float


def _hits(ranking: NeighborRanking, oracle: GeodesicOracle, k: int):
    """Per-query hit counts and relevant-set sizes."""
    if ranking.n != oracle.n:
        raise ValueError(f"ranking covers {ranking.n} points but the oracle covers {oracle.n}")
    n = ranking.n
    _check_k(k, n)
    retrieved = ranking.top_k(k)
    rows = np.arange(n)[:, None]
    if oracle.kind == CONTINUOUS:
        truth = distance_ranking(oracle.distance_matrix()).top_k(k)
        relevant = np.zeros((n, n), dtype=bool)
        relevant[rows, truth] = True
        return relevant[rows, retrieved].sum(axis=1), np.full(n, k)
    labels = oracle.labels
    hits = (labels[retrieved] == labels[:, None]).sum(axis=1)
    _, inverse, sizes = np.unique(labels, return_inverse=True, return_counts=True)
    return hits, sizes[inverse] - 1


def per_query_pr(ranking: NeighborRanking, oracle: GeodesicOracle, k: int):
    """Per-query ``(precision, recall)`` arrays; recall is NaN for singletons."""
    hits, n_relevant = _hits(ranking, oracle, k)
    with np.errstate(invalid="ignore", divide="ignore"):
        recall = np.where(n_relevant > 0, hits / np.maximum(n_relevant, 1), np.nan)
    return hits / k, recall


def geodesic_pr(ranking: NeighborRanking, oracle: GeodesicOracle, k: int) -> PRPoint:
    """Mean geodesic precision and recall at ``k`` over all query points.

    Queries in singleton components have no relevant set: they count toward
    the precision mean (as 0) but are left out of the recall mean.  Means
    are computed as exact fractions and rounded once, so identities such as
    recall = k / (N - 1) hold exactly.
    """
    hits, n_relevant = _hits(ranking, oracle, k)
    precision = Fraction(int(hits.sum()), hits.size * k)
    valid = n_relevant > 0
    if valid.any():
        total = sum(
            (Fraction(int(hits[valid & (n_relevant == m)].sum()), int(m)) for m in np.unique(n_relevant[valid])),
            Fraction(0),
        )
        recall = float(total / int(valid.sum()))
    else:
        recall = float("nan")
    return PRPoint(int(k), float(precision), recall, chance_level(oracle, k))


def pr_curve(ranking: NeighborRanking, oracle: GeodesicOracle, k_list) -> list[PRPoint]:
    return [geodesic_pr(ranking, oracle, k) for k in sorted(int(k) for k in k_list)]
