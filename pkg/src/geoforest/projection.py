"""Sparse random {-1, +1} projections used as candidate split axes.

Every projected value is accumulated in ascending feature (row) order,
starting from 0.0, whichever entry point computes it.  Because the weights
are +-1 the products are exact, so the same point always projects to the
same float, whether it is scored inside a tree node or routed later.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

MAX_REJECTIONS = 100


@dataclass(frozen=True)
class SparseProjection:
    """A ``p x d`` matrix with +-1 entries, stored as triplets sorted by (row, col)."""

    p: int
    d: int
    rows: np.ndarray
    cols: np.ndarray
    signs: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        cols = np.asarray(self.cols, dtype=np.int64)
        signs = np.asarray(self.signs, dtype=np.float64)
        if rows.size and (rows.min() < 0 or rows.max() >= self.p or cols.min() < 0 or cols.max() >= self.d):
            raise ValueError("projection entry outside the p x d matrix")
        key = rows * self.d + cols
        if key.size > 1 and not np.all(key[1:] > key[:-1]):
            order = np.argsort(key, kind="stable")
            rows, cols, signs = rows[order], cols[order], signs[order]
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "signs", signs)

    @property
    def nnz(self) -> int:
        return int(self.rows.size)

    def column(self, i: int) -> "SparseProjection":
        keep = self.cols == i
        return SparseProjection(self.p, 1, self.rows[keep], np.zeros(int(keep.sum()), dtype=np.int64), self.signs[keep])

    def dense(self) -> np.ndarray:
        A = np.zeros((self.p, self.d))
        A[self.rows, self.cols] = self.signs
        return A

    def triplets(self) -> list[tuple[int, int, int]]:
        return [(int(r), int(c), int(s)) for r, c, s in zip(self.rows, self.cols, self.signs)]

    @classmethod
    def from_triplets(cls, p: int, d: int, triplets) -> "SparseProjection":
        t = np.asarray(list(triplets), dtype=np.int64).reshape(-1, 3)
        if t.size and not np.all(np.abs(t[:, 2]) == 1):
            raise ValueError("projection weights must be -1 or +1")
        return cls(p, d, t[:, 0], t[:, 1], t[:, 2].astype(np.float64))

    def row_pointer(self) -> np.ndarray:
        return np.searchsorted(self.rows, np.arange(self.p + 1))


def n_nonzero(p: int, d: int, sparsity: float) -> int:
    return max(1, math.ceil(sparsity * p * d))


def sample_projection(p: int, d: int, sparsity: float, rng: np.random.Generator) -> SparseProjection:
    """Draw ``max(1, ceil(sparsity*p*d))`` signed entries at distinct positions.

    Positions are drawn without replacement.  When a draw leaves a column
    empty it is redrawn (up to ``MAX_REJECTIONS`` times); if that is not
    enough, or there are fewer entries than columns, each empty column gets
    one extra entry at a uniform row.
    """
    if p < 1 or d < 1:
        raise ValueError(f"need p >= 1 and d >= 1, got p={p}, d={d}")
    if not 0 < sparsity <= 1:
        raise ValueError(f"sparsity must lie in (0, 1], got {sparsity}")
    k = n_nonzero(p, d, sparsity)
    tries = MAX_REJECTIONS if k >= d else 1
    for _ in range(tries):
        pos = np.sort(rng.choice(p * d, size=k, replace=False))
        rows, cols = pos // d, pos % d
        empty = np.flatnonzero(np.bincount(cols, minlength=d) == 0)
        if empty.size == 0:
            break
    if empty.size:
        rows = np.concatenate([rows, rng.integers(0, p, size=empty.size)])
        cols = np.concatenate([cols, empty])
    signs = np.where(rng.random(rows.size) < 0.5, -1.0, 1.0)
    return SparseProjection(p, d, rows, cols, signs)


@njit(cache=True, nogil=True)
def _accumulate(XT, start, stop, rptr, cols, signs, out):
    # out[c, k] = sum over rows r (ascending) of A[r, c] * XT[r, start + k]
    n = stop - start
    out[:, :] = 0.0
    for r in range(rptr.size - 1):
        lo = rptr[r]
        hi = rptr[r + 1]
        if lo == hi:
            continue
        xr = XT[r, start:stop]
        for jj in range(lo, hi):
            o = out[cols[jj]]
            s = signs[jj]
            for k in range(n):
                o[k] += s * xr[k]


def project_transposed(A: SparseProjection, XT: np.ndarray, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Project the points stored as columns ``start:stop`` of ``XT`` (p x N).

    Returns a ``d x n`` array.  This is the hot path of tree growing, where
    a node's points occupy a contiguous column block.
    """
    if XT.shape[0] != A.p:
        raise ValueError(f"projection expects {A.p} features, got {XT.shape[0]}")
    stop = XT.shape[1] if stop is None else stop
    out = np.empty((A.d, stop - start))
    _accumulate(XT, start, stop, A.row_pointer(), A.cols, A.signs, out)
    return out


def project(A: SparseProjection, X: np.ndarray, index=None) -> np.ndarray:
    """Return ``X[index] @ A`` (``N x d``).

    Only the features that ``A`` touches are gathered, so routing a few
    points through one sparse column does not copy whole rows of ``X``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != A.p:
        raise ValueError(f"projection expects {A.p} features, got shape {X.shape}")
    used = np.unique(A.rows)
    rows = np.asarray(index if index is not None else np.arange(X.shape[0]), dtype=np.int64)
    XT = np.ascontiguousarray(X[np.ix_(rows, used)].T)
    local = SparseProjection(used.size, A.d, np.searchsorted(used, A.rows), A.cols, A.signs)
    return project_transposed(local, XT).T
