"""One-dimensional split criteria: exact two-means, Fast-BIC and EM-fitted 2-GMM BIC.

All criteria take an unsorted sample ``z`` and return a :class:`SplitCandidate`
(or ``None`` when no admissible split exists).  Lower scores are better.

The two scan criteria share one pass over sorted data:

* values are shifted by the sorted element at position ``n // 2`` to limit
  cancellation in ``sum(x^2) - sum(x)^2 / n``;
* left-cluster sums are accumulated in ascending sorted order and
  right-cluster sums in descending sorted order (``numpy.cumsum`` is a
  sequential accumulation, so an explicit loop in the same order reproduces
  every partial sum bit for bit);
* a split after position ``s`` (``s`` points on the left) is admissible when
  ``min_leaf <= s <= n - min_leaf`` and ``z_(s) < z_(s+1)``.

Both are vectorised over columns so a tree node can score all candidate
projections at once; the 1-D functions are thin wrappers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_MEANS = "twomeans"
FASTBIC_SAME = "fastbic-samevar"
FASTBIC_DIFF = "fastbic-diffvar"
EM_BIC = "embic"

CRITERIA = ("twomeans", "fastbic", "embic")
DEFAULT_MIN_LEAF = {"twomeans": 1, "fastbic": 2, "embic": 1}

LOG_2PI = math.log(2 * math.pi)
PARAMS_DIFF_VAR = 5
PARAMS_SAME_VAR = 4


@dataclass(frozen=True)
class SplitCandidate:
    split_point: float
    score: float
    model: str
    left_count: int
    converged: bool = True


@dataclass(frozen=True)
class EMConfig:
    max_iter: int = 100
    tol: float = 1e-6
    init_quantiles: tuple = ((0.25, 0.75), (0.10, 0.90), (0.40, 0.60))


@dataclass(frozen=True)
class MixtureFit:
    """Two-component 1-D Gaussian mixture fitted by EM."""

    loglik: float
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    converged: bool


def variance_floor(value_range):
    return 1e-12 * value_range * value_range + 1e-300


def _check(z, min_leaf):
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if min_leaf < 1:
        raise ValueError(f"min_leaf must be >= 1, got {min_leaf}")
    if z.size < 2 * min_leaf:
        raise ValueError(f"need at least {2 * min_leaf} values for min_leaf={min_leaf}, got {z.size}")
    return z


def _scan_sums(zs):
    """Prefix/suffix sums for every split of column-sorted ``zs`` (n x d).

    Returns arrays of shape ``(n - 1, d)`` indexed by ``s - 1``.
    """
    n = zs.shape[0]
    y = zs - zs[n // 2]
    yy = y * y
    left = np.cumsum(y, axis=0)[:-1]
    left_sq = np.cumsum(yy, axis=0)[:-1]
    right = np.cumsum(y[::-1], axis=0)[::-1][1:]
    right_sq = np.cumsum(yy[::-1], axis=0)[::-1][1:]
    return left, left_sq, right, right_sq


def _admissible(zs, min_leaf):
    n = zs.shape[0]
    s = np.arange(1, n)[:, None]
    return (zs[:-1] < zs[1:]) & (s >= min_leaf) & (s <= n - min_leaf)


def _split_points(zs, idx, cols):
    lo, hi = zs[idx, cols], zs[idx + 1, cols]
    mid = 0.5 * (lo + hi)
    # adjacent floats can round the midpoint down onto the left value
    return np.where(mid > lo, mid, hi)


def two_means_columns(zs, min_leaf=1):
    """Best two-means split per column of sorted ``zs``.

    Returns ``(score, left_count, split_point)`` arrays of length d; columns
    with no admissible split get ``score = inf`` and ``left_count = 0``.
    """
    n, d = zs.shape
    left, left_sq, right, right_sq = _scan_sums(zs)
    s = np.arange(1, n, dtype=np.float64)[:, None]
    sse = np.maximum(left_sq - left * left / s, 0.0) + np.maximum(right_sq - right * right / (n - s), 0.0)
    sse = np.where(_admissible(zs, min_leaf), sse, np.inf)
    return _pick(zs, sse)


def _pick(zs, table):
    d = zs.shape[1]
    cols = np.arange(d)
    idx = np.argmin(table, axis=0)
    score = table[idx, cols]
    ok = np.isfinite(score)
    split = np.full(d, np.nan)
    split[ok] = _split_points(zs, idx[ok], cols[ok])
    counts = np.where(ok, idx + 1, 0)
    score = np.where(ok, score, np.inf)
    return score, counts, split


def fastbic_tables(zs, min_leaf=2):
    """Per-split BIC tables ``(same_var, diff_var)`` for sorted columns ``zs``.

    Entry ``[s - 1, c]`` is the BIC of the hard two-cluster model that puts
    the ``s`` smallest values of column ``c`` on the left; inadmissible
    splits are ``inf``.  The additive ``n/2`` likelihood constant is dropped.
    """
    n, d = zs.shape
    left, left_sq, right, right_sq = _scan_sums(zs)
    n1 = np.arange(1, n, dtype=np.float64)[:, None]
    n2 = n - n1
    floor = variance_floor(zs[-1] - zs[0])
    sse1 = np.maximum(left_sq - left * left / n1, 0.0)
    sse2 = np.maximum(right_sq - right * right / n2, 0.0)
    var1 = np.maximum(sse1 / n1, floor)
    var2 = np.maximum(sse2 / n2, floor)
    pooled = np.maximum((sse1 + sse2) / n, floor)
    weights = n1 * np.log(n1 / n) + n2 * np.log(n2 / n)
    log_n = math.log(n)
    diff = -2.0 * (weights - 0.5 * n1 * (LOG_2PI + np.log(var1)) - 0.5 * n2 * (LOG_2PI + np.log(var2)))
    diff = diff + log_n * PARAMS_DIFF_VAR
    same = -2.0 * (weights - 0.5 * n * (LOG_2PI + np.log(pooled)))
    same = same + log_n * PARAMS_SAME_VAR
    ok = _admissible(zs, min_leaf)
    return np.where(ok, same, np.inf), np.where(ok, diff, np.inf)


def fastbic_columns(zs, min_leaf=2):
    """Best Fast-BIC split per sorted column.

    Returns ``(score, left_count, split_point, diff_var)``; at equal score
    the same-variance model wins.
    """
    same, diff = fastbic_tables(zs, min_leaf)
    use_diff = diff < same
    table = np.where(use_diff, diff, same)
    score, counts, split = _pick(zs, table)
    cols = np.arange(zs.shape[1])
    chose_diff = use_diff[np.maximum(counts - 1, 0), cols] & (counts > 0)
    return score, counts, split, chose_diff


def two_means_1d(z, min_leaf=1):
    """Exact 1-D two-means split; ``None`` when every value is equal."""
    z = _check(z, min_leaf)
    zs = np.sort(z)[:, None]
    score, counts, split = two_means_columns(zs, min_leaf)
    if counts[0] == 0:
        return None
    return SplitCandidate(float(split[0]), float(score[0]), TWO_MEANS, int(counts[0]))


def fast_bic_1d(z, min_leaf=2):
    """Fast-BIC: exact minimum-BIC hard split under a two-Gaussian model.

    Both the shared-variance (4 parameters) and separate-variance
    (5 parameters) models are scored at every admissible split; the lowest
    penalised score over splits and models is returned.
    """
    z = _check(z, min_leaf)
    zs = np.sort(z)[:, None]
    score, counts, split, diff = fastbic_columns(zs, min_leaf)
    if counts[0] == 0:
        return None
    model = FASTBIC_DIFF if diff[0] else FASTBIC_SAME
    return SplitCandidate(float(split[0]), float(score[0]), model, int(counts[0]))


def _gauss_logpdf(x, mean, var):
    return -0.5 * (LOG_2PI + np.log(var) + (x - mean) ** 2 / var)


def _em_fit(z, means, var, cfg, floor):
    w = np.array([0.5, 0.5])
    mu = np.asarray(means, dtype=np.float64)
    sig2 = np.array([var, var], dtype=np.float64)
    prev = -np.inf
    converged = False
    n = z.size
    for _ in range(cfg.max_iter):
        logp = np.stack([np.log(w[j]) + _gauss_logpdf(z, mu[j], sig2[j]) for j in range(2)], axis=1)
        top = logp.max(axis=1, keepdims=True)
        norm = top[:, 0] + np.log(np.exp(logp - top).sum(axis=1))
        loglik = float(norm.sum())
        resp = np.exp(logp - norm[:, None])
        nk = resp.sum(axis=0)
        if np.any(nk < 1e-10 * n):
            return None
        w = nk / n
        mu = (resp * z[:, None]).sum(axis=0) / nk
        sig2 = np.maximum((resp * (z[:, None] - mu) ** 2).sum(axis=0) / nk, floor)
        if abs(loglik - prev) <= cfg.tol * max(1.0, abs(loglik)):
            converged = True
            break
        prev = loglik
    logp = np.stack([np.log(w[j]) + _gauss_logpdf(z, mu[j], sig2[j]) for j in range(2)], axis=1)
    top = logp.max(axis=1)
    loglik = float((top + np.log(np.exp(logp - top[:, None]).sum(axis=1))).sum())
    return MixtureFit(loglik, w, mu, sig2, converged)


def equal_likelihood_point(w, mu, sig2):
    """Point between the two means where both weighted densities agree.

    Falls back to the midpoint of the means when no crossing lies between them.
    """
    (w1, w2), (m1, m2), (v1, v2) = w, mu, sig2
    a = 0.5 / v2 - 0.5 / v1
    b = m1 / v1 - m2 / v2
    c = m2 * m2 / (2 * v2) - m1 * m1 / (2 * v1) + math.log(w1 / w2) - 0.5 * math.log(v1 / v2)
    lo, hi = min(m1, m2), max(m1, m2)
    if abs(a) <= 1e-12 * (abs(b) + 1e-300) / max(abs(lo), abs(hi), 1.0):
        roots = [-c / b] if b != 0 else []
    else:
        disc = b * b - 4 * a * c
        if disc < 0:
            roots = []
        else:
            q = -0.5 * (b + math.copysign(math.sqrt(disc), b))
            roots = [q / a] + ([c / q] if q != 0 else [])
    inside = [r for r in roots if lo <= r <= hi]
    if inside:
        return min(inside, key=lambda r: abs(r - 0.5 * (lo + hi)))
    return 0.5 * (m1 + m2)


def fit_gmm_1d(z, config: EMConfig | None = None) -> MixtureFit | None:
    """EM fit of a two-component mixture; ``None`` for constant or collapsed fits.

    Each initialisation in ``config.init_quantiles`` seeds the means at a
    pair of sample quantiles (equal weights, global variance); the fit with
    the highest log-likelihood is kept.
    """
    cfg = config or EMConfig()
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    value_range = float(z.max() - z.min()) if z.size else 0.0
    if value_range == 0:
        return None
    floor = variance_floor(value_range)
    var = max(float(z.var()), floor)
    best = None
    for qa, qb in cfg.init_quantiles:
        fit = _em_fit(z, np.quantile(z, [qa, qb]), var, cfg, floor)
        if fit is not None and (best is None or fit.loglik > best.loglik):
            best = fit
    if best is None or best.means[0] == best.means[1]:
        return None
    return best


def em_gmm_bic_1d(z, min_leaf=1, config: EMConfig | None = None):
    """Two-component 1-D Gaussian mixture fitted by EM, scored by BIC.

    The threshold is where the two weighted component densities cross.
    """
    z = _check(z, min_leaf)
    n = z.size
    fit = fit_gmm_1d(z, config)
    if fit is None:
        return None
    split = equal_likelihood_point(fit.weights, fit.means, fit.variances)
    left = int(np.count_nonzero(z < split))
    if left < min_leaf or n - left < min_leaf:
        return None
    score = -2.0 * fit.loglik + math.log(n) * PARAMS_DIFF_VAR
    return SplitCandidate(float(split), score, EM_BIC, left, fit.converged)


def best_split_columns(Z, criterion, min_leaf=None, em_config=None):
    """Score every column of ``Z`` (n x d) and return ``(column, SplitCandidate)``.

    The lowest score wins; ties keep the earliest column.  Returns ``None``
    when no column admits a split.
    """
    if criterion not in CRITERIA:
        raise ValueError(f"unknown criterion {criterion!r}; choose from {CRITERIA}")
    if min_leaf is None:
        min_leaf = DEFAULT_MIN_LEAF[criterion]
    Z = np.asarray(Z, dtype=np.float64)
    if Z.shape[0] < 2 * min_leaf:
        return None
    if criterion == "embic":
        best = None
        for c in range(Z.shape[1]):
            cand = em_gmm_bic_1d(Z[:, c], min_leaf, em_config)
            if cand is not None and (best is None or cand.score < best[1].score):
                best = (c, cand)
        return best
    zs = np.sort(Z, axis=0)
    if criterion == "twomeans":
        score, counts, split = two_means_columns(zs, min_leaf)
        models = np.full(Z.shape[1], TWO_MEANS, dtype=object)
    else:
        score, counts, split, diff = fastbic_columns(zs, min_leaf)
        models = np.where(diff, FASTBIC_DIFF, FASTBIC_SAME)
    if not np.any(counts > 0):
        return None
    c = int(np.argmin(score))
    return c, SplitCandidate(float(split[c]), float(score[c]), str(models[c]), int(counts[c]))
