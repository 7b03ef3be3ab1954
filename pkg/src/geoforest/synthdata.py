"""Benchmark manifolds with exact geodesic oracles.

Four settings are provided (linear segment, helix, sphere grid and a
three-component Gaussian mixture), each returning the observed point matrix
together with a :class:`GeodesicOracle` that knows the true latent structure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SPHERE_RADIUS = 9.0
LINEAR_DIRECTION = np.array([4.0, 6.0, 9.0])
HELIX_RANGE = (2 * math.pi, 9 * math.pi)
GMM_WEIGHTS = (0.3, 0.3, 0.4)
GMM_MEANS = np.array([[-3.0, -3.0, -3.0], [0.0, 0.0, 0.0], [3.0, 3.0, 3.0]])

CONTINUOUS = "continuous"
DISCRETE = "discrete"

# distance rules understood by GeodesicOracle
RULES = ("linear", "helix", "sphere", "absolute", "components")


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian noise dimensions appended to a dataset."""

    extra_dims: int = 0
    variance: float = 70.0
    seed: int = 0

    def __post_init__(self):
        if self.extra_dims < 0:
            raise ValueError(f"extra_dims must be >= 0, got {self.extra_dims}")
        if not self.variance > 0:
            raise ValueError(f"variance must be > 0, got {self.variance}")


@dataclass
class GeodesicOracle:
    """Ground-truth latent structure of a dataset.

    ``params`` holds one row per point: ``t`` for curves, ``(u, v)`` for the
    sphere, or the integer component label for discrete oracles.  ``rule``
    names the closed-form distance used for continuous oracles.
    """

    kind: str
    rule: str
    params: np.ndarray
    radius: float = 1.0
    scale: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, DISCRETE):
            raise ValueError(f"unknown oracle kind {self.kind!r}")
        if self.rule not in RULES:
            raise ValueError(f"unknown distance rule {self.rule!r}")
        params = np.asarray(self.params)
        if self.kind == DISCRETE:
            params = params.astype(np.int64).reshape(-1)
        else:
            params = params.astype(np.float64)
            if params.ndim == 1:
                params = params[:, None]
        self.params = params

    @property
    def n(self) -> int:
        return self.params.shape[0]

    @property
    def labels(self) -> np.ndarray:
        if self.kind != DISCRETE:
            raise ValueError("continuous oracle has no component labels")
        return self.params

    def same_component(self, i: int, j: int) -> bool:
        return bool(self.labels[i] == self.labels[j])

    def distances_from(self, i: int, idx=None) -> np.ndarray:
        """Geodesic distances from point ``i`` to ``idx`` (default: all points)."""
        if self.kind != CONTINUOUS:
            raise ValueError("discrete oracle has no finite distances")
        q = self.params if idx is None else self.params[np.asarray(idx)]
        return self._dist(self.params[i][None, :], q)[0]

    def distance(self, i: int, j: int) -> float:
        return float(self.distances_from(i, [j])[0])

    def distance_matrix(self) -> np.ndarray:
        if self.kind != CONTINUOUS:
            raise ValueError("discrete oracle has no finite distances")
        return self._dist(self.params, self.params)

    def _dist(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if self.rule in ("linear", "absolute"):
            return np.abs(a[:, :1] - b[:, 0][None, :]) * self.scale
        if self.rule == "helix":
            fa, fb = helix_arclength(a[:, 0]), helix_arclength(b[:, 0])
            return np.abs(fa[:, None] - fb[None, :])
        if self.rule == "sphere":
            ua, ub = _unit_sphere(a[:, 0], a[:, 1]), _unit_sphere(b[:, 0], b[:, 1])
            # arccos of the clipped cosine, evaluated via atan2 to stay exact near 0 and pi
            cos = np.clip(ua @ ub.T, -1.0, 1.0)
            sin = np.linalg.norm(np.cross(ua[:, None, :], ub[None, :, :]), axis=2)
            return self.radius * np.arctan2(sin, cos)
        raise ValueError(f"rule {self.rule!r} has no distance")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "rule": self.rule,
            "radius": self.radius,
            "scale": self.scale,
            "params": self.params.tolist(),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GeodesicOracle":
        return cls(
            kind=d["kind"],
            rule=d["rule"],
            params=np.asarray(d["params"]),
            radius=float(d.get("radius", 1.0)),
            scale=float(d.get("scale", 1.0)),
            meta=dict(d.get("meta", {})),
        )


def helix_arclength(t):
    """Antiderivative of the helix speed sqrt(2 + t^2)."""
    t = np.asarray(t, dtype=np.float64)
    root = np.sqrt(t * t + 2.0)
    return 0.5 * t * root + np.log(t + root)


def helix_speed(t):
    t = np.asarray(t, dtype=np.float64)
    return np.sqrt(2.0 + t * t)


def _unit_sphere(u, v):
    return np.stack([np.cos(u) * np.sin(v), np.sin(u) * np.sin(v), np.cos(v)], axis=1)


def open_grid(a: float, b: float, n: int) -> np.ndarray:
    """``n`` cell midpoints of ``(a, b)``; endpoints are never hit."""
    return a + (b - a) * (np.arange(n) + 0.5) / n


def gen_linear(n: int):
    if n < 2:
        raise ValueError(f"linear manifold needs n >= 2, got {n}")
    t = open_grid(0.0, 1.0, n)
    X = t[:, None] * LINEAR_DIRECTION[None, :]
    scale = float(np.sqrt(np.sum(LINEAR_DIRECTION**2)))
    return X, GeodesicOracle(CONTINUOUS, "linear", t, scale=scale, meta={"dataset": "linear"})


def gen_helix(n: int):
    if n < 2:
        raise ValueError(f"helix needs n >= 2, got {n}")
    t = open_grid(*HELIX_RANGE, n)
    X = np.stack([t * np.cos(t), t * np.sin(t), t], axis=1)
    return X, GeodesicOracle(CONTINUOUS, "helix", t, meta={"dataset": "helix"})


def sphere_grid_shape(n: int) -> tuple[int, int]:
    """Factor ``n`` as ``n_u * n_v`` with ``n_u`` nearest ``ceil(sqrt(2n))``.

    Both factors must be at least 2; ties go to the smaller ``n_u``.
    """
    if n < 4:
        raise ValueError(f"sphere needs n >= 4, got {n}")
    target = math.ceil(math.sqrt(2 * n))
    feasible = [a for a in range(2, n // 2 + 1) if n % a == 0]
    if not feasible:
        raise ValueError(f"sphere needs n decomposable into a u x v grid, {n} is prime")
    n_u = min(feasible, key=lambda a: (abs(a - target), a))
    return n_u, n // n_u


def gen_sphere(n: int):
    n_u, n_v = sphere_grid_shape(n)
    u = open_grid(0.0, 2 * math.pi, n_u)
    v = open_grid(0.0, math.pi, n_v)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    uv = np.stack([uu.ravel(), vv.ravel()], axis=1)
    X = SPHERE_RADIUS * _unit_sphere(uv[:, 0], uv[:, 1])
    oracle = GeodesicOracle(
        CONTINUOUS, "sphere", uv, radius=SPHERE_RADIUS,
        meta={"dataset": "sphere", "grid": [n_u, n_v]},
    )
    return X, oracle


def gen_gmm(n: int, seed: int = 0):
    if n < 3:
        raise ValueError(f"gmm needs n >= 3, got {n}")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    labels = rng.choice(len(GMM_WEIGHTS), size=n, p=GMM_WEIGHTS)
    X = GMM_MEANS[labels] + rng.standard_normal((n, GMM_MEANS.shape[1]))
    return X, GeodesicOracle(DISCRETE, "components", labels, meta={"dataset": "gmm"})


GENERATORS = {
    "linear": lambda n, seed=0: gen_linear(n),
    "helix": lambda n, seed=0: gen_helix(n),
    "sphere": lambda n, seed=0: gen_sphere(n),
    "gmm": gen_gmm,
}


def generate(name: str, n: int, seed: int = 0):
    try:
        gen = GENERATORS[name]
    except KeyError:
        raise ValueError(f"unknown dataset {name!r}; choose from {sorted(GENERATORS)}") from None
    return gen(n, seed)


def add_noise(X: np.ndarray, spec: NoiseSpec) -> np.ndarray:
    """Append ``spec.extra_dims`` i.i.d. Normal(0, variance) columns."""
    X = np.asarray(X, dtype=np.float64)
    if spec.extra_dims == 0:
        return X.copy()
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(1,)))
    noise = rng.standard_normal((X.shape[0], spec.extra_dims))
    noise *= math.sqrt(spec.variance)
    return np.hstack([X, noise])


def rescale01(X: np.ndarray) -> np.ndarray:
    """Linearly map each column onto [0, 1]; constant columns become 0."""
    X = np.asarray(X, dtype=np.float64)
    lo = X.min(axis=0)
    span = X.max(axis=0) - lo
    out = np.zeros_like(X)
    ok = span > 0
    out[:, ok] = (X[:, ok] - lo[ok]) / span[ok]
    return out
