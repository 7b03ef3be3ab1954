"""CSV and JSON file formats.

Datasets are CSV with a header ``x1,...,xp`` followed by the latent columns
(``label``, ``t`` or ``u,v``), one point per row.  The oracle is written to a
``<data>.oracle.json`` sidecar holding its kind, distance rule and latent
parameters.  Numbers are written with 17 significant digits so files
round-trip exactly and reruns are byte-identical.
"""
from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

from .synthdata import CONTINUOUS, DISCRETE, GeodesicOracle

FLOAT_FMT = "%.17g"
PR_HEADER = ["method", "k", "precision", "recall", "chance"]


class OracleMismatchError(ValueError):
    """Data and oracle (or ranking) disagree on the number of points."""


def _fmt(x) -> str:
    return FLOAT_FMT % x


def sidecar_path(path) -> Path:
    return Path(f"{path}.oracle.json")


def latent_columns(oracle: GeodesicOracle) -> tuple[list[str], np.ndarray]:
    if oracle.kind == DISCRETE:
        return ["label"], oracle.labels[:, None]
    if oracle.rule == "sphere":
        return ["u", "v"], oracle.params
    return ["t"], oracle.params[:, :1]


def write_dataset(path, X, oracle: GeodesicOracle | None = None) -> None:
    X = np.asarray(X, dtype=np.float64)
    header = [f"x{i + 1}" for i in range(X.shape[1])]
    columns = [X]
    fmts = [FLOAT_FMT] * X.shape[1]
    if oracle is not None:
        if oracle.n != X.shape[0]:
            raise OracleMismatchError(f"oracle covers {oracle.n} points, data have {X.shape[0]}")
        names, values = latent_columns(oracle)
        header += names
        columns.append(values.astype(np.float64))
        fmts += ["%d" if oracle.kind == DISCRETE else FLOAT_FMT] * len(names)
    table = np.hstack(columns)
    _ensure_parent(path)
    np.savetxt(path, table, fmt=fmts, delimiter=",", header=",".join(header), comments="")
    if oracle is not None:
        with open(sidecar_path(path), "w") as fh:
            json.dump(oracle.to_dict(), fh, sort_keys=True)
            fh.write("\n")


def read_dataset(path):
    """Return ``(X, oracle)``; ``oracle`` is ``None`` when none can be built.

    The sidecar wins when present.  Otherwise a ``label`` column gives a
    discrete oracle, ``u,v`` a unit sphere and ``t`` an absolute-difference
    distance along a curve.
    """
    with open(path, newline="") as fh:
        header = next(csv.reader(fh))
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    latent = [c for c in header if c in ("label", "t", "u", "v")]
    feature_idx = [i for i, c in enumerate(header) if c not in latent]
    X = table[:, feature_idx]
    col = {c: table[:, header.index(c)] for c in latent}
    side = sidecar_path(path)
    if side.exists():
        with open(side) as fh:
            oracle = GeodesicOracle.from_dict(json.load(fh))
    elif "label" in col:
        oracle = GeodesicOracle(DISCRETE, "components", col["label"].astype(np.int64))
    elif "u" in col and "v" in col:
        oracle = GeodesicOracle(CONTINUOUS, "sphere", np.stack([col["u"], col["v"]], axis=1))
    elif "t" in col:
        oracle = GeodesicOracle(CONTINUOUS, "absolute", col["t"])
    else:
        oracle = None
    if oracle is not None and oracle.n != X.shape[0]:
        raise OracleMismatchError(f"{side} covers {oracle.n} points but {path} has {X.shape[0]} rows")
    return X, oracle


def write_matrix(path, M) -> None:
    """Dense square matrix with header ``c0,...,c{N-1}``."""
    M = np.asarray(M, dtype=np.float64)
    _ensure_parent(path)
    header = ",".join(f"c{i}" for i in range(M.shape[1]))
    np.savetxt(path, M, fmt=FLOAT_FMT, delimiter=",", header=header, comments="")


def read_matrix(path) -> np.ndarray:
    """Dense matrix CSV; a non-numeric first row is treated as a header."""
    with open(path, newline="") as fh:
        first = next(csv.reader(fh))
    try:
        [float(v) for v in first]
        skip = 0
    except ValueError:
        skip = 1
    M = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    if M.shape[0] != M.shape[1]:
        raise OracleMismatchError(f"{path}: expected a square matrix, got {M.shape}")
    return M


def write_triplets(path, S) -> None:
    """Nonzero entries of a symmetric matrix as ``i,j,s`` rows with ``i <= j``."""
    S = np.asarray(S, dtype=np.float64)
    i, j = np.nonzero(np.triu(S))
    _ensure_parent(path)
    with open(path, "w") as fh:
        fh.write("i,j,s\n")
        for a, b, v in zip(i, j, S[i, j]):
            fh.write(f"{a},{b},{_fmt(v)}\n")


def read_triplets(path, n: int) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    S = np.zeros((n, n))
    if data.size:
        i, j = data[:, 0].astype(np.int64), data[:, 1].astype(np.int64)
        S[i, j] = data[:, 2]
        S[j, i] = data[:, 2]
    return S


def write_rows(path, header, rows) -> None:
    """Plain CSV; floats are formatted with 17 significant digits."""
    _ensure_parent(path)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row) + "\n")


def _ensure_parent(path) -> None:
    parent = os.path.dirname(os.fspath(path))
    if parent and not os.path.isdir(parent):
        raise FileNotFoundError(f"output directory does not exist: {parent}")
