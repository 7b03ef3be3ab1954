"""Command-line interface: generate, fit, eval and sweep.

Exit codes: 0 success, 2 invalid arguments, 3 I/O failure, 4 data/oracle
mismatch.
"""
from __future__ import annotations

import argparse
import hashlib
import math
import logging
import sys
import time

import numpy as np

from . import io
from .evaluation import (
    EUCLIDEAN,
    EXTERNAL,
    PROXIMITY,
    distance_ranking,
    euclidean_ranking,
    pr_curve,
    proximity_ranking,
)
from .forest import ALL_POINTS, IN_BAG, Forest, ForestConfig
from .split import CRITERIA
from .synthdata import GENERATORS, NoiseSpec, add_noise, generate, rescale01

log = logging.getLogger("geoforest")

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_MISMATCH = 4

SWEEP_HEADER = ["dataset", "param", "value", "method", "k", "precision", "recall", "chance", "seconds"]
SWEEP_PARAMS = ("noise_dims", "minparent", "mtry", "criterion")


def parse_k(text: str) -> list[int]:
    """``"50"``, ``"50,100"`` or ``"50:250:50"`` (inclusive stop)."""
    ks: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if ":" in part:
            start, stop, step = (int(v) for v in part.split(":"))
            ks.extend(range(start, stop + 1, step))
        elif part:
            ks.append(int(part))
    if not ks:
        raise ValueError("no k values given")
    return sorted(set(ks))


def parse_mtry(text, p: int):
    """An integer, or ``auto``/``sqrt`` (ceil(sqrt(p))), ``half`` (ceil(p/2)), ``all`` (p)."""
    if text in (None, "auto", "sqrt"):
        return None
    if text == "half":
        return math.ceil(p / 2)
    if text == "all":
        return p
    return int(text)


def parse_subsample(text: str):
    return float(text) if "." in text else int(text)


def make_dataset(name, n, seed, noise_dims=0, noise_var=70.0, rescale=False):
    """Generator output (or ``csv:<path>``), plus noise and optional rescaling."""
    if name.startswith("csv:"):
        X, oracle = io.read_dataset(name[4:])
        if oracle is None:
            raise ValueError(f"{name[4:]} carries no oracle (sidecar or label/t/u,v columns)")
    else:
        X, oracle = generate(name, n, seed)
    X = add_noise(X, NoiseSpec(noise_dims, noise_var, seed))
    if rescale:
        X = rescale01(X)
    return X, oracle


def forest_config(args, p: int, **overrides) -> ForestConfig:
    kwargs = dict(
        n_trees=args.trees,
        subsample=parse_subsample(args.subsample),
        mtry=parse_mtry(args.mtry, p),
        sparsity=args.sparsity,
        minparent=args.minparent,
        criterion=args.criterion,
        seed=args.seed,
        proximity_mode=args.proximity_mode,
    )
    kwargs.update(overrides)
    return ForestConfig(**kwargs)


def evaluate(methods, k_list, oracle, X=None, S=None, D=None):
    """PR rows ``(method, k, precision, recall, chance)`` in method order."""
    rows = []
    for method in methods:
        if method == PROXIMITY:
            if S is None:
                raise ValueError("method 'proximity' needs a proximity matrix")
            ranking = proximity_ranking(S)
        elif method == EUCLIDEAN:
            if X is None:
                raise ValueError("method 'euclidean' needs the data matrix")
            ranking = euclidean_ranking(X)
        elif method == EXTERNAL:
            if D is None:
                raise ValueError("method 'external' needs --distance")
            ranking = distance_ranking(D)
        else:
            raise ValueError(f"unknown method {method!r}")
        if ranking.n != oracle.n:
            raise io.OracleMismatchError(f"{method} ranking covers {ranking.n} points, oracle covers {oracle.n}")
        for pt in pr_curve(ranking, oracle, k_list):
            rows.append((method, pt.k, pt.precision, pt.recall, pt.chance))
    return rows


def cmd_generate(args) -> None:
    X, oracle = make_dataset(args.dataset, args.n, args.seed, args.noise_dims, args.noise_var, args.rescale)
    io.write_dataset(args.out, X, oracle)
    log.info("wrote %s (%d x %d) and %s", args.out, X.shape[0], X.shape[1], io.sidecar_path(args.out))


def cmd_fit(args) -> None:
    X, _ = io.read_dataset(args.input)
    cfg = forest_config(args, X.shape[1])
    forest = Forest(cfg, n_jobs=args.jobs).fit(X)
    for t, secs in enumerate(forest.timings):
        log.info("tree %d: %d nodes in %.3fs", t, forest.trees[t].n_nodes, secs)
    sizes = forest.leaf_sizes(X)
    edges = [1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000, 5000]
    edges = [e for e in edges if e <= sizes.max()] + [int(sizes.max()) + 1]
    hist, _ = np.histogram(sizes, bins=edges)
    log.info("leaf sizes: %s", ", ".join(f"[{a},{b}):{h}" for a, b, h in zip(edges, edges[1:], hist)))
    prox = forest.proximity(X)
    if prox.unsupported.any():
        log.warning("%d pairs never shared an in-bag sample; their proximity is 0", int(prox.unsupported.sum()))
    forest.save(f"{args.out}.forest.json")
    if args.format == "triplet":
        io.write_triplets(f"{args.out}.proximity.csv", prox.similarity)
    else:
        io.write_matrix(f"{args.out}.proximity.csv", prox.similarity)
    log.info("wrote %s.forest.json and %s.proximity.csv", args.out, args.out)


def cmd_eval(args) -> None:
    X, oracle = io.read_dataset(args.input)
    if oracle is None:
        raise ValueError(f"{args.input} carries no oracle (sidecar or label/t/u,v columns)")
    methods = [m.strip() for m in args.method.split(",") if m.strip()]
    S = D = None
    if PROXIMITY in methods:
        if not args.proximity:
            raise ValueError("method 'proximity' needs --proximity")
        S = _read_proximity(args.proximity, X.shape[0])
    if EXTERNAL in methods:
        if not args.distance:
            raise ValueError("method 'external' needs --distance")
        D = io.read_matrix(args.distance)
    rows = evaluate(methods, parse_k(args.k), oracle, X=X, S=S, D=D)
    io.write_rows(args.out, io.PR_HEADER, rows)


def _read_proximity(path, n):
    with open(path) as fh:
        header = fh.readline().strip()
    if header == "i,j,s":
        return io.read_triplets(path, n)
    return io.read_matrix(path)


def cell_seed(master: int, param: str, value, dataset: str) -> int:
    digest = hashlib.sha256(f"{master}|{param}|{value}|{dataset}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def sweep_grid(args):
    """Cells ``(dataset, param, value)`` in grid order: param, value, dataset."""
    datasets = [d.strip() for d in args.dataset.split(",") if d.strip()]
    cells = []
    for param in SWEEP_PARAMS:
        values = getattr(args, f"grid_{param}")
        if not values:
            continue
        for value in values.split(","):
            for dataset in datasets:
                cells.append((dataset, param, value.strip()))
    return cells


def run_cell(args, dataset, param, value):
    seed = cell_seed(args.seed, param, value, dataset)
    noise_dims = int(value) if param == "noise_dims" else args.noise_dims
    X, oracle = make_dataset(dataset, args.n, seed, noise_dims, args.noise_var, args.rescale)
    overrides = {"seed": seed}
    if param == "minparent":
        overrides["minparent"] = int(value)
    elif param == "mtry":
        overrides["mtry"] = parse_mtry(value, X.shape[1])
    elif param == "criterion":
        overrides["criterion"] = value
    methods = [m.strip() for m in args.method.split(",") if m.strip()]
    S = None
    if PROXIMITY in methods:
        forest = Forest(forest_config(args, X.shape[1], **overrides), n_jobs=args.jobs).fit(X)
        S = forest.proximity(X).similarity
    return evaluate(methods, parse_k(args.k), oracle, X=X, S=S)


def cmd_sweep(args) -> None:
    out = []
    for dataset, param, value in sweep_grid(args):
        start = time.perf_counter()
        try:
            rows = run_cell(args, dataset, param, value)
        except Exception as exc:  # noqa: BLE001 - recorded per row, sweep continues
            log.error("cell %s %s=%s failed: %s", dataset, param, value, exc)
            out.append((dataset, param, value, "error", "", "nan", "nan", "nan", "nan"))
            continue
        seconds = time.perf_counter() - start if args.timing else float("nan")
        for method, k, precision, recall, chance in rows:
            out.append((dataset, param, value, method, k, precision, recall, chance, seconds))
        log.info("cell %s %s=%s done", dataset, param, value)
    io.write_rows(args.out, SWEEP_HEADER, out)


def _add_data_flags(p):
    p.add_argument("--dataset", default="linear", help=f"one of {', '.join(GENERATORS)}, or csv:<path>")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--noise-var", type=float, default=70.0)
    p.add_argument("--rescale", action="store_true", help="rescale every column to [0, 1] after adding noise")


def _add_forest_flags(p):
    p.add_argument("--criterion", default="fastbic", choices=CRITERIA)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--subsample", default="0.632", help="fraction of N (with a '.') or a count")
    p.add_argument("--mtry", default="auto", help="projections per node: an integer, auto, half or all")
    p.add_argument("--lambda", dest="sparsity", type=float, default=1 / 20)
    p.add_argument("--minparent", type=int, default=100)
    p.add_argument("--proximity-mode", default=ALL_POINTS, choices=(ALL_POINTS, IN_BAG))
    p.add_argument("--jobs", type=int, default=1, help="threads used to grow trees")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geoforest", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a benchmark dataset and its oracle")
    _add_data_flags(g)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--noise-dims", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="grow a forest and write it with its proximity matrix")
    f.add_argument("--in", dest="input", required=True)
    f.add_argument("--seed", type=int, default=0)
    _add_forest_flags(f)
    f.add_argument("--format", default="dense", choices=("dense", "triplet"))
    f.add_argument("--out", required=True, help="prefix for <out>.forest.json and <out>.proximity.csv")
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("eval", help="geodesic precision/recall of one or more rankings")
    e.add_argument("--in", dest="input", required=True)
    e.add_argument("--k", default="50")
    e.add_argument("--method", default="proximity,euclidean")
    e.add_argument("--proximity", help="proximity CSV written by 'fit'")
    e.add_argument("--distance", help="dense distance-matrix CSV from an external tool")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="one-parameter-at-a-time experiment grid")
    _add_data_flags(s)
    _add_forest_flags(s)
    s.set_defaults(dataset="linear,helix,sphere,gmm")
    s.add_argument("--seed", type=int, default=0, help="master seed; each cell derives its own")
    s.add_argument("--noise-dims", type=int, default=0, help="noise dimensions when not swept")
    s.add_argument("--grid-noise-dims", dest="grid_noise_dims", default="")
    s.add_argument("--grid-minparent", dest="grid_minparent", default="")
    s.add_argument("--grid-mtry", dest="grid_mtry", default="")
    s.add_argument("--grid-criterion", dest="grid_criterion", default="")
    s.add_argument("--k", default="50")
    s.add_argument("--method", default="proximity,euclidean")
    s.add_argument("--timing", action="store_true", help="fill the seconds column (makes output run-dependent)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        args.func(args)
    except io.OracleMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
