"""``escapetime`` command-line interface.

Single runs print one JSON record; sweeps write an RFC-4180 CSV. Exit
codes: 0 success, 1 other library error, 2 invalid input, 3 solver
failure, 4 brute-force cap exceeded.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import warnings

import numpy as np

from . import __version__
from ._concurrency import JOBS_ENV
from .detector import DetectorConfig, detect, sorted_names
from .errors import EscapeTimeError, ValidationError
from .experiments import (
    KINDS,
    TIMING_COLUMNS,
    class_supervision,
    detector_supervision,
    epsilon_grid_sweep,
    k_grid_sweep,
    parse_grid,
    supervision_sweep,
    synthetic_sweep,
)
from .graph import Graph, laplacian_frobenius, load_graph, load_labels, load_node_set, save_graph, write_labels
from .oracle import brute_force_best_partition, brute_force_best_subgraph, monte_carlo_met
from .partitioner import PartitionerConfig, partition
from .poisson import solve_exact_met
from .synth import MickeeSpec, generate_er_cycle, generate_mickee, generate_powerlaw_mickee, load_mickee_spec, parse_spec_text
from .tables import SweepResult


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _emit(record: dict, out: str | None) -> None:
    text = json.dumps(record, indent=2, default=_json_default) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _graph(args) -> Graph:
    return load_graph(args.graph, symmetrize=getattr(args, "symmetrize", False))


def _metadata(g: Graph, path) -> list:
    """Per-node metadata (``None`` where the file has no entry)."""
    if path is None:
        return None
    table = load_labels(path)
    unknown = set(table) - set(g.node_names)
    if unknown:
        raise ValidationError(f"label file names {len(unknown)} nodes not in the graph, e.g. {sorted(unknown)[0]!r}")
    return [table.get(name) for name in g.node_names]


def _positive_int(text):
    val = int(text)
    if val < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return val


def _add_common(p, graph=True):
    if graph:
        p.add_argument("--graph", required=True, help="edge list or MatrixMarket file")
        p.add_argument("--symmetrize", action="store_true", help="use (A + A^T)/2")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=_positive_int, default=None, help=f"concurrent runs (default ${JOBS_ENV} or 1)")


def _add_solver_opts(p):
    p.add_argument("--C", dest="C", type=float, default=50.0, help="epsilon = C / ||L||_F")
    p.add_argument("--epsilon", type=float, default=None, help="explicit epsilon (overrides --C)")
    p.add_argument("--restarts", type=_positive_int, default=5)
    p.add_argument("--max-iters", type=_positive_int, default=100)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="escapetime", description="Mean-exit-time subgraph detection and partitioning.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample a synthetic graph")
    p.add_argument("--family", required=True, choices=["mickee", "powerlaw-mickee", "er-cycle"])
    p.add_argument("--spec", help="key = value parameter file")
    p.add_argument("--seed", type=int, default=None, help="overrides the spec seed")
    p.add_argument("--out-prefix", required=True, help="writes PREFIX.edges and PREFIX.labels")

    p = sub.add_parser("detect", help="find a k-node set with long mean exit time")
    _add_common(p)
    p.add_argument("--k", type=int, required=True)
    _add_solver_opts(p)
    p.add_argument("--labels", help="'node 0|1' file: 1 = inside the target set")
    p.add_argument("--lambda", dest="lam", type=float, default=1e6, help="supervision weight")
    p.add_argument("--supervision-frac", type=float, default=1.0, help="fraction of labeled nodes used")
    p.add_argument("--out")

    p = sub.add_parser("partition", help="K-way partition by mean exit time")
    _add_common(p)
    p.add_argument("--K", dest="K", type=int, required=True)
    _add_solver_opts(p)
    p.add_argument("--nu", type=float, default=1.0, help="epsilon = C * nu / ||L||_F")
    p.add_argument("--init", choices=["random", "spectral"], default="spectral")
    p.add_argument("--reseed-empty", action="store_true", help="re-seed classes that become empty")
    p.add_argument("--labels", help="'node class' file used as supervision")
    p.add_argument("--lambda", dest="lam", type=float, default=1e6)
    p.add_argument("--supervision-frac", type=float, default=1.0)
    p.add_argument("--metadata", help="'node class' file for purity")
    p.add_argument("--labels-out", help="write 'node label' lines here")
    p.add_argument("--out")

    p = sub.add_parser("sweep", help="parameter sweep to CSV")
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--grid", required=True, help="e.g. 'ell=-50:50:5' or 'rho=0.01,0.02;delta=0.05'")
    p.add_argument("--graph", help="graph file (k, epsilon, supervision kinds)")
    p.add_argument("--symmetrize", action="store_true")
    p.add_argument("--metadata", help="'node class' file (epsilon purity, supervision)")
    p.add_argument("--spec", help="MICKEE base spec (noise, powerlaw; supervision without --graph)")
    p.add_argument("--method", choices=["detect", "partition"], default="detect", help="noise/powerlaw runner")
    p.add_argument("--K", dest="K", type=int, default=None)
    p.add_argument("--nu", type=float, default=1.0)
    p.add_argument("--init", choices=["random", "spectral"], default="spectral")
    _add_solver_opts(p)
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--seeds", type=_positive_int, default=1, help="number of consecutive seeds")
    p.add_argument("--jobs", type=_positive_int, default=None)
    p.add_argument("--out", help="CSV path (stdout if omitted); wall times go to OUT.timing.csv")
    p.add_argument("--resume", action="store_true", help="keep rows already in --out and compute the rest")

    p = sub.add_parser("met", help="exact (and Monte Carlo) mean exit time of a node set")
    p.add_argument("--graph", required=True)
    p.add_argument("--symmetrize", action="store_true")
    p.add_argument("--set", dest="set_file", required=True, help="file listing node names")
    p.add_argument("--monte-carlo", type=_positive_int, default=None, metavar="WALKS", help="walks per node")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("oracle", help="exhaustive search on tiny graphs")
    p.add_argument("--graph", required=True)
    p.add_argument("--symmetrize", action="store_true")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--best-subgraph", type=int, metavar="k")
    group.add_argument("--best-partition", type=int, metavar="K")
    p.add_argument("--C", dest="C", type=float, default=50.0)
    p.add_argument("--epsilon", type=float, default=None)
    return parser


def cmd_generate(args) -> int:
    params = {}
    if args.spec:
        with open(args.spec, encoding="utf-8") as fh:
            params = parse_spec_text(fh.read())
    if args.family == "er-cycle":
        allowed = {"n_er", "n_cycle", "p_er", "w_in", "seed"}
        bad = set(params) - allowed
        if bad:
            raise ValidationError(f"unknown er-cycle spec keys: {sorted(bad)}")
        if args.seed is not None:
            params["seed"] = args.seed
        for key in ("n_er", "n_cycle", "p_er"):
            if key not in params:
                raise ValidationError(f"er-cycle spec needs {key}")
        g, labels = generate_er_cycle(**params)
    else:
        overrides = {} if args.seed is None else {"seed": args.seed}
        if args.spec:
            spec = load_mickee_spec(args.spec, **overrides)
        else:
            spec = MickeeSpec(**overrides)
        g, labels = (generate_powerlaw_mickee if args.family == "powerlaw-mickee" else generate_mickee)(spec)
    save_graph(g, args.out_prefix + ".edges")
    with open(args.out_prefix + ".labels", "w", encoding="utf-8") as fh:
        write_labels(fh, g.node_names, labels)
    _emit({"nodes": g.n, "edges": g.num_edges, "edge_file": args.out_prefix + ".edges",
           "label_file": args.out_prefix + ".labels"}, None)
    return 0


def cmd_detect(args) -> int:
    g = _graph(args)
    sup = None
    if args.labels:
        meta = _metadata(g, args.labels)
        targets = np.full(g.n, -1)
        for i, m in enumerate(meta):
            if m is None:
                continue
            if m not in ("0", "1"):
                raise ValidationError(f"detector labels must be 0 or 1, got {m!r}")
            targets[i] = int(m)
        sup = detector_supervision(targets, args.supervision_frac, args.seed, args.lam)
    cfg = DetectorConfig(k=args.k, epsilon_scale=args.C, epsilon=args.epsilon, restarts=args.restarts,
                         max_iters=args.max_iters, seed=args.seed, supervision=sup, jobs=args.jobs)
    res = detect(g, cfg)
    _emit(res.to_record(g), args.out)
    return 0


def cmd_partition(args) -> int:
    g = _graph(args)
    sup = None
    if args.labels:
        sup = class_supervision(_metadata(g, args.labels), args.supervision_frac, args.seed, args.lam)
    cfg = PartitionerConfig(K=args.K, epsilon_scale=args.C, nu=args.nu, epsilon=args.epsilon, restarts=args.restarts,
                            max_iters=args.max_iters, init=args.init, seed=args.seed, supervision=sup,
                            reseed_empty=args.reseed_empty, jobs=args.jobs)
    res = partition(g, cfg, metadata=_metadata(g, args.metadata))
    if args.labels_out:
        with open(args.labels_out, "w", encoding="utf-8") as fh:
            write_labels(fh, g.node_names, res.labels)
    _emit(res.to_record(g), args.out)
    return 0


def _write_sweep(table: SweepResult, timings, args) -> None:
    if not args.out:
        table.to_csv(sys.stdout)
        return
    table.to_csv(args.out)
    path = args.out + ".timing.csv"
    mode = "a" if args.resume and os.path.exists(path) else "w"
    with open(path, mode, newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        if mode == "w":
            writer.writerow(TIMING_COLUMNS)
        for row, dt in timings:
            writer.writerow([row, repr(dt)])


def cmd_sweep(args) -> int:
    grid = parse_grid(args.grid)
    seeds = list(range(args.seed, args.seed + args.seeds))
    existing = None
    if args.resume:
        if not args.out:
            raise ValidationError("--resume needs --out")
        if os.path.exists(args.out):
            existing = SweepResult.from_csv(args.out)
    common = dict(epsilon_scale=args.C, epsilon=args.epsilon, restarts=args.restarts, max_iters=args.max_iters)

    if args.kind in ("noise", "powerlaw"):
        base = load_mickee_spec(args.spec) if args.spec else MickeeSpec()
        det = DetectorConfig(k=base.block_sizes[0], **common)
        par = PartitionerConfig(K=len(base.block_sizes) + 1, nu=args.nu, init=args.init, **common)
        table, timings = synthetic_sweep(args.kind, grid, seeds, base, args.method, det, par, args.jobs, existing)
    else:
        if args.kind == "supervision" and not args.graph:
            base = load_mickee_spec(args.spec) if args.spec else MickeeSpec()
            g, labels = generate_mickee(base)
            meta = labels.tolist()
            K = args.K or len(base.block_sizes) + 1
        else:
            if not args.graph:
                raise ValidationError(f"--kind {args.kind} needs --graph")
            g = _graph(args)
            meta = _metadata(g, args.metadata)
            K = args.K
        if args.kind == "k":
            cfg = DetectorConfig(k=1, **common)
            table, timings = k_grid_sweep(g, grid, seeds, cfg, args.jobs, existing)
        else:
            if K is None:
                raise ValidationError(f"--kind {args.kind} needs --K")
            cfg = PartitionerConfig(K=K, nu=args.nu, init=args.init, **common)
            if args.kind == "epsilon":
                table, timings = epsilon_grid_sweep(g, grid, seeds, cfg, meta, args.jobs, existing)
            else:
                if meta is None:
                    raise ValidationError("--kind supervision needs --metadata")
                table, timings = supervision_sweep(g, meta, grid, seeds, cfg, args.jobs, existing)
    _write_sweep(table, timings, args)
    return 0


def _set_indices(g: Graph, path) -> list:
    names = load_node_set(path)
    return sorted(set(g.indices_of(names)))


def cmd_met(args) -> int:
    g = _graph(args)
    S = _set_indices(g, args.set_file)
    _, tau = solve_exact_met(g, S)
    record = {"S": sorted_names(g, S), "tau": tau}
    if args.monte_carlo:
        tau_hat, stderr = monte_carlo_met(g, S, args.monte_carlo, seed=args.seed)
        record["monte_carlo"] = {"walks_per_node": args.monte_carlo, "tau_hat": tau_hat, "stderr": stderr}
    _emit(record, None)
    return 0


def cmd_oracle(args) -> int:
    g = _graph(args)
    if args.best_subgraph is not None:
        S, tau = brute_force_best_subgraph(g, args.best_subgraph)
        _emit({"S": sorted_names(g, S), "tau": tau}, None)
    else:
        eps = args.epsilon if args.epsilon is not None else args.C / laplacian_frobenius(g)
        labels, energy = brute_force_best_partition(g, args.best_partition, eps)
        _emit({"labels": {g.node_names[i]: int(c) for i, c in enumerate(labels)}, "energy": energy,
               "epsilon": eps}, None)
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "detect": cmd_detect,
    "partition": cmd_partition,
    "sweep": cmd_sweep,
    "met": cmd_met,
    "oracle": cmd_oracle,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    warnings.simplefilter("default")
    try:
        return COMMANDS[args.command](args)
    except EscapeTimeError as exc:
        print(f"escapetime: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, KeyError) as exc:
        print(f"escapetime: error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"escapetime: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
