"""Sweep protocols: grid parsing, per-seed tasks, resumable CSV tables.

Every task is seeded only by its own ``seed`` value, so rows do not depend
on the order or concurrency of execution. Wall-clock times are returned
separately from the metric table so that repeated runs give identical
tables.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import fields, replace

import numpy as np

from ._concurrency import parallel_map
from .detector import DetectorConfig, Supervision, detect
from .errors import ValidationError
from .graph import Graph
from .oracle import subgraph_accuracy
from .partitioner import ClassSupervision, PartitionerConfig, nu_from_ell, partition
from .synth import MickeeSpec, generate_mickee
from .tables import SweepResult, _fmt

KINDS = ("k", "epsilon", "noise", "powerlaw", "supervision")
_MICKEE_FIELDS = {f.name for f in fields(MickeeSpec)} - {"seed"}
_GRID_ALIASES = {"q": "powerlaw_exponent", "rho": "inter_density", "delta": "inter_weight"}
_ALLOWED_KEYS = {
    "k": {"k"},
    "epsilon": {"ell"},
    "noise": _MICKEE_FIELDS | {"rho", "delta"},
    "powerlaw": _MICKEE_FIELDS | {"q", "rho", "delta"},
    "supervision": {"frac", "nu", "lambda"},
}
TIMING_COLUMNS = ["row", "wall_time_s"]


def _parse_number(text: str):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        return float(text)


def parse_grid(text: str) -> dict:
    """Parse ``"a=0:1:0.25; b=1,2,5"`` into ``{"a": [...], "b": [...]}``.

    ``start:stop:step`` ranges include ``stop`` when it lies on the grid.
    """
    grid: dict = {}
    for part in filter(None, (p.strip() for p in text.split(";"))):
        if "=" not in part:
            raise ValidationError(f"grid entry {part!r} is not name=values")
        name, vals = (s.strip() for s in part.split("=", 1))
        if name in grid:
            raise ValidationError(f"grid key {name!r} repeated")
        if ":" in vals:
            pieces = vals.split(":")
            if len(pieces) != 3:
                raise ValidationError(f"range {vals!r} must be start:stop:step")
            start, stop, step = (_parse_number(p) for p in pieces)
            if step == 0 or (stop - start) / step < 0:
                raise ValidationError(f"range {vals!r} is empty or has zero step")
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            values = [start + i * step for i in range(count)]
            if all(isinstance(x, int) for x in (start, step)):
                values = [int(v) for v in values]
            else:
                values = [round(float(v), 12) for v in values]
        else:
            values = [_parse_number(v) for v in vals.split(",") if v.strip()]
        if not values:
            raise ValidationError(f"grid key {name!r} has no values")
        grid[name] = values
    if not grid:
        raise ValidationError("empty grid")
    return grid


def grid_points(grid: dict) -> list:
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def check_grid_keys(kind: str, grid: dict) -> None:
    if kind not in KINDS:
        raise ValidationError(f"unknown sweep kind {kind!r}")
    bad = set(grid) - _ALLOWED_KEYS[kind]
    if bad:
        raise ValidationError(f"grid keys {sorted(bad)} not valid for --kind {kind}")


def _row_key(row: dict, key_columns) -> tuple:
    return tuple(_fmt(row[c]) if not isinstance(row[c], str) else row[c] for c in key_columns)


def run_tasks(columns, key_columns, tasks, fn, jobs=None, existing: SweepResult | None = None):
    """Evaluate ``fn(task) -> row`` for every task not already in ``existing``.

    Returns ``(table, timings)``; ``timings`` lists ``(row index, seconds)``
    for the rows computed in this call.
    """
    table = SweepResult(list(columns))
    done = set()
    if existing is not None and existing.columns:
        if list(existing.columns) != list(columns):
            raise ValidationError("existing CSV has different columns; cannot resume")
        table.rows.extend(existing.rows)
        done = {_row_key(r, key_columns) for r in existing.rows}
    todo = [t for t in tasks if _row_key(t, key_columns) not in done]

    def timed(task):
        t0 = time.perf_counter()
        row = fn(task)
        return row, time.perf_counter() - t0

    timings = []
    for row, dt in parallel_map(timed, todo, jobs):
        table.append(row)
        timings.append((len(table) - 1, dt))
    return table, timings


def _tasks(grid: dict, seeds) -> list:
    return [dict(p, seed=s) for p in grid_points(grid) for s in seeds]


def _mickee_overrides(params: dict) -> dict:
    out = {}
    for k, v in params.items():
        name = _GRID_ALIASES.get(k, k)
        if name in _MICKEE_FIELDS:
            out[name] = v
    if "inter_density" in out:
        out["inter_degree"] = None
    if "inter_degree" in out and "inter_density" not in out:
        out["inter_density"] = None
    return out


DETECT_METRICS = ["accuracy", "tau", "energy", "iterations", "converged", "epsilon"]
PARTITION_METRICS = ["purity", "energy", "iterations", "converged", "epsilon"]


def synthetic_sweep(kind: str, grid: dict, seeds, base: MickeeSpec, method: str = "detect",
                    detector: DetectorConfig | None = None, partitioner: PartitionerConfig | None = None,
                    jobs=None, existing=None):
    """Noise or power-law sweep over MICKEE parameters.

    ``method="detect"`` runs the detector with ``k`` = smallest block and
    scores accuracy against it; ``method="partition"`` runs the
    partitioner with one class per block (background included) and
    scores purity.
    """
    check_grid_keys(kind, grid)
    if kind == "powerlaw" and not ({"q", "powerlaw_exponent"} & set(grid)) and base.powerlaw_exponent is None:
        raise ValidationError("powerlaw sweep needs q in the grid or powerlaw_exponent in the spec")
    if method not in ("detect", "partition"):
        raise ValidationError("method must be 'detect' or 'partition'")
    keys = list(grid) + ["seed"]
    metrics = DETECT_METRICS if method == "detect" else PARTITION_METRICS
    detector = detector or DetectorConfig(k=base.block_sizes[0])
    partitioner = partitioner or PartitionerConfig(K=len(base.block_sizes) + 1)

    def run(task):
        spec = replace(base, seed=task["seed"], **_mickee_overrides(task))
        g, labels = generate_mickee(spec)
        row = {k: task[k] for k in keys}
        if method == "detect":
            cfg = replace(detector, k=spec.block_sizes[0], seed=task["seed"], jobs=1)
            res = detect(g, cfg)
            row.update(accuracy=subgraph_accuracy(res.S, np.flatnonzero(labels == 0)), tau=res.exact_met,
                       energy=res.energy, iterations=res.iterations, converged=res.converged, epsilon=res.epsilon)
        else:
            cfg = replace(partitioner, K=len(spec.block_sizes) + 1, seed=task["seed"], jobs=1)
            res = partition(g, cfg, metadata=labels)
            row.update(purity=res.purity, energy=res.energy, iterations=res.iterations,
                       converged=res.converged, epsilon=res.epsilon)
        return row

    return run_tasks(keys + metrics, keys, _tasks(grid, seeds), run, jobs, existing)


def k_grid_sweep(g: Graph, grid: dict, seeds, cfg: DetectorConfig, jobs=None, existing=None):
    """Detector τ(k) table; one row per ``k`` per seed."""
    check_grid_keys("k", grid)
    keys = ["k", "seed"]
    metrics = ["tau", "energy", "iterations", "converged", "epsilon"]

    def run(task):
        res = detect(g, replace(cfg, k=int(task["k"]), seed=task["seed"], jobs=1))
        return {"k": task["k"], "seed": task["seed"], "tau": res.exact_met, "energy": res.energy,
                "iterations": res.iterations, "converged": res.converged, "epsilon": res.epsilon}

    return run_tasks(keys + metrics, keys, _tasks(grid, seeds), run, jobs, existing)


def epsilon_grid_sweep(g: Graph, grid: dict, seeds, cfg: PartitionerConfig, metadata=None, jobs=None,
                       existing=None):
    """Partitioner table over ``nu = exp(0.2 ell)``."""
    check_grid_keys("epsilon", grid)
    keys = ["ell", "seed"]
    metrics = ["nu", "epsilon", "purity", "energy", "iterations", "converged"]

    def run(task):
        nu = nu_from_ell(task["ell"])
        res = partition(g, replace(cfg, nu=nu, epsilon=None, seed=task["seed"], jobs=1), metadata=metadata)
        return {"ell": task["ell"], "seed": task["seed"], "nu": nu, "epsilon": res.epsilon,
                "purity": res.purity if res.purity is not None else float("nan"), "energy": res.energy,
                "iterations": res.iterations, "converged": res.converged}

    return run_tasks(keys + metrics, keys, _tasks(grid, seeds), run, jobs, existing)


def encode_classes(metadata) -> tuple[np.ndarray, list]:
    """Map metadata values (``None`` = missing) to ``0..m-1`` in sorted order; missing → -1."""
    present = sorted({m for m in metadata if m is not None}, key=lambda x: (str(type(x)), x))
    index = {m: i for i, m in enumerate(present)}
    return np.array([index[m] if m is not None else -1 for m in metadata], dtype=np.intp), present


def sample_labeled(candidates: np.ndarray, frac: float, rng: np.random.Generator) -> np.ndarray:
    """``round(frac * len(candidates))`` candidates drawn without replacement, sorted."""
    if not 0 <= frac <= 1:
        raise ValidationError("supervision fraction must lie in [0, 1]")
    m = int(round(frac * candidates.size))
    return np.sort(rng.choice(candidates, m, replace=False)) if m else np.empty(0, dtype=np.intp)


def class_supervision(metadata, frac: float, seed, weight: float) -> ClassSupervision:
    codes, _ = encode_classes(metadata)
    rng = np.random.default_rng(np.random.SeedSequence([0 if seed is None else int(seed), 1]))
    nodes = sample_labeled(np.flatnonzero(codes >= 0), frac, rng)
    return ClassSupervision(nodes, codes[nodes], weight)


def detector_supervision(targets, frac: float, seed, weight: float) -> Supervision:
    """``targets``: 0/1 per node, ``-1`` where unknown."""
    targets = np.asarray(targets)
    rng = np.random.default_rng(np.random.SeedSequence([0 if seed is None else int(seed), 1]))
    nodes = sample_labeled(np.flatnonzero(targets >= 0), frac, rng)
    return Supervision(nodes, targets[nodes], weight)


def supervision_sweep(g: Graph, metadata, grid: dict, seeds, cfg: PartitionerConfig, jobs=None, existing=None):
    """Partitioner purity versus labeled fraction (``frac``), ``nu`` and ``lambda``."""
    check_grid_keys("supervision", grid)
    codes, classes = encode_classes(metadata)
    if len(classes) > cfg.K:
        raise ValidationError(f"metadata has {len(classes)} classes but K={cfg.K}")
    keys = list(grid) + ["seed"]
    metrics = ["purity", "energy", "iterations", "converged", "epsilon", "labeled"]

    def run(task):
        frac = task.get("frac", 0.1)
        lam = task.get("lambda", 1e6)
        sup = class_supervision(metadata, frac, task["seed"], lam)
        local = replace(cfg, seed=task["seed"], jobs=1, supervision=sup,
                        nu=task.get("nu", cfg.nu), epsilon=None if "nu" in task else cfg.epsilon)
        res = partition(g, local, metadata=list(metadata))
        row = {k: task[k] for k in keys}
        row.update(purity=res.purity, energy=res.energy, iterations=res.iterations, converged=res.converged,
                   epsilon=res.epsilon, labeled=int(sup.nodes.size))
        return row

    return run_tasks(keys + metrics, keys, _tasks(grid, seeds), run, jobs, existing)
