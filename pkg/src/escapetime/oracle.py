"""Metrics and independent ground-truth oracles.

The oracles here share no code path with the rearrangement solvers:
Monte Carlo walks sample the Markov chain directly, and the brute-force
searches enumerate every candidate with exact or dense solves.
"""
from __future__ import annotations

import itertools
import math
from collections import Counter, defaultdict
from typing import Mapping

import numpy as np

from .errors import CapExceededError, EscapeTimeError, SingularSystemError, ValidationError
from .graph import Graph, laplacian
from .poisson import as_mask, solve_exact_met

BRUTE_FORCE_CAP = 1_000_000
DEFAULT_STEP_CAP = 10_000_000


def purity(labels, metadata) -> float:
    """``(1/N) sum_k max_l N_k^l`` over nodes that carry metadata.

    ``metadata`` is a sequence aligned with ``labels`` (``None`` marks a
    missing entry) or a mapping from node index to class.
    """
    labels = list(np.asarray(labels).tolist())
    if isinstance(metadata, Mapping):
        pairs = [(labels[i], m) for i, m in metadata.items() if m is not None]
    else:
        metadata = list(np.asarray(metadata, dtype=object).tolist())
        if len(metadata) != len(labels):
            raise ValidationError("labels and metadata differ in length")
        pairs = [(c, m) for c, m in zip(labels, metadata) if m is not None]
    if not pairs:
        raise ValidationError("no node carries both a cluster label and metadata")
    table: dict = defaultdict(Counter)
    for c, m in pairs:
        table[c][m] += 1
    return sum(max(cnt.values()) for cnt in table.values()) / len(pairs)


def subgraph_accuracy(S, S_star) -> float:
    """``|S & S*| / |S*|``."""
    S_star = set(np.asarray(S_star).tolist())
    if not S_star:
        raise ValidationError("planted set is empty")
    return len(set(np.asarray(S).tolist()) & S_star) / len(S_star)


def _alias_tables(g: Graph):
    """Vose alias tables laid out along the CSR rows of the adjacency."""
    A = g.adjacency
    prob = np.empty(A.nnz)
    alias = np.empty(A.nnz, dtype=np.intp)
    for i in range(g.n):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        m = hi - lo
        p = A.data[lo:hi] * (m / g.out_degree[i])
        small = [j for j in range(m) if p[j] < 1.0]
        large = [j for j in range(m) if p[j] >= 1.0]
        q = np.ones(m)
        al = np.arange(m)
        while small and large:
            s = small.pop()
            l = large.pop()
            q[s] = p[s]
            al[s] = l
            p[l] = p[l] + p[s] - 1.0
            (small if p[l] < 1.0 else large).append(l)
        prob[lo:hi] = q
        alias[lo:hi] = A.indices[lo + al]
    return prob, alias


def monte_carlo_met(g: Graph, S, walks_per_node: int, seed=None, step_cap: int = DEFAULT_STEP_CAP):
    """Estimate ``tau(S)`` by simulating walks from every node of ``S``.

    Returns
    -------
    tau_hat : float
        ``(1/|V|) sum_{i in S}`` (mean steps to leave ``S`` from ``i``).
    stderr : float
        Standard error from the per-node sample variances.
    """
    mask = as_mask(g.n, S)
    if mask.all():
        raise ValidationError("S must not contain every node")
    if walks_per_node < 1:
        raise ValidationError("walks_per_node must be positive")
    rng = np.random.default_rng(seed)
    prob, alias = _alias_tables(g)
    indptr = g.adjacency.indptr
    deg_count = np.diff(indptr)
    starts = np.repeat(np.flatnonzero(mask), walks_per_node)
    pos = starts.copy()
    steps = np.zeros(starts.size, dtype=np.int64)
    active = np.flatnonzero(mask[pos])
    t = 0
    while active.size:
        if t >= step_cap:
            raise EscapeTimeError(f"walks still inside S after {step_cap} steps; complement may be unreachable")
        cur = pos[active]
        slot = indptr[cur] + (rng.random(active.size) * deg_count[cur]).astype(np.intp)
        keep = rng.random(active.size) < prob[slot]
        nxt = np.where(keep, g.adjacency.indices[slot], alias[slot])
        pos[active] = nxt
        steps[active] += 1
        active = active[mask[nxt]]
        t += 1
    idx = np.flatnonzero(mask)
    per = steps.reshape(idx.size, walks_per_node).astype(float)
    means = per.mean(axis=1)
    var = per.var(axis=1, ddof=1) if walks_per_node > 1 else np.zeros(idx.size)
    tau_hat = means.sum() / g.n
    stderr = math.sqrt(np.sum(var / walks_per_node)) / g.n
    return float(tau_hat), float(stderr)


def brute_force_best_subgraph(g: Graph, k: int):
    """Exhaustive ``argmax_{|S|=k} tau(S)``; ties go to the lexicographically first set."""
    if not 1 <= k < g.n:
        raise ValidationError(f"k must satisfy 1 <= k < n={g.n}")
    count = math.comb(g.n, k)
    if count > BRUTE_FORCE_CAP:
        raise CapExceededError(f"C({g.n},{k}) = {count} subsets exceeds cap {BRUTE_FORCE_CAP}")
    best_S, best_tau = None, -math.inf
    for S in itertools.combinations(range(g.n), k):
        try:
            _, tau = solve_exact_met(g, list(S), check_connectivity=False)
        except SingularSystemError:
            tau = math.inf
        if best_S is None or tau > best_tau + 1e-12 * abs(best_tau):
            best_S, best_tau = S, tau
    return np.array(best_S, dtype=np.intp), best_tau


def _dense_tilde_energy(L: np.ndarray, d: np.ndarray, labels: np.ndarray, K: int, epsilon: float, delta: float):
    total = 0.0
    for j in range(K):
        out = labels != j
        if not out.any():
            continue  # whole graph in one class: infinite exit time, term 0
        u = np.linalg.solve(L + np.diag(out / epsilon), d)
        total += 1.0 / (1.0 + delta * u.sum())
    return total


def brute_force_best_partition(g: Graph, K: int, epsilon: float, delta: float | None = None):
    """Exhaustive minimizer of the partition energy over surjective labelings.

    Uses dense solves (independent of the sparse solver path). Ties go to
    the lexicographically first labeling. Returns ``(labels, energy)``.
    """
    delta = epsilon if delta is None else delta
    if not 1 <= K <= g.n:
        raise ValidationError(f"K must satisfy 1 <= K <= n={g.n}")
    if K**g.n > BRUTE_FORCE_CAP:
        raise CapExceededError(f"{K}^{g.n} labelings exceeds cap {BRUTE_FORCE_CAP}")
    L = laplacian(g).toarray()
    d = np.asarray(g.out_degree)
    best, best_e = None, math.inf
    for lab in itertools.product(range(K), repeat=g.n):
        lab = np.array(lab)
        if np.unique(lab).size < K:
            continue
        e = _dense_tilde_energy(L, d, lab, K, epsilon, delta)
        if best is None or e < best_e - 1e-12 * abs(best_e):
            best, best_e = lab, e
    return best, best_e
