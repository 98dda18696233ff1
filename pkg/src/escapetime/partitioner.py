"""K-way rearrangement partitioner.

Each iteration solves, for every class ``j``, the regularized systems at
``phi = chi_{S_j}`` and reassigns every node to the class maximizing::

    u_j * v_j / (1 + eps * ||u_j||_1) ** 2

This is minus the gradient of ``Etilde = sum_j 1 / (1 + delta ||u_j||_1)``
with respect to ``phi_j`` when ``delta = eps``:
``d(n E)/dphi = u * v / eps``, so
``dEtilde/dphi_j = -delta / (1 + delta ||u_j||_1)^2 * u_j * v_j / eps``.
Since ``Etilde`` is concave in each block for small ``delta`` the
reassignment, a minimizer of the linearization over hard partitions,
does not increase it.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from ._concurrency import parallel_map
from .errors import ValidationError
from .graph import Graph, laplacian, laplacian_frobenius, warn_if_not_strongly_connected
from .oracle import purity
from .poisson import RegularizedSolver, RegularizedSystem
from .tables import SweepResult

TIE_RTOL = 1e-12
_DENSE_EIG_MAX_N = 3000


@dataclass
class ClassSupervision:
    """Labeled nodes for the partitioner: ``nodes[i]`` belongs to class ``classes[i]``."""

    nodes: np.ndarray
    classes: np.ndarray
    weight: float = 1e6

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=np.intp)
        self.classes = np.asarray(self.classes, dtype=np.intp)
        if self.nodes.shape != self.classes.shape:
            raise ValidationError("supervision nodes and classes differ in length")
        seen: dict[int, int] = {}
        for v, c in zip(self.nodes.tolist(), self.classes.tolist()):
            if seen.setdefault(v, c) != c:
                raise ValidationError(f"node {v} labeled with conflicting classes")
        if len(seen) != self.nodes.size:
            keep = {v: c for v, c in zip(self.nodes.tolist(), self.classes.tolist())}
            self.nodes = np.fromiter(keep, dtype=np.intp)
            self.classes = np.fromiter(keep.values(), dtype=np.intp)
        if self.weight < 0:
            raise ValidationError("supervision weight must be nonnegative")


@dataclass
class PartitionerConfig:
    K: int
    epsilon_scale: float = 50.0
    nu: float = 1.0
    restarts: int = 5
    max_iters: int = 100
    init: str = "spectral"
    seed: int | None = None
    supervision: ClassSupervision | None = None
    reseed_empty: bool = False
    epsilon: float | None = None  # overrides epsilon_scale * nu / ||L||_F
    jobs: int | None = None

    def validate(self, n: int) -> None:
        if not 2 <= self.K <= n:
            raise ValidationError(f"K must satisfy 2 <= K <= n={n}, got {self.K}")
        if not self.nu > 0:
            raise ValidationError("nu must be positive")
        if self.init not in ("random", "spectral"):
            raise ValidationError("init must be 'random' or 'spectral'")
        if self.restarts < 1 or self.max_iters < 1:
            raise ValidationError("restarts and max_iters must be positive")
        sup = self.supervision
        if sup is not None and sup.nodes.size:
            if sup.nodes.min() < 0 or sup.nodes.max() >= n:
                raise ValidationError("supervision node index out of range")
            if sup.classes.min() < 0 or sup.classes.max() >= self.K:
                raise ValidationError("supervision class out of range")

    def resolve_epsilon(self, g: Graph) -> float:
        if self.epsilon is not None:
            return float(self.epsilon)
        return self.epsilon_scale * self.nu / laplacian_frobenius(g)


@dataclass
class Partition:
    """Hard partition; ``labels`` take values ``0..K-1``."""

    labels: np.ndarray
    class_energies: np.ndarray  # ||u_j||_1 = |V| E(chi_j)
    energy: float  # Etilde at the returned labels
    energy_trace: list
    iterations: int
    converged: bool
    epsilon: float
    empty_classes: list = field(default_factory=list)
    degenerate: bool = False
    restart: int = 0
    purity: float | None = None
    restart_traces: list = field(default_factory=list)

    def to_record(self, g: Graph) -> dict:
        return {
            "labels": {g.node_names[i]: int(c) for i, c in enumerate(self.labels)},
            "class_energies": [float(x) for x in self.class_energies],
            "energy": self.energy,
            "epsilon": self.epsilon,
            "iterations": self.iterations,
            "converged": self.converged,
            "empty_classes": list(self.empty_classes),
            "degenerate": self.degenerate,
            "restart": self.restart,
            "purity": self.purity,
            "trace": list(self.energy_trace),
        }


def random_init(n: int, K: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform labels, with K distinct random nodes seeding every class."""
    labels = rng.integers(K, size=n)
    labels[rng.choice(n, K, replace=False)] = np.arange(K)
    return labels


def spectral_kmeans_init(g: Graph, K: int, seed=None) -> np.ndarray:
    """K-means (k-means++ seeding) on the K lowest eigenvectors of ``(L + L^T)/2``."""
    from sklearn.cluster import KMeans

    if K < 1 or K > g.n:
        raise ValidationError(f"K must satisfy 1 <= K <= n={g.n}")
    if K == 1:
        return np.zeros(g.n, dtype=int)
    rng = np.random.default_rng(seed)
    L = laplacian(g)
    Ls = (L + L.T) / 2.0
    try:
        if g.n <= _DENSE_EIG_MAX_N:
            _, vecs = scipy.linalg.eigh(Ls.toarray(), subset_by_index=[0, K - 1])
        else:
            _, vecs = spla.eigsh(Ls.tocsc(), k=K, sigma=-1e-6, which="LM")
    except (np.linalg.LinAlgError, spla.ArpackError, RuntimeError) as exc:
        warnings.warn(f"eigensolver failed ({exc}); falling back to random init", stacklevel=2)
        return random_init(g.n, K, rng)
    km = KMeans(n_clusters=K, init="k-means++", n_init=1, random_state=int(rng.integers(2**31 - 1)))
    return km.fit_predict(vecs).astype(int)


def argmax_random_ties(scores: np.ndarray, rng: np.random.Generator, rtol: float = TIE_RTOL) -> np.ndarray:
    """Column-wise argmax of a (K, n) score array, ties drawn uniformly."""
    best = scores.max(axis=0)
    tol = rtol * np.abs(np.where(np.isfinite(best), best, 0.0))
    tied = scores >= best - tol
    counts = tied.sum(axis=0)
    labels = np.argmax(tied, axis=0)
    for v in np.flatnonzero(counts > 1):
        labels[v] = rng.choice(np.flatnonzero(tied[:, v]))
    return labels


class _ClassSolves:
    """Per-iteration class solves with cached energy of the empty class."""

    def __init__(self, g: Graph, epsilon: float):
        self.g = g
        self.epsilon = epsilon
        self._empty_l1 = None

    def empty_l1(self) -> float:
        if self._empty_l1 is None:
            self._empty_l1 = float(np.sum(RegularizedSolver(RegularizedSystem(self.g, np.zeros(self.g.n), self.epsilon)).u))
        return self._empty_l1

    def evaluate(self, labels: np.ndarray, K: int):
        """Return ``(scores (K, n), class_l1 (K,))``."""
        n, eps = self.g.n, self.epsilon
        scores = np.empty((K, n))
        l1 = np.empty(K)
        for j in range(K):
            members = labels == j
            count = members.sum()
            if count == 0:
                scores[j] = -np.inf
                l1[j] = self.empty_l1()
            elif count == n:
                # the walk never leaves: infinite exit time, Etilde term 0
                scores[j] = np.inf
                l1[j] = np.inf
            else:
                solver = RegularizedSolver(RegularizedSystem(self.g, members.astype(float), eps))
                u, v = solver.u, solver.v
                l1[j] = float(np.sum(u))
                scores[j] = u * v / (1.0 + eps * l1[j]) ** 2
        return scores, l1


def tilde_energy(class_l1: np.ndarray, delta: float) -> float:
    return float(np.sum(1.0 / (1.0 + delta * np.asarray(class_l1))))


def _apply_supervision(scores: np.ndarray, sup: ClassSupervision | None) -> np.ndarray:
    if sup is None or not sup.weight or not sup.nodes.size:
        return scores
    scores = scores.copy()
    K = scores.shape[0]
    for j in range(K):
        own = sup.nodes[sup.classes == j]
        other = sup.nodes[sup.classes != j]
        # an empty class still has to be able to receive its labeled nodes
        own_base = np.where(np.isneginf(scores[j, own]), 0.0, scores[j, own])
        scores[j, own] = own_base + 2.0 * sup.weight
        scores[j, other] -= 2.0 * sup.weight
    return scores


def _run_once(g: Graph, cfg: PartitionerConfig, epsilon: float, rng: np.random.Generator, labels: np.ndarray,
              solves: _ClassSolves):
    K = cfg.K
    n = g.n
    trace = []
    history = [labels]
    converged = False
    iterations = 0
    for _ in range(cfg.max_iters):
        iterations += 1
        scores, l1 = solves.evaluate(labels, K)
        trace.append(tilde_energy(l1, epsilon))
        if np.count_nonzero(np.bincount(labels, minlength=K)) <= 1:
            converged = True
            break
        scores = _apply_supervision(scores, cfg.supervision)
        new = argmax_random_ties(scores, rng)
        if cfg.reseed_empty:
            new = _reseed_empty(new, K, rng)
        if np.array_equal(new, labels):
            converged = True
            break
        cols = np.arange(n)
        current = scores[labels, cols]
        proposed = scores[new, cols]
        finite = np.isfinite(current) & np.isfinite(proposed)
        gain = np.sum(proposed[finite] - current[finite])
        if np.all(finite) and gain <= TIE_RTOL * np.sum(np.abs(current)):
            converged = True
            break
        if len(history) >= 2 and np.array_equal(new, history[-2]):
            # 2-cycle: stop without declaring convergence
            labels = labels
            break
        labels = new
        history.append(labels)
    else:
        scores, l1 = solves.evaluate(labels, K)
        trace.append(tilde_energy(l1, epsilon))
    _, l1 = solves.evaluate(labels, K)
    return labels, l1, trace, iterations, converged


def _reseed_empty(labels, K, rng):
    counts = np.bincount(labels, minlength=K)
    for j in np.flatnonzero(counts == 0):
        donors = np.flatnonzero(np.bincount(labels, minlength=K)[labels] > 1)
        if donors.size:
            labels[rng.choice(donors)] = j
    return labels


def _initial_labels(g: Graph, cfg: PartitionerConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.init == "spectral":
        return spectral_kmeans_init(g, cfg.K, seed=rng.integers(2**31 - 1))
    return random_init(g.n, cfg.K, rng)


def partition(g: Graph, cfg: PartitionerConfig, metadata=None, init_labels=None) -> Partition:
    """Best-of-restarts partition (smallest ``Etilde`` with ``delta = eps``).

    ``init_labels`` fixes the starting partition of every restart
    (restarts then differ only in tie-breaking). ``metadata``, when given,
    fills :attr:`Partition.purity`.
    """
    cfg.validate(g.n)
    warn_if_not_strongly_connected(g)
    epsilon = cfg.resolve_epsilon(g)
    solves = _ClassSolves(g, epsilon)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)

    def one(ss):
        rng = np.random.default_rng(ss)
        labels0 = _initial_labels(g, cfg, rng) if init_labels is None else np.asarray(init_labels, dtype=int).copy()
        return _run_once(g, cfg, epsilon, rng, labels0, solves)

    runs = parallel_map(one, seeds, cfg.jobs)
    keys = [(-_labels_violated(r[0], cfg), -tilde_energy(r[1], epsilon)) for r in runs]
    best = max(range(len(runs)), key=lambda r: keys[r])
    labels, l1, trace, iterations, converged = runs[best]
    counts = np.bincount(labels, minlength=cfg.K)
    empty = [int(j) for j in np.flatnonzero(counts == 0)]
    result = Partition(
        labels=labels,
        class_energies=l1,
        energy=tilde_energy(l1, epsilon),
        energy_trace=trace,
        iterations=iterations,
        converged=converged,
        epsilon=epsilon,
        empty_classes=empty,
        degenerate=len(empty) >= cfg.K - 1,
        restart=best,
        restart_traces=[r[2] for r in runs],
    )
    if metadata is not None:
        result.purity = purity(labels, metadata)
    return result


def _labels_violated(labels, cfg: PartitionerConfig) -> int:
    sup = cfg.supervision
    if sup is None or not sup.weight:
        return 0
    return int(np.sum(labels[sup.nodes] != sup.classes))


def partition_ssl(g: Graph, cfg: PartitionerConfig, metadata=None) -> Partition:
    """Semi-supervised partition: labeled nodes gain ``+2 lambda`` toward their class
    and ``-2 lambda`` toward every other class."""
    if cfg.supervision is None:
        raise ValidationError("partition_ssl needs cfg.supervision")
    return partition(g, cfg, metadata=metadata)


EPS_SWEEP_COLUMNS = ["ell", "nu", "epsilon", "purity", "energy", "iterations", "converged"]


def nu_from_ell(ell) -> float:
    return float(np.exp(0.2 * ell))


def epsilon_sweep(g: Graph, cfg: PartitionerConfig, ells, metadata=None) -> SweepResult:
    """Best-restart partition for each ``nu = exp(0.2 * ell)``; same seed throughout."""
    out = SweepResult(list(EPS_SWEEP_COLUMNS))
    for ell in ells:
        nu = nu_from_ell(ell)
        res = partition(g, replace(cfg, nu=nu, epsilon=None), metadata=metadata)
        out.append({
            "ell": ell,
            "nu": nu,
            "epsilon": res.epsilon,
            "purity": res.purity if res.purity is not None else float("nan"),
            "energy": res.energy,
            "iterations": res.iterations,
            "converged": res.converged,
        })
    return out
