"""Rearrangement search for a k-node set with long mean exit time.

Each step solves the regularized forward and transpose systems at the
current indicator ``chi_S`` and moves ``S`` to the ``k`` nodes with the
largest ``u * v`` (the largest gradient entries). Convexity of the relaxed
energy makes every non-stationary step strictly increase it, so the loop
terminates at a fixed point.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from ._concurrency import parallel_map
from .errors import SingularSystemError, ValidationError
from .graph import Graph, laplacian_frobenius, warn_if_not_strongly_connected
from .poisson import RegularizedSolver, RegularizedSystem, solve_exact_met
from .tables import SweepResult

TIE_RTOL = 1e-12


@dataclass
class Supervision:
    """Labeled nodes for the detector: ``targets[i] = 1`` wants ``nodes[i]`` inside ``S``."""

    nodes: np.ndarray
    targets: np.ndarray
    weight: float = 1e6

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=np.intp)
        self.targets = np.asarray(self.targets, dtype=int)
        if self.nodes.shape != self.targets.shape:
            raise ValidationError("supervision nodes and targets differ in length")
        if np.unique(self.nodes).size != self.nodes.size:
            raise ValidationError("a node is labeled more than once")
        if not np.all((self.targets == 0) | (self.targets == 1)):
            raise ValidationError("detector supervision targets must be 0 or 1")
        if self.weight < 0:
            raise ValidationError("supervision weight must be nonnegative")


@dataclass
class DetectorConfig:
    k: int
    epsilon_scale: float = 50.0
    restarts: int = 5
    max_iters: int = 100
    seed: int | None = None
    supervision: Supervision | None = None
    epsilon: float | None = None  # overrides epsilon_scale / ||L||_F
    jobs: int | None = None

    def validate(self, n: int) -> None:
        if not 1 <= self.k < n:
            raise ValidationError(f"k must satisfy 1 <= k < n={n}, got {self.k}")
        if self.epsilon is None and self.epsilon_scale < 1:
            raise ValidationError("epsilon_scale C must be >= 1")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValidationError("epsilon must be positive")
        if self.restarts < 1 or self.max_iters < 1:
            raise ValidationError("restarts and max_iters must be positive")
        sup = self.supervision
        if sup is not None:
            if sup.nodes.size and (sup.nodes.min() < 0 or sup.nodes.max() >= n):
                raise ValidationError("supervision node index out of range")
            if int(np.sum(sup.targets == 1)) > self.k:
                warnings.warn("more nodes labeled inside than k; not all labels can be honored", stacklevel=3)

    def resolve_epsilon(self, g: Graph) -> float:
        if self.epsilon is not None:
            return float(self.epsilon)
        return self.epsilon_scale / laplacian_frobenius(g)


@dataclass
class DetectorResult:
    S: np.ndarray
    energy: float
    energy_trace: list
    exact_met: float
    iterations: int
    converged: bool
    epsilon: float
    restart: int = 0
    restart_energies: list = field(default_factory=list)

    def to_record(self, g: Graph) -> dict:
        return {
            "S": sorted_names(g, self.S),
            "tau": self.exact_met,
            "energy": self.energy,
            "epsilon": self.epsilon,
            "iterations": self.iterations,
            "converged": self.converged,
            "restart": self.restart,
            "trace": list(self.energy_trace),
        }


def _name_key(name: str):
    try:
        return (0, int(name), "")
    except ValueError:
        return (1, 0, name)


def sorted_names(g: Graph, idx) -> list:
    return sorted((g.node_names[i] for i in idx), key=_name_key)


def select_top_k(scores: np.ndarray, k: int, rng: np.random.Generator, rtol: float = TIE_RTOL) -> np.ndarray:
    """Indices of the ``k`` largest scores; ties at the cut are drawn uniformly."""
    order = np.argsort(-scores, kind="stable")
    kth = scores[order[k - 1]]
    tol = rtol * abs(kth)
    above = np.flatnonzero(scores > kth + tol)
    tied = np.flatnonzero(np.abs(scores - kth) <= tol)
    need = k - above.size
    if need < tied.size:
        tied = rng.choice(tied, need, replace=False)
    return np.sort(np.concatenate([above, tied]))


def detect_ssl_score(u: np.ndarray, v: np.ndarray, cfg: DetectorConfig, epsilon: float) -> np.ndarray:
    """Selection scores ``u * v / eps``, shifted by ``+-2 lambda`` on labeled nodes."""
    score = u * v / epsilon
    sup = cfg.supervision
    if sup is not None and sup.weight:
        score = score.copy()
        score[sup.nodes] += 2.0 * sup.weight * (2 * sup.targets - 1)
    return score


def rearrangement_step(g: Graph, S: np.ndarray, epsilon: float, cfg: DetectorConfig, rng: np.random.Generator):
    """One solve-and-select step from ``S`` (sorted indices).

    Returns ``(S_next, energy_at_S, moved)``; ``moved`` is False when ``S``
    already maximizes the linearized objective, in which case ``S_next is S``.
    """
    phi = np.zeros(g.n)
    phi[S] = 1.0
    solver = RegularizedSolver(RegularizedSystem(g, phi, epsilon))
    u, v = solver.u, solver.v
    energy = float(np.mean(u))
    score = detect_ssl_score(u, v, cfg, epsilon)
    S_next = select_top_k(score, cfg.k, rng)
    if np.array_equal(S_next, S):
        return S, energy, False
    current = score[S].sum()
    gain = score[S_next].sum() - current
    if gain <= TIE_RTOL * abs(current):
        return S, energy, False
    return S_next, energy, True


def _run_once(g: Graph, cfg: DetectorConfig, epsilon: float, rng: np.random.Generator):
    S = np.sort(rng.choice(g.n, cfg.k, replace=False))
    trace = []
    converged = False
    for _ in range(cfg.max_iters):
        S_next, energy, moved = rearrangement_step(g, S, epsilon, cfg, rng)
        trace.append(energy)
        if not moved:
            converged = True
            break
        S = S_next
    else:
        # S was replaced after the last evaluated step; report the evaluated set
        S = _last_evaluated(g, S, epsilon, trace)
    return S, trace, converged


def _last_evaluated(g, S, epsilon, trace):
    phi = np.zeros(g.n)
    phi[S] = 1.0
    trace.append(float(np.mean(RegularizedSolver(RegularizedSystem(g, phi, epsilon)).u)))
    return S


def _labels_honored(S: np.ndarray, cfg: DetectorConfig, n: int) -> int:
    sup = cfg.supervision
    if sup is None:
        return 0
    inside = np.zeros(n, dtype=bool)
    inside[S] = True
    return int(np.sum(inside[sup.nodes] == (sup.targets == 1)))


def detect(g: Graph, cfg: DetectorConfig) -> DetectorResult:
    """Best-of-restarts rearrangement for a ``cfg.k``-node set.

    Restarts are ranked by the relaxed energy at their fixed points (ties
    in the number of honored labels first, when supervised). ``exact_met``
    is the unrelaxed mean exit time of the returned set.
    """
    cfg.validate(g.n)
    warn_if_not_strongly_connected(g)
    epsilon = cfg.resolve_epsilon(g)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)

    def one(ss):
        return _run_once(g, cfg, epsilon, np.random.default_rng(ss))

    runs = parallel_map(one, seeds, cfg.jobs)
    keys = [(_labels_honored(S, cfg, g.n), trace[-1]) for S, trace, _ in runs]
    best = max(range(len(runs)), key=lambda r: keys[r])
    S, trace, converged = runs[best]
    try:
        _, tau = solve_exact_met(g, S, check_connectivity=False)
    except SingularSystemError:
        tau = float("inf")
    return DetectorResult(
        S=S,
        energy=trace[-1],
        energy_trace=trace,
        exact_met=tau,
        iterations=len(trace),
        converged=converged,
        epsilon=epsilon,
        restart=best,
        restart_energies=[t[-1] for _, t, _ in runs],
    )


def is_fixed_point(g: Graph, S, cfg: DetectorConfig, epsilon: float | None = None) -> bool:
    """True when one more step from ``S`` selects a set of equal score."""
    S = np.sort(np.asarray(S, dtype=np.intp))
    epsilon = cfg.resolve_epsilon(g) if epsilon is None else epsilon
    _, _, moved = rearrangement_step(g, S, epsilon, cfg, np.random.default_rng(0))
    return not moved


K_SWEEP_COLUMNS = ["k", "tau", "energy", "iterations", "converged", "epsilon"]


def k_sweep(g: Graph, k_values, cfg: DetectorConfig) -> SweepResult:
    """Best-of-restarts detection for each ``k``; same seed at every grid point."""
    out = SweepResult(list(K_SWEEP_COLUMNS))
    for k in k_values:
        res = detect(g, replace(cfg, k=int(k)))
        out.append({
            "k": int(k),
            "tau": res.exact_met,
            "energy": res.energy,
            "iterations": res.iterations,
            "converged": res.converged,
            "epsilon": res.epsilon,
        })
    return out


def second_differences(values) -> np.ndarray:
    """``f[i-1] - 2 f[i] + f[i+1]`` at interior grid points (NaN at the ends)."""
    f = np.asarray(values, dtype=float)
    out = np.full(f.shape, np.nan)
    if f.size >= 3:
        out[1:-1] = f[:-2] - 2 * f[1:-1] + f[2:]
    return out


def find_breaks(k_values, values, count: int = 2) -> list:
    """Grid values of ``k`` with the ``count`` largest ``|second difference|``."""
    dd = np.abs(second_differences(values))
    dd = np.where(np.isnan(dd), -np.inf, dd)
    order = np.argsort(-dd, kind="stable")[:count]
    ks = np.asarray(k_values)
    return [ks[i].item() for i in order if np.isfinite(dd[i])]
