"""Relaxed exit-time energy, its derivatives, and the K-class partition energy.

For a soft indicator ``phi`` in ``[0, 1]^n`` and ``eps > 0`` let
``u = (L + X)^{-1} d`` and ``v = (L + X)^{-T} 1`` with the potential
``X = (1 - phi) / eps``. Then::

    E(phi)        = mean(u)
    dE/dphi       = u * v / (n * eps)
    d2E/dphi2     = (G^T o W + G o W^T) / (n * eps**2),  G = (L + X)^{-1}, W = u v^T

``E`` is strongly convex in ``phi``, so maximizing it over
``{0 <= phi <= 1, sum(phi) = k}`` always lands on an indicator vector.

The partition energy (minimized) is::

    Etilde(phi_1..phi_K) = sum_j 1 / (1 + delta * n * E(phi_j))

with ``delta = eps`` by default. Two natural alternatives are not
optimized here: ``sum_j E(chi_j)`` is maximized by lumping all nodes into
one class, and ``sum_j 1 / (n E(chi_j))`` lacks a provable bang-bang
property.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ValidationError
from .graph import Graph
from .poisson import RegularizedSolver, RegularizedSystem

HESSIAN_MAX_N = 500
SIMPLEX_TOL = 1e-9


def relaxed_energy(g: Graph, phi, epsilon: float) -> float:
    """Relaxed mean exit time ``mean(u)`` (forward solve only)."""
    return RegularizedSolver(RegularizedSystem(g, phi, epsilon)).solution(need_v=False).energy


def energy_and_gradient(g: Graph, phi, epsilon: float):
    solver = RegularizedSolver(RegularizedSystem(g, phi, epsilon))
    u, v = solver.u, solver.v
    return float(np.mean(u)), u * v / (g.n * epsilon)


def energy_gradient(g: Graph, phi, epsilon: float) -> np.ndarray:
    """Gradient of :func:`relaxed_energy` with respect to ``phi``.

    Raising ``phi_i`` lowers the potential at ``i``, so every entry is
    positive on a strongly connected graph.
    """
    return energy_and_gradient(g, phi, epsilon)[1]


def _green_and_solutions(g: Graph, phi, epsilon: float):
    if g.n > HESSIAN_MAX_N:
        raise ValidationError(
            f"dense Hessian limited to n <= {HESSIAN_MAX_N} (n={g.n}); use gradient finite differences instead"
        )
    system = RegularizedSystem(g, phi, epsilon)
    system.check_nonsingular()
    M = system.operator().toarray()
    G = np.linalg.inv(M)
    u = G @ g.out_degree
    v = G.T @ np.ones(g.n)
    return G, u, v


def potential_hessian(g: Graph, phi, epsilon: float) -> np.ndarray:
    """Hessian of ``sum(u)`` with respect to the potential ``X``.

    ``H[j, k] = G[k, j] u[j] v[k] + G[j, k] u[k] v[j]``, which is symmetric.
    """
    G, u, v = _green_and_solutions(g, phi, epsilon)
    W = np.outer(u, v)
    return G.T * W + G * W.T


def energy_hessian(g: Graph, phi, epsilon: float) -> np.ndarray:
    """Dense Hessian of :func:`relaxed_energy` in ``phi`` (n <= 500)."""
    return potential_hessian(g, phi, epsilon) / (g.n * epsilon**2)


def symmetric_potential_hessian(g: Graph, phi, epsilon: float) -> np.ndarray:
    """``G o (W + W^T)``: the potential Hessian when ``L`` is symmetric."""
    G, u, v = _green_and_solutions(g, phi, epsilon)
    W = np.outer(u, v)
    return G * (W + W.T)


def validate_simplex(phis, n: int) -> np.ndarray:
    P = np.asarray(phis, dtype=float)
    if P.ndim != 2 or P.shape[1] != n:
        raise ValidationError(f"expected K x {n} array of class indicators, got shape {P.shape}")
    if np.any(P < -SIMPLEX_TOL) or np.any(P > 1 + SIMPLEX_TOL):
        raise ValidationError("class indicators must lie in [0, 1]")
    if np.max(np.abs(P.sum(axis=0) - 1.0)) > SIMPLEX_TOL:
        raise ValidationError("class indicators must sum to 1 at every node")
    return np.clip(P, 0.0, 1.0)


def class_l1(g: Graph, phi, epsilon: float) -> float:
    """``n * E(phi) = ||u||_1``; ``inf`` when ``phi == 1`` (the walk never exits)."""
    phi = np.asarray(phi, dtype=float)
    if np.all(phi >= 1.0):
        return float("inf")
    return float(np.sum(RegularizedSolver(RegularizedSystem(g, phi, epsilon)).u))


def partition_energy(g: Graph, phis: Sequence, epsilon: float, delta: float | None = None) -> float:
    """``sum_j 1 / (1 + delta * ||u_j||_1)`` over the K class indicators.

    A class holding every node has infinite exit time and contributes 0.
    """
    delta = epsilon if delta is None else delta
    P = validate_simplex(phis, g.n)
    total = 0.0
    for phi in P:
        total += 1.0 / (1.0 + delta * class_l1(g, phi, epsilon))
    return total


def labels_to_indicators(labels, K: int) -> np.ndarray:
    labels = np.asarray(labels)
    return (labels[None, :] == np.arange(K)[:, None]).astype(float)
