"""Exit-time systems and the regularized Schroedinger solves.

Exact mean exit time from ``S``::

    L_SS v_S = d_S,   v = 0 off S,   tau(S) = mean(v)

Regularized system for a soft indicator ``phi`` and ``eps > 0``::

    (L + diag((1 - phi) / eps)) u = d
    (L + diag((1 - phi) / eps))^T v = 1
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SingularSystemError, SolverError, ValidationError
from .graph import Graph, laplacian, nodes_unable_to_reach, strong_components, warn_if_not_strongly_connected

DIRECT_MAX_N = 20_000
DEFAULT_TOL = 1e-10
DEFAULT_MAXITER = 10_000
_DENSE_MAX_N = 150


def as_mask(n: int, S) -> np.ndarray:
    """Boolean membership mask from an index collection or a mask."""
    S = np.asarray(S)
    if S.dtype == bool:
        if S.shape != (n,):
            raise ValidationError(f"mask has shape {S.shape}, expected ({n},)")
        return S.copy()
    mask = np.zeros(n, dtype=bool)
    idx = S.astype(np.intp).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ValidationError("node index out of range")
    mask[idx] = True
    return mask


def _relative_residual(M, x, b) -> float:
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(M @ x - b) / (nb if nb > 0 else 1.0))


class LinearOperatorSolver:
    """Factor (or precondition) a sparse matrix once; solve with it or its transpose.

    Sparse LU for ``n <= DIRECT_MAX_N``, Jacobi-preconditioned BiCGSTAB
    otherwise. Every solution is checked against ``tol`` relative residual;
    direct solves get up to two steps of iterative refinement first.
    """

    def __init__(self, M: sp.spmatrix, tol: float = DEFAULT_TOL, maxiter: int = DEFAULT_MAXITER,
                 method: str | None = None):
        self.M = sp.csc_matrix(M)
        self.tol = tol
        self.maxiter = maxiter
        n = self.M.shape[0]
        self.method = method or ("direct" if n <= DIRECT_MAX_N else "iterative")
        self._MT = None
        if self.method == "direct":
            try:
                self._lu = spla.splu(self.M)
            except RuntimeError as exc:
                raise SingularSystemError(f"factorization failed: {exc}") from exc
        elif self.method == "iterative":
            diag = self.M.diagonal()
            if np.any(diag <= 0):
                raise SolverError("nonpositive diagonal; Jacobi preconditioner undefined")
            self._precond = spla.LinearOperator(self.M.shape, matvec=lambda x: x / diag, dtype=float)
        else:
            raise ValueError(f"unknown method {method!r}")

    @property
    def MT(self):
        if self._MT is None:
            self._MT = self.M.T.tocsc()
        return self._MT

    def solve(self, b, transpose: bool = False):
        """Return ``(x, relative_residual)``."""
        b = np.asarray(b, dtype=float)
        A = self.MT if transpose else self.M
        if self.method == "direct":
            trans = "T" if transpose else "N"
            x = self._lu.solve(b, trans=trans)
            res = _relative_residual(A, x, b)
            for _ in range(2):
                if res <= self.tol or not np.isfinite(res):
                    break
                x = x + self._lu.solve(b - A @ x, trans=trans)
                res = _relative_residual(A, x, b)
        else:
            x, info = spla.bicgstab(A, b, rtol=self.tol, atol=0.0, maxiter=self.maxiter, M=self._precond)
            res = _relative_residual(A, x, b)
            if info < 0:
                raise SolverError("BiCGSTAB breakdown", residual=res)
        if not np.isfinite(res) or res > self.tol:
            raise SolverError(f"solve did not reach tolerance {self.tol:g} (residual {res:.3e})", residual=res)
        return x, res


@dataclass(frozen=True, eq=False)
class RegularizedSystem:
    """``L + diag((1 - phi)/epsilon)`` on a fixed graph."""

    graph: Graph
    phi: np.ndarray
    epsilon: float

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        if phi.shape != (self.graph.n,):
            raise ValidationError(f"phi has shape {phi.shape}, expected ({self.graph.n},)")
        if not np.all((phi >= 0) & (phi <= 1)):
            raise ValidationError("phi entries must lie in [0, 1]")
        if not (self.epsilon > 0 and np.isfinite(self.epsilon)):
            raise ValidationError(f"epsilon must be positive, got {self.epsilon!r}")
        object.__setattr__(self, "phi", phi)

    @property
    def potential(self) -> np.ndarray:
        return (1.0 - self.phi) / self.epsilon

    def operator(self) -> sp.csr_matrix:
        return (laplacian(self.graph) + sp.diags(self.potential)).tocsr()

    def check_nonsingular(self) -> None:
        """Raise if some node cannot reach the support of the potential.

        Such nodes form a closed set on which the operator reduces to a
        Laplacian block with the constant vector in its kernel.
        """
        support = self.potential > 0
        if not support.any():
            raise SingularSystemError("phi == 1 everywhere: operator reduces to the singular Laplacian")
        trapped = nodes_unable_to_reach(self.graph, support)
        if trapped.size:
            raise SingularSystemError(
                f"{trapped.size} node(s) cannot reach any node with positive potential",
                trapped=trapped,
                components=_group_by_component(self.graph, trapped),
            )


@dataclass
class RelaxedSolution:
    u: np.ndarray
    v: np.ndarray | None
    residual_norms: tuple = field(default=(0.0, 0.0))

    @property
    def energy(self) -> float:
        """``mean(u)``, the relaxed mean exit time."""
        return float(np.mean(self.u))


class RegularizedSolver:
    """Factor one regularized operator; forward and transpose solves on demand."""

    def __init__(self, system: RegularizedSystem, tol: float = DEFAULT_TOL, maxiter: int = DEFAULT_MAXITER,
                 method: str | None = None):
        system.check_nonsingular()
        self.system = system
        self._solver = LinearOperatorSolver(system.operator(), tol=tol, maxiter=maxiter, method=method)
        self._u = self._v = None
        self._res = [0.0, 0.0]

    @property
    def u(self) -> np.ndarray:
        if self._u is None:
            self._u, self._res[0] = self._solver.solve(self.system.graph.out_degree)
        return self._u

    @property
    def v(self) -> np.ndarray:
        if self._v is None:
            self._v, self._res[1] = self._solver.solve(np.ones(self.system.graph.n), transpose=True)
        return self._v

    def solution(self, need_v: bool = True) -> RelaxedSolution:
        u = self.u
        v = self.v if need_v else None
        return RelaxedSolution(u, v, tuple(self._res))


def solve_regularized(system: RegularizedSystem, tol: float = DEFAULT_TOL, maxiter: int = DEFAULT_MAXITER,
                      need_v: bool = True, method: str | None = None) -> RelaxedSolution:
    """Solve the forward system (rhs ``d``) and, if asked, its transpose (rhs ``1``)."""
    return RegularizedSolver(system, tol=tol, maxiter=maxiter, method=method).solution(need_v=need_v)


def neumann_bound_check(system: RegularizedSystem, solution: RelaxedSolution) -> bool:
    """True iff ``u`` (and ``v``, when present) are strictly positive."""
    ok = bool(np.all(solution.u > 0))
    if solution.v is not None:
        ok = ok and bool(np.all(solution.v > 0))
    return ok


def _group_by_component(g: Graph, nodes: np.ndarray) -> list[list[int]]:
    _, comp = strong_components(g)
    groups: dict[int, list[int]] = {}
    for i in nodes:
        groups.setdefault(int(comp[i]), []).append(int(i))
    return list(groups.values())


def solve_exact_met(g: Graph, S, check_connectivity: bool = True):
    """Mean exit times from ``S`` and their average over all nodes.

    Returns
    -------
    v : ndarray
        ``v[i]`` is the expected number of steps for a walker started at
        ``i`` to first reach a node outside ``S`` (zero off ``S``).
    tau : float
        ``v.mean()``.
    """
    mask = as_mask(g.n, S)
    if not mask.any():
        raise ValidationError("S must be nonempty")
    if mask.all():
        raise ValidationError("S must not contain every node")
    if check_connectivity:
        warn_if_not_strongly_connected(g)
    trapped = nodes_unable_to_reach(g, ~mask)
    if trapped.size:
        raise SingularSystemError(
            f"{trapped.size} node(s) in S cannot reach the complement; exit time is infinite",
            trapped=trapped,
            components=_group_by_component(g, trapped),
        )
    idx = np.flatnonzero(mask)
    L = laplacian(g)
    L_SS = L[idx][:, idx]
    rhs = g.out_degree[idx]
    if idx.size <= _DENSE_MAX_N:
        v_S = scipy.linalg.solve(L_SS.toarray(), rhs)
    else:
        v_S, _ = LinearOperatorSolver(L_SS).solve(rhs)
    v = np.zeros(g.n)
    v[idx] = v_S
    return v, float(v.sum() / g.n)
