"""Weighted directed graphs, edge-list I/O and Laplacian quantities.

Edge ``i -> j`` with weight ``A[i, j]``. The random walk moves along
out-edges with probabilities ``P = D^{-1} A`` where ``D = diag(d)`` and
``d`` is the out-degree (strength) vector.

Node identifiers are arbitrary strings; they are mapped to dense 0-based
indices in order of first appearance in the input.
"""
from __future__ import annotations

import io
import os
import warnings
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np
import scipy.io
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .errors import ConnectivityWarning, GraphParseError, ValidationError


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable weighted directed graph.

    Use :meth:`from_adjacency` or :func:`load_graph` rather than the raw
    constructor; they canonicalize storage and validate invariants.

    Attributes
    ----------
    adjacency : scipy.sparse.csr_matrix
        Row ``i`` holds the out-edges of node ``i``; explicit zeros are never
        stored and column indices are sorted.
    out_degree : ndarray
        ``d_i``, the left-to-right (by column index) sum of row ``i``.
    node_names : tuple of str
        External identifiers, ``node_names[i]`` names index ``i``.
    """

    adjacency: sp.csr_matrix
    out_degree: np.ndarray
    node_names: tuple

    @classmethod
    def from_adjacency(cls, A, node_names=None) -> "Graph":
        A = sp.csr_matrix(A, dtype=np.float64, copy=True)
        if A.shape[0] != A.shape[1]:
            raise ValidationError(f"adjacency must be square, got {A.shape}")
        A.sum_duplicates()
        if A.nnz and np.any(A.data < 0):
            raise ValidationError("negative edge weight")
        if A.nnz and not np.all(np.isfinite(A.data)):
            raise ValidationError("non-finite edge weight")
        A.eliminate_zeros()
        A.sort_indices()
        n = A.shape[0]
        if node_names is None:
            node_names = tuple(str(i) for i in range(n))
        else:
            node_names = tuple(str(x) for x in node_names)
            if len(node_names) != n:
                raise ValidationError("node_names length does not match adjacency")
        d = row_sums(A)
        dangling = np.flatnonzero(d <= 0)
        if dangling.size:
            shown = ", ".join(repr(node_names[i]) for i in dangling[:5])
            more = "" if dangling.size <= 5 else f" (+{dangling.size - 5} more)"
            raise ValidationError(f"dangling node(s) with zero out-degree: {shown}{more}")
        A.data.flags.writeable = False
        A.indices.flags.writeable = False
        A.indptr.flags.writeable = False
        d.flags.writeable = False
        return cls(A, d, node_names)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def num_edges(self) -> int:
        return self.adjacency.nnz

    def index_of(self, name) -> int:
        lookup = self.__dict__.get("_lookup")
        if lookup is None:
            lookup = {s: i for i, s in enumerate(self.node_names)}
            object.__setattr__(self, "_lookup", lookup)
        try:
            return lookup[str(name)]
        except KeyError:
            raise ValidationError(f"unknown node {name!r}") from None

    def indices_of(self, names: Iterable) -> np.ndarray:
        return np.array([self.index_of(x) for x in names], dtype=np.intp)

    def is_symmetric(self) -> bool:
        diff = self.adjacency - self.adjacency.T
        return diff.nnz == 0 or not np.any(diff.data)


def row_sums(A: sp.csr_matrix) -> np.ndarray:
    """Row sums accumulated strictly left to right in column order.

    Vectorized over rows: step ``j`` adds the ``j``-th stored entry of every
    row that has one, so each row sees one fixed sequential order.
    """
    lengths = np.diff(A.indptr)
    out = np.zeros(A.shape[0])
    for j in range(int(lengths.max(initial=0))):
        rows = np.flatnonzero(lengths > j)
        out[rows] += A.data[A.indptr[rows] + j]
    return out


def _read_text(source) -> str:
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            return fh.read()
    return source.read()


def parse_edge_list(text: str):
    """Parse ``src dst [weight]`` lines into (names, rows, cols, weights)."""
    index: dict[str, int] = {}
    rows, cols, weights = [], [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise GraphParseError(f"expected 'src dst [weight]', got {raw.strip()!r}", lineno)
        if len(parts) == 3:
            try:
                w = float(parts[2])
            except ValueError:
                raise GraphParseError(f"bad weight {parts[2]!r}", lineno) from None
            if w < 0:
                raise ValidationError(f"line {lineno}: negative weight {w}")
            if not np.isfinite(w):
                raise ValidationError(f"line {lineno}: non-finite weight {parts[2]!r}")
        else:
            w = 1.0
        ids = []
        for name in parts[:2]:
            if name not in index:
                index[name] = len(index)
            ids.append(index[name])
        rows.append(ids[0])
        cols.append(ids[1])
        weights.append(w)
    names = tuple(index)
    return names, rows, cols, weights


def load_graph(source, symmetrize: bool = False, add_self_loops: float | None = None) -> Graph:
    """Read an edge list or MatrixMarket adjacency.

    Parameters
    ----------
    source : path or text stream
        Whitespace separated ``src dst [weight]`` lines (``#`` comments,
        weight defaults to 1, parallel edges are summed), or a MatrixMarket
        coordinate file (detected by its ``%%MatrixMarket`` header).
    symmetrize : bool
        Replace ``A`` by ``(A + A^T) / 2``.
    add_self_loops : float, optional
        Add a self loop of this weight to every node before validation,
        which is the explicit way to admit graphs with dangling nodes.
    """
    text = _read_text(source)
    if text.lstrip().startswith("%%MatrixMarket"):
        try:
            A = sp.csr_matrix(scipy.io.mmread(io.StringIO(text)))
        except Exception as exc:  # scipy raises a mix of ValueError/IndexError
            raise GraphParseError(f"invalid MatrixMarket input: {exc}") from exc
        names = None
    else:
        names, rows, cols, weights = parse_edge_list(text)
        n = len(names)
        A = sp.coo_matrix((weights, (rows, cols)), shape=(n, n)).tocsr()
    if A.nnz and np.any(A.data < 0):
        raise ValidationError("negative edge weight")
    if symmetrize:
        A = symmetrized_adjacency(A)
    if add_self_loops:
        if add_self_loops < 0:
            raise ValidationError("self-loop weight must be nonnegative")
        A = A + add_self_loops * sp.identity(A.shape[0], format="csr")
    return Graph.from_adjacency(A, names)


def save_graph(g: Graph, dest) -> None:
    """Write ``src dst weight`` lines; ``repr`` keeps weights bit-exact."""
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", encoding="utf-8") as fh:
            save_graph(g, fh)
        return
    A = g.adjacency
    names = g.node_names
    for i in range(g.n):
        for p in range(A.indptr[i], A.indptr[i + 1]):
            dest.write(f"{names[i]} {names[A.indices[p]]} {float(A.data[p])!r}\n")


def symmetrized_adjacency(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A, dtype=np.float64)
    return ((A + A.T) / 2.0).tocsr()


def symmetrize(g: Graph) -> Graph:
    return Graph.from_adjacency(symmetrized_adjacency(g.adjacency), g.node_names)


def laplacian(g: Graph) -> sp.csr_matrix:
    """Out-degree Laplacian ``L = D - A`` (rows sum to zero)."""
    return (sp.diags(g.out_degree) - g.adjacency).tocsr()


def transition_matrix(g: Graph) -> sp.csr_matrix:
    return (sp.diags(1.0 / g.out_degree) @ g.adjacency).tocsr()


def laplacian_frobenius(g: Graph) -> float:
    L = laplacian(g)
    return float(np.sqrt(np.sum(L.data**2)))


def strong_components(g: Graph) -> tuple[int, np.ndarray]:
    return connected_components(g.adjacency, directed=True, connection="strong")


def is_strongly_connected(g: Graph) -> bool:
    if g.n <= 1:
        return True
    A = g.adjacency
    forward = breadth_first_order(A, 0, directed=True, return_predecessors=False)
    if forward.size != g.n:
        return False
    backward = breadth_first_order(A.T.tocsr(), 0, directed=True, return_predecessors=False)
    return backward.size == g.n


def warn_if_not_strongly_connected(g: Graph) -> bool:
    ok = is_strongly_connected(g)
    if not ok:
        ncomp, _ = strong_components(g)
        warnings.warn(
            f"graph is not strongly connected ({ncomp} strong components); "
            "exit times may be infinite or solutions only nonnegative",
            ConnectivityWarning,
            stacklevel=3,
        )
    return ok


def nodes_unable_to_reach(g: Graph, targets: np.ndarray) -> np.ndarray:
    """Indices of nodes with no directed path into the boolean mask ``targets``."""
    targets = np.asarray(targets, dtype=bool)
    reached = targets.copy()
    if not reached.any():
        return np.arange(g.n)
    AT = g.adjacency.T.tocsr()
    frontier = np.flatnonzero(reached)
    while frontier.size:
        # predecessors of the frontier in the original graph
        sub = AT[frontier]
        nxt = np.unique(sub.indices)
        nxt = nxt[~reached[nxt]]
        reached[nxt] = True
        frontier = nxt
    return np.flatnonzero(~reached)


def load_labels(source) -> dict[str, str]:
    """Read ``node label`` pairs; later duplicates must agree."""
    text = _read_text(source)
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphParseError(f"expected 'node label', got {raw.strip()!r}", lineno)
        node, label = parts
        if node in out and out[node] != label:
            raise ValidationError(f"line {lineno}: conflicting labels for node {node!r}")
        out[node] = label
    return out


def load_node_set(source) -> list[str]:
    text = _read_text(source)
    names = []
    for raw in text.splitlines():
        names.extend(raw.split("#", 1)[0].split())
    return names


def write_labels(dest: TextIO, names, labels) -> None:
    for name, lab in zip(names, labels):
        dest.write(f"{name} {lab}\n")
