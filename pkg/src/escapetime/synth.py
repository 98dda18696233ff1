"""Synthetic benchmark graphs.

MICKEE (multiscale K-block escape ensemble): ``N`` nodes split into planted
blocks ``N_1 < ... < N_K`` and a background block holding the rest. Each
planted block is a dense Erdos-Renyi graph, the background is a sparse ER
graph (or a configuration-model multigraph with power-law degrees), and
every pair of nodes in different blocks is joined with probability
``inter_density`` by a weak edge.

ER + cycle: a directed ER graph feeding into a directed cycle that has a
single edge back, a dynamical trap invisible to undirected methods.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, fields

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import EscapeTimeError, ValidationError
from .graph import Graph, is_strongly_connected

MAX_RETRIES = 100
WEIGHT_DISTRIBUTIONS = ("normal", "constant", "uniform")


@dataclass
class MickeeSpec:
    """Parameters of a MICKEE sample.

    Exactly one of ``intra_degree`` / ``intra_density`` sets the planted
    blocks (expected degree = density * (size - 1)); likewise
    ``inter_density`` / ``inter_degree`` for cross-block edges, where the
    degree is the mean taken over the smallest block's nodes. The background
    density defaults to the value giving the planted blocks' expected degree.

    ``inter_weight`` is the constant weight, the upper end of the uniform
    range, or the sample maximum of the (half-)normal weights.
    """

    N: int = 1000
    block_sizes: tuple = (80, 160, 240)
    intra_degree: float | None = 20.8
    intra_density: float | None = None
    background_density: float | None = None
    inter_density: float | None = 0.01
    inter_degree: float | None = None
    inter_weight: float = 0.05
    inter_weight_dist: str = "normal"
    intra_weight: float = 1.0
    powerlaw_exponent: float | None = None
    seed: int | None = 0

    def __post_init__(self):
        self.block_sizes = tuple(int(b) for b in self.block_sizes)
        self.validate()

    @property
    def background_size(self) -> int:
        return self.N - sum(self.block_sizes)

    def validate(self) -> None:
        sizes = self.block_sizes
        if not sizes or any(b < 2 for b in sizes):
            raise ValidationError("planted blocks need at least 2 nodes each")
        if sum(sizes) >= self.N:
            raise ValidationError("planted blocks must leave a nonempty background")
        if (self.intra_degree is None) == (self.intra_density is None):
            raise ValidationError("give exactly one of intra_degree / intra_density")
        if (self.inter_density is None) == (self.inter_degree is None):
            raise ValidationError("give exactly one of inter_density / inter_degree")
        for name in ("intra_density", "background_density", "inter_density"):
            val = getattr(self, name)
            if val is not None and not 0 <= val <= 1:
                raise ValidationError(f"{name} must lie in [0, 1]")
        if self.inter_weight_dist not in WEIGHT_DISTRIBUTIONS:
            raise ValidationError(f"inter_weight_dist must be one of {WEIGHT_DISTRIBUTIONS}")
        if self.inter_weight < 0 or self.intra_weight <= 0:
            raise ValidationError("weights must be positive")
        if self.powerlaw_exponent is not None and self.powerlaw_exponent <= 2:
            raise ValidationError("power-law exponent must exceed 2")

    def block_density(self, size: int) -> float:
        if self.intra_density is not None:
            return self.intra_density
        return min(1.0, self.intra_degree / (size - 1))

    def resolved_background_density(self) -> float:
        """Explicit value, else the density giving the smallest block's expected degree."""
        if self.background_density is not None:
            return self.background_density
        n1 = min(self.block_sizes)
        return min(1.0, self.block_density(n1) * (n1 - 1) / (self.background_size - 1))

    def resolved_inter_density(self) -> float:
        if self.inter_density is not None:
            return self.inter_density
        return min(1.0, self.inter_degree / (self.N - min(self.block_sizes)))

    def labels(self) -> np.ndarray:
        """Block id per node: ``0..K-1`` planted (smallest first), ``K`` background."""
        sizes = list(self.block_sizes) + [self.background_size]
        return np.repeat(np.arange(len(sizes)), sizes)


_SPEC_TYPES = {f.name: f.type for f in fields(MickeeSpec)}


def parse_spec_text(text: str) -> dict:
    """``key = value`` lines (``#`` comments) into a dict of Python values."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"spec line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key] = _coerce(val)
    return out


def _coerce(val: str):
    if val.lower() in ("none", "null", ""):
        return None
    if "," in val:
        return tuple(_coerce(v.strip()) for v in val.split(",") if v.strip())
    for conv in (int, float):
        try:
            return conv(val)
        except ValueError:
            pass
    return val


def load_mickee_spec(source, **overrides) -> MickeeSpec:
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = source.read()
    params = parse_spec_text(text)
    params.update(overrides)
    unknown = set(params) - set(_SPEC_TYPES)
    if unknown:
        raise ValidationError(f"unknown MICKEE spec keys: {sorted(unknown)}")
    if "block_sizes" in params and not isinstance(params["block_sizes"], tuple):
        params["block_sizes"] = (params["block_sizes"],)
    return MickeeSpec(**params)


def _sample_pairs(rng, num_pairs: int, p: float) -> np.ndarray:
    """Distinct pair indices in ``range(num_pairs)``, each kept with probability ``p``."""
    if p <= 0 or num_pairs == 0:
        return np.empty(0, dtype=np.int64)
    count = rng.binomial(num_pairs, min(p, 1.0))
    return np.sort(rng.choice(num_pairs, size=count, replace=False))


def _er_block(rng, offset: int, size: int, p: float):
    iu, ju = np.triu_indices(size, 1)
    pick = _sample_pairs(rng, iu.size, p)
    return iu[pick] + offset, ju[pick] + offset


def _inter_weights(rng, spec: MickeeSpec, m: int) -> np.ndarray:
    if m == 0:
        return np.empty(0)
    if spec.inter_weight_dist == "constant":
        return np.full(m, spec.inter_weight)
    if spec.inter_weight_dist == "uniform":
        # (0, w]: flip [0, w) so no weight is exactly zero
        return spec.inter_weight * (1.0 - rng.random(m))
    w = np.abs(rng.standard_normal(m))
    w = np.maximum(w, np.finfo(float).tiny)
    return w * (spec.inter_weight / w.max())


def _powerlaw_degrees(rng, size: int, q: float, mean_degree: float) -> np.ndarray:
    """Integer degrees with ``P(deg = k) ~ k^-q`` for ``k >= k_min``.

    ``k_min`` is chosen so the continuous Pareto mean equals ``mean_degree``.
    """
    kmin = max(1.0, round(mean_degree * (q - 2.0) / (q - 1.0)))
    deg = np.floor(kmin * (1.0 - rng.random(size)) ** (-1.0 / (q - 1.0))).astype(np.int64)
    if deg.sum() % 2:
        deg[rng.integers(size)] += 1
    return deg


def _configuration_block(rng, offset: int, degrees: np.ndarray):
    """Loopy multigraph pairing of stubs; loops and parallel edges are kept."""
    stubs = np.repeat(np.arange(degrees.size), degrees)
    rng.shuffle(stubs)
    pairs = stubs.reshape(-1, 2)
    return pairs[:, 0] + offset, pairs[:, 1] + offset


def _assemble(N: int, rows, cols, weights) -> sp.csr_matrix:
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    w = np.concatenate(weights)
    A = sp.coo_matrix((np.concatenate([w, w]), (np.concatenate([r, c]), np.concatenate([c, r]))), shape=(N, N))
    # a loop (i, i) lands twice, matching its two stubs in the degree count
    return A.tocsr()


def _mickee_once(spec: MickeeSpec, rng, powerlaw: bool):
    sizes = list(spec.block_sizes) + [spec.background_size]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    rows, cols, weights = [], [], []
    for b, size in enumerate(sizes):
        background = b == len(sizes) - 1
        if background and powerlaw:
            mean = spec.resolved_background_density() * (size - 1)
            deg = _powerlaw_degrees(rng, size, spec.powerlaw_exponent, mean)
            r, c = _configuration_block(rng, offsets[b], deg)
        else:
            p = spec.resolved_background_density() if background else spec.block_density(size)
            r, c = _er_block(rng, offsets[b], size, p)
        rows.append(r)
        cols.append(c)
        weights.append(np.full(r.size, spec.intra_weight))
    rho = spec.resolved_inter_density()
    for a in range(len(sizes)):
        for b in range(a + 1, len(sizes)):
            pick = _sample_pairs(rng, sizes[a] * sizes[b], rho)
            rows.append(pick // sizes[b] + offsets[a])
            cols.append(pick % sizes[b] + offsets[b])
            weights.append(_inter_weights(rng, spec, pick.size))
    return _assemble(spec.N, rows, cols, weights)


def _generate(spec: MickeeSpec, powerlaw: bool):
    rng = np.random.default_rng(spec.seed)
    for _ in range(MAX_RETRIES):
        A = _mickee_once(spec, rng, powerlaw)
        degrees = np.asarray(A.sum(axis=1)).ravel()
        if np.all(degrees > 0) and connected_components(A, directed=False)[0] == 1:
            return Graph.from_adjacency(A), spec.labels()
    raise EscapeTimeError(
        f"no connected sample in {MAX_RETRIES} draws; raise densities or shrink the background"
    )


def generate_mickee(spec: MickeeSpec):
    """Undirected weighted MICKEE graph and its block labels."""
    return _generate(spec, powerlaw=spec.powerlaw_exponent is not None)


def generate_powerlaw_mickee(spec: MickeeSpec):
    """MICKEE graph whose background is a power-law configuration-model multigraph."""
    q = spec.powerlaw_exponent
    if q is None or not 2.1 <= q <= 4.0:
        raise ValidationError("powerlaw_exponent must lie in [2.1, 4]")
    return _generate(spec, powerlaw=True)


def generate_er_cycle(n_er: int, n_cycle: int, p_er: float, w_in: float = 1.0, seed: int | None = 0):
    """Directed ER graph with a directed cycle attached.

    Nodes ``0..n_er-1`` form the ER part, the rest the cycle. Every ER node
    links to each other ER node and to each cycle node independently with
    probability ``p_er``. ER out-weights are rescaled so each ER node has
    out-degree ``w_in * m`` with ``m = p_er * (n_er - 1 + n_cycle)`` the
    expected out-edge count; cycle edges carry ``w_in * m`` and a single
    edge of weight ``w_in`` leads from the first cycle node back into the
    ER part. Out-degrees therefore differ by at most a factor ``1 + 1/m``.

    Returns
    -------
    graph : Graph
    labels : ndarray
        1 on cycle nodes, 0 on ER nodes.
    """
    if n_cycle < 3:
        raise ValidationError("n_cycle must be at least 3")
    if n_er < 2:
        raise ValidationError("n_er must be at least 2")
    m_bar = p_er * (n_er - 1 + n_cycle)
    if not 0 < p_er <= 1 or m_bar < 2:
        raise ValidationError("p_er too small: need p_er * (n_er - 1 + n_cycle) >= 2")
    n = n_er + n_cycle
    rng = np.random.default_rng(seed)
    cyc = np.arange(n_er, n)
    for _ in range(MAX_RETRIES):
        mask = rng.random((n_er, n)) < p_er
        mask[np.arange(n_er), np.arange(n_er)] = False
        counts = mask.sum(axis=1)
        if np.any(counts == 0) or mask[:, n_er:].sum() < n_cycle / 2:
            continue
        r, c = np.nonzero(mask)
        w = w_in * m_bar / counts[r]
        exit_target = rng.integers(n_er)
        rows = np.concatenate([r, cyc, [n_er]])
        cols = np.concatenate([c, np.roll(cyc, -1), [exit_target]])
        data = np.concatenate([w, np.full(n_cycle, w_in * m_bar), [w_in]])
        g = Graph.from_adjacency(sp.coo_matrix((data, (rows, cols)), shape=(n, n)))
        if is_strongly_connected(g):
            labels = np.zeros(n, dtype=int)
            labels[n_er:] = 1
            return g, labels
    raise EscapeTimeError(f"no strongly connected ER+cycle sample in {MAX_RETRIES} draws; raise p_er")
