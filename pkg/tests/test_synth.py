import io

import numpy as np
import pytest

from escapetime.errors import ValidationError
from escapetime.graph import is_strongly_connected
from escapetime.synth import (
    MickeeSpec,
    generate_er_cycle,
    generate_mickee,
    generate_powerlaw_mickee,
    load_mickee_spec,
)


def test_seeded_determinism_bit_for_bit():
    g1, l1 = generate_mickee(MickeeSpec(seed=7))
    g2, l2 = generate_mickee(MickeeSpec(seed=7))
    for attr in ("data", "indices", "indptr"):
        assert np.array_equal(getattr(g1.adjacency, attr), getattr(g2.adjacency, attr))
    assert np.array_equal(l1, l2)
    g3, _ = generate_mickee(MickeeSpec(seed=8))
    assert g3.adjacency.nnz != g1.adjacency.nnz or np.any(g3.adjacency.indices != g1.adjacency.indices)


def test_labels_partition_nodes_with_exact_sizes():
    spec = MickeeSpec(seed=1)
    g, labels = generate_mickee(spec)
    assert np.bincount(labels).tolist() == [80, 160, 240, 520]
    assert g.n == 1000 and g.is_symmetric()
    assert is_strongly_connected(g)


def test_intra_block_degree_within_five_percent():
    spec = MickeeSpec()
    for b, size in enumerate(spec.block_sizes):
        means = []
        for seed in range(20):
            g, labels = generate_mickee(MickeeSpec(seed=seed))
            idx = np.flatnonzero(labels == b)
            means.append(g.adjacency[idx][:, idx].sum(axis=1).mean())
        assert abs(np.mean(means) - 20.8) <= 0.05 * 20.8, (b, np.mean(means))


def test_inter_weights_weak_and_capped():
    for dist in ("normal", "constant", "uniform"):
        spec = MickeeSpec(seed=2, inter_weight=0.05, inter_weight_dist=dist, inter_density=0.02)
        g, labels = generate_mickee(spec)
        A = g.adjacency.tocoo()
        cross = labels[A.row] != labels[A.col]
        w = A.data[cross]
        assert w.size > 0
        assert np.all(w > 0) and np.all(w <= 0.05 + 1e-15)
        assert np.all(A.data[~cross] == 1.0)
        if dist != "uniform":
            assert w.max() == pytest.approx(0.05, rel=1e-12)


def test_inter_degree_parameterization():
    spec = MickeeSpec(inter_density=None, inter_degree=9.2)
    assert spec.resolved_inter_density() == pytest.approx(9.2 / 920)


def test_background_density_default_matches_planted_degree():
    spec = MickeeSpec()
    assert spec.resolved_background_density() * 519 == pytest.approx(20.8)


def test_spec_validation():
    with pytest.raises(ValidationError):
        MickeeSpec(block_sizes=(600, 500))
    with pytest.raises(ValidationError):
        MickeeSpec(inter_density=1.5)
    with pytest.raises(ValidationError):
        MickeeSpec(intra_degree=None)
    with pytest.raises(ValidationError):
        MickeeSpec(powerlaw_exponent=1.9)
    with pytest.raises(ValidationError):
        MickeeSpec(inter_weight_dist="lognormal")


def test_spec_file():
    text = "# 2-MICKEE\nN = 1500\nblock_sizes = 45, 90\ninter_density = 0.01\ninter_weight = 0.05\nseed = 4\n"
    spec = load_mickee_spec(io.StringIO(text))
    assert spec.N == 1500 and spec.block_sizes == (45, 90) and spec.seed == 4
    with pytest.raises(ValidationError, match="unknown"):
        load_mickee_spec(io.StringIO("colour = red\n"))


def test_two_mickee_regime_connected():
    spec = MickeeSpec(N=2000, block_sizes=(100, 200), inter_density=0.025, inter_weight=0.05, seed=0)
    g, labels = generate_mickee(spec)
    assert is_strongly_connected(g)
    assert np.bincount(labels).tolist() == [100, 200, 1700]


def _tail_exponent(k, kmin=10):
    t = k[k >= kmin]
    return 1 + t.size / np.sum(np.log(t / (kmin - 0.5)))


def test_powerlaw_tail_exponent():
    for seed in range(20):
        g, labels = generate_powerlaw_mickee(MickeeSpec(powerlaw_exponent=2.1, seed=seed))
        bg = np.flatnonzero(labels == 3)
        k = np.asarray(g.adjacency[bg][:, bg].sum(axis=1)).ravel()
        assert 1.9 <= _tail_exponent(k) <= 2.4


def test_powerlaw_heavier_tail_than_q4():
    g2, l2 = generate_powerlaw_mickee(MickeeSpec(powerlaw_exponent=2.1, seed=0))
    g4, l4 = generate_powerlaw_mickee(MickeeSpec(powerlaw_exponent=4.0, seed=0))
    assert g2.out_degree[l2 == 3].max() > 2 * g4.out_degree[l4 == 3].max()


def test_powerlaw_self_loops_kept():
    loops = 0.0
    for seed in range(5):
        g, _ = generate_powerlaw_mickee(MickeeSpec(powerlaw_exponent=2.1, seed=seed))
        loops += g.adjacency.diagonal().sum()
    assert loops > 0


def test_powerlaw_range():
    with pytest.raises(ValidationError):
        generate_powerlaw_mickee(MickeeSpec(powerlaw_exponent=4.5))
    with pytest.raises(ValidationError):
        generate_powerlaw_mickee(MickeeSpec())


def test_er_cycle_contract():
    for seed in range(10):
        g, labels = generate_er_cycle(100, 10, 0.05, seed=seed)
        A = g.adjacency.tocoo()
        cyc = labels == 1
        out_of_cycle = cyc[A.row] & ~cyc[A.col]
        into_cycle = ~cyc[A.row] & cyc[A.col]
        assert out_of_cycle.sum() == 1
        assert into_cycle.sum() >= 5
        assert g.out_degree.max() / g.out_degree.min() <= 1.5
        assert is_strongly_connected(g)
        assert not g.is_symmetric()


def test_er_cycle_validation():
    with pytest.raises(ValidationError):
        generate_er_cycle(100, 2, 0.05)
    with pytest.raises(ValidationError):
        generate_er_cycle(100, 10, 0.001)
