import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from escapetime.energy import (
    energy_gradient,
    energy_hessian,
    labels_to_indicators,
    partition_energy,
    relaxed_energy,
    symmetric_potential_hessian,
    potential_hessian,
)
from escapetime.errors import ValidationError
from escapetime.graph import laplacian

from _graphs import pair, random_strong, two_triangles


def fd_gradient(g, phi, eps, h=1e-5):
    out = np.empty(g.n)
    for i in range(g.n):
        e = np.zeros(g.n)
        e[i] = h
        out[i] = (relaxed_energy(g, phi + e, eps) - relaxed_energy(g, phi - e, eps)) / (2 * h)
    return out


def test_pair_energy_closed_form():
    for eps in (1e-3, 0.1, 1.0):
        assert abs(relaxed_energy(pair(), np.array([1.0, 0.0]), eps) - (1 + 4 * eps) / 2) < 1e-13


def test_pair_energy_limit():
    vals = [relaxed_energy(pair(), np.array([1.0, 0.0]), eps) for eps in (1e-2, 1e-3, 1e-4)]
    assert all(abs(b - 0.5) < abs(a - 0.5) for a, b in zip(vals, vals[1:]))
    assert abs(vals[-1] - 0.5) < 1e-3


def test_empty_set_energy_dense_oracle():
    g = random_strong(np.random.default_rng(0), 5)
    eps = 1e-3
    L = laplacian(g).toarray()
    u = np.linalg.solve(L + np.eye(5) / eps, g.out_degree)
    assert abs(relaxed_energy(g, np.zeros(5), eps) - u.mean()) < 1e-14
    assert abs(u.mean() - eps * g.out_degree.mean()) < 10 * eps**2 * g.out_degree.mean() ** 2


def test_pair_gradient_dense_oracle():
    eps = 0.2
    g = pair()
    M = np.array([[1.0, -1.0], [-1.0, 1 + 1 / eps]])
    u = np.array([1 + 2 * eps, 2 * eps])
    v = np.linalg.solve(M.T, np.ones(2))
    np.testing.assert_allclose(energy_gradient(g, np.array([1.0, 0.0]), eps), u * v / (2 * eps), rtol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 30), st.integers(0, 2**32 - 1))
def test_gradient_matches_finite_differences(n, seed):
    rng = np.random.default_rng(seed)
    g = random_strong(rng, n)
    eps = 0.5
    phi = rng.uniform(0.05, 0.95, n)
    fd = fd_gradient(g, phi, eps)
    an = energy_gradient(g, phi, eps)
    assert np.max(np.abs(fd - an) / np.abs(an)) <= 1e-6


def test_gradient_positive_on_mickee():
    from escapetime.graph import laplacian_frobenius
    from escapetime.synth import MickeeSpec, generate_mickee

    g, _ = generate_mickee(MickeeSpec(seed=1))
    phi = np.zeros(g.n)
    phi[:80] = 1.0
    assert np.all(energy_gradient(g, phi, 50 / laplacian_frobenius(g)) > 0)


def test_hessian_pair_second_differences():
    g = pair()
    eps, h = 0.3, 1e-4
    phi = np.array([0.4, 0.7])
    H = energy_hessian(g, phi, eps)
    fd = np.empty((2, 2))
    for i, j in itertools.product(range(2), repeat=2):
        ei, ej = np.eye(2)[i] * h, np.eye(2)[j] * h
        fd[i, j] = (relaxed_energy(g, phi + ei + ej, eps) - relaxed_energy(g, phi + ei - ej, eps)
                    - relaxed_energy(g, phi - ei + ej, eps) + relaxed_energy(g, phi - ei - ej, eps)) / (4 * h * h)
    np.testing.assert_allclose(H, fd, rtol=1e-4)


def test_hessian_directed_matches_gradient_differences():
    rng = np.random.default_rng(11)
    g = random_strong(rng, 8)
    eps, h = 0.4, 1e-6
    phi = rng.uniform(0.1, 0.9, 8)
    fd = np.empty((8, 8))
    for k in range(8):
        e = np.zeros(8)
        e[k] = h
        fd[:, k] = (energy_gradient(g, phi + e, eps) - energy_gradient(g, phi - e, eps)) / (2 * h)
    np.testing.assert_allclose(energy_hessian(g, phi, eps), fd, rtol=1e-6, atol=1e-10 * np.abs(fd).max())


def test_hessian_simplifies_on_undirected_graphs():
    rng = np.random.default_rng(2)
    g = random_strong(rng, 12, directed=False)
    phi = rng.uniform(0, 1, 12)
    H = potential_hessian(g, phi, 0.7)
    S = symmetric_potential_hessian(g, phi, 0.7)
    assert np.max(np.abs(H - S)) <= 1e-12 * np.max(np.abs(S))


def test_hessian_positive_definite():
    rng = np.random.default_rng(3)
    for _ in range(50):
        n = int(rng.integers(2, 11))
        g = random_strong(rng, n)
        H = energy_hessian(g, rng.uniform(0, 1, n) * 0.99, float(rng.uniform(0.05, 5)))
        assert np.linalg.eigvalsh((H + H.T) / 2).min() > 0


def test_hessian_size_cap():
    g = random_strong(np.random.default_rng(0), 501, density=0.01)
    with pytest.raises(ValidationError, match="500"):
        energy_hessian(g, np.zeros(501), 1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 20), st.integers(0, 2**32 - 1), st.floats(0.01, 0.99))
def test_convexity_on_chords(n, seed, t):
    rng = np.random.default_rng(seed)
    g = random_strong(rng, n)
    eps = float(rng.uniform(0.05, 5))
    a, b = rng.uniform(0, 1, n), rng.uniform(0, 1, n)
    ea, eb = relaxed_energy(g, a, eps), relaxed_energy(g, b, eps)
    mid = relaxed_energy(g, t * a + (1 - t) * b, eps)
    assert mid <= t * ea + (1 - t) * eb + 1e-12


def test_energy_monotone_in_phi():
    rng = np.random.default_rng(8)
    for _ in range(30):
        g = random_strong(rng, 10)
        phi = rng.uniform(0, 0.8, 10)
        bigger = phi + rng.uniform(0, 0.2, 10) * (rng.random(10) < 0.5)
        if np.array_equal(bigger, phi):
            continue
        assert relaxed_energy(g, bigger, 0.3) > relaxed_energy(g, phi, 0.3)


def test_partition_energy_pair_closed_form():
    eps = 0.25
    g = pair()
    e = (1 + 4 * eps) / 2  # each singleton, by symmetry
    expected = 2 / (1 + 2 * eps * e)
    assert abs(partition_energy(g, labels_to_indicators([0, 1], 2), eps) - expected) < 1e-14


def test_partition_energy_prefers_triangle_split():
    g = two_triangles()
    eps = 1.0
    best = partition_energy(g, labels_to_indicators([0, 0, 0, 1, 1, 1], 2), eps)
    for labels in itertools.product(range(2), repeat=6):
        if len(set(labels)) < 2 or labels in ((0, 0, 0, 1, 1, 1), (1, 1, 1, 0, 0, 0)):
            continue
        assert partition_energy(g, labels_to_indicators(labels, 2), eps) > best


def test_partition_energy_permutation_invariant_and_bounded():
    rng = np.random.default_rng(4)
    g = random_strong(rng, 9)
    P = rng.dirichlet(np.ones(3), size=9).T
    e = partition_energy(g, P, 0.2)
    assert 0 < e < 3
    assert abs(partition_energy(g, P[[2, 0, 1]], 0.2) - e) < 1e-14


def test_partition_energy_simplex_violation():
    g = pair()
    with pytest.raises(ValidationError):
        partition_energy(g, [[0.5, 0.5], [0.6, 0.5]], 0.1)
    partition_energy(g, [[0.5, 0.5], [0.5 + 5e-10, 0.5]], 0.1)


def test_full_class_contributes_zero():
    g = pair()
    assert partition_energy(g, [[1.0, 1.0], [0.0, 0.0]], 0.5) == pytest.approx(
        1 / (1 + 0.5 * 2 * relaxed_energy(g, np.zeros(2), 0.5)))
