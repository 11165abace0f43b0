import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treewave.montecarlo import chunk_sizes, run_chunked
from treewave.tree import ball_size, regular_ball
from treewave.wavefield import (
    ball_residuals,
    coupling_constants,
    covariance_sequence,
    extend_leaf,
    markov_residual_correlation,
    monte_carlo_covariances,
    new_sample,
    pooled_covariances,
    sample_ball,
    sample_balls,
)

LAM = -2 * math.sqrt(2)


def test_covariance_values_d3():
    s = covariance_sequence(3, LAM, 4).values
    assert s[0] == 1.0
    assert s[1] == pytest.approx(-2 * math.sqrt(2) / 3, abs=1e-15)
    assert s[2] == pytest.approx(5 / 6, abs=1e-15)
    # sigma_3 from the recurrence by hand: (lam s2 - s1) / 2
    assert s[3] == pytest.approx((LAM * 5 / 6 + 2 * math.sqrt(2) / 3) / 2, abs=1e-15)


def test_covariance_extremes():
    assert np.allclose(covariance_sequence(4, 4.0, 6).values, 1.0)
    assert np.allclose(covariance_sequence(4, -4.0, 6).values, [(-1) ** k for k in range(7)])
    assert np.allclose(covariance_sequence(3, 0.0, 6).values[1::2], 0.0)


@given(st.integers(3, 8), st.floats(-1.0, 1.0))
def test_recurrence_residuals_vanish(d, t):
    seq = covariance_sequence(d, t * d, 30)
    assert np.max(np.abs(seq.residuals())) < 1e-12


def test_rejects_bad_parameters():
    with pytest.raises(ValueError):
        covariance_sequence(2, 0.0, 3)
    with pytest.raises(ValueError):
        covariance_sequence(3, 3.5, 3)
    with pytest.raises(ValueError):
        coupling_constants(3, -3.01)


@pytest.mark.parametrize("d,lam", [(3, LAM), (3, 1.0), (4, -3.0), (5, 2.5)])
def test_coupling_matches_gaussian_conditioning(d, lam):
    # oracle: Schur complement of the joint covariance of (leaf, nbr, new children)
    s = covariance_sequence(d, lam, 2).values
    m = d - 1
    n = 2 + m
    cov = np.empty((n, n))
    cov[:2, :2] = [[1, s[1]], [s[1], 1]]
    cov[2:, 2:] = s[2]
    np.fill_diagonal(cov, 1.0)
    cov[0, 2:] = cov[2:, 0] = s[1]
    cov[1, 2:] = cov[2:, 1] = s[2]
    S_pp, S_pc = cov[:2, :2], cov[:2, 2:]
    coef = np.linalg.solve(S_pp, S_pc)
    cond = cov[2:, 2:] - S_pc.T @ coef
    cc = coupling_constants(d, lam)
    assert cond[0, 0] == pytest.approx(cc.a, abs=1e-12)
    assert cond[0, 1] == pytest.approx(cc.b, abs=1e-12)
    assert cc.c == pytest.approx((d * d - lam * lam) / (d * (d - 1)), abs=1e-14)
    assert coef[0, 0] == pytest.approx(lam / (d - 1), abs=1e-12)
    assert coef[1, 0] == pytest.approx(-1 / (d - 1), abs=1e-12)


def test_coupling_d3_values():
    cc = coupling_constants(3, LAM)
    assert cc.a == pytest.approx(1 / 12)
    assert cc.b == pytest.approx(-1 / 12)


@settings(max_examples=25, deadline=None)
@given(st.integers(3, 5), st.floats(-1.0, 1.0), st.integers(1, 3), st.integers(0, 2 ** 32 - 1))
def test_sampled_balls_are_eigenvectors(d, t, radius, seed):
    rng = np.random.default_rng(seed)
    lam = t * d
    w = sample_ball(d, lam, radius, rng)
    assert w.n_vertices == ball_size(d, radius)
    assert w.max_residual() < 1e-10
    tree, x = sample_balls(d, lam, radius, 5, rng)
    assert ball_residuals(tree, x, lam).max() < 1e-10


def test_extend_leaf_rules(rng):
    w = new_sample(3, LAM, rng)
    extend_leaf(w, 0)
    assert w.n_vertices == 4 and w.frontier == {1, 2, 3}
    with pytest.raises(ValueError):
        extend_leaf(w, 0)
    w.vertex_cap = 5
    with pytest.raises(MemoryError):
        extend_leaf(w, 1)


def test_vertex_cap():
    with pytest.raises(MemoryError):
        regular_ball(3, 40, vertex_cap=1000)


def test_ball_tree_shape():
    t = regular_ball(3, 3)
    assert t.n_vertices == 22
    assert len(t.children[0]) == 3 and all(len(t.children[v]) == 2 for v in range(1, 4))
    dm = t.distance_matrix()
    assert dm.max() == 6 and np.all(dm == dm.T)


def test_pooled_covariances_near_exact(rng):
    tree, x = sample_balls(3, LAM, 2, 20000, rng)
    mean, se = pooled_covariances(tree, x, 4)
    exact = covariance_sequence(3, LAM, 4).values
    assert np.all(np.abs(mean - exact) <= 4 * se + 1e-12)


def test_markov_independence_and_dependence(rng):
    tree, x = sample_balls(3, LAM, 2, 50000, rng)
    a, b = tree.children[1][0], tree.children[0][1]
    r, se = markov_residual_correlation(x, 0, 1, a, b)
    assert abs(r) <= 4 * se
    # a non-separating conditioning pair keeps dependence: condition on (0, 2) instead
    r2, se2 = markov_residual_correlation(x, 0, tree.children[0][2], a, b)
    assert abs(r2) > 10 * se2


def test_monte_carlo_deterministic_across_workers():
    a = monte_carlo_covariances(3, LAM, 2, 3000, seed=11, workers=1, chunk=700)
    b = monte_carlo_covariances(3, LAM, 2, 3000, seed=11, workers=3, chunk=700)
    assert a == b
    assert a["trials"] == 3000
    assert a["max_residual"] < 1e-10


def test_chunking():
    assert chunk_sizes(10, 4) == [4, 4, 2]
    out = run_chunked(lambda n, rng: (n, rng.integers(1 << 30)), 10, 5, workers=2, chunk=4)
    assert [o[0] for o in out] == [4, 4, 2]
    assert out == run_chunked(lambda n, rng: (n, rng.integers(1 << 30)), 10, 5, workers=1, chunk=4)
