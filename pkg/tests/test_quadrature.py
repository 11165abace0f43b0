import math

import numpy as np
import pytest

from treewave.normal import norm_cdf
from treewave.percolation import certify_finite_components
from treewave.quadrature import (
    GridTable,
    build_grid,
    check_domain,
    closed_form_totals,
    compute_p_primes,
    error_budget,
    f0_eval,
    final_bound,
    grid_origin,
    grid_step,
    load_grid,
    p_from_p_prime,
    save_grid,
    tau_index,
)
from treewave.wavefield import extension_values

LAM = -2 * math.sqrt(2)
TAU = 0.086


def mc_level(k, x1, x0, tau, n, rng):
    """Monte Carlo f_k: below x0 (parent x1) a fixed path of k more vertices <= tau.

    The path always continues through the first new child; every side vertex
    hanging off it must exceed tau.
    """
    parent = np.full(n, x1)
    cur = np.full(n, x0)
    alive = np.ones(n, dtype=bool)
    for level in range(k + 1):
        kids = extension_values(3, LAM, cur, parent, rng)
        if level < k:
            alive &= (kids[:, 0] <= tau) & (kids[:, 1] > tau)
            parent, cur = cur, kids[:, 0]
        else:
            alive &= kids.min(axis=1) > tau
    return alive.mean()


def test_f0_against_conditional_children(rng):
    # children are m +- W / (2 sqrt 3) with m = -sqrt2 x0 - x1/2: both above tau
    for x1, x0 in [(-1.0, -0.3), (0.4, -0.6), (0.0, 0.2)]:
        m = -math.sqrt(2) * x0 - 0.5 * x1
        direct = max(0.0, 2 * norm_cdf(2 * math.sqrt(3) * (m - TAU)) - 1)
        assert f0_eval(x1, x0, TAU) == pytest.approx(direct, abs=1e-14)
        p = mc_level(0, x1, x0, TAU, 100_000, rng)
        assert abs(p - direct) < 4 * math.sqrt(0.25 / 100_000)


@pytest.fixture(scope="module")
def grids400():
    g0 = build_grid(0, TAU, 400)
    g1 = build_grid(1, TAU, 400, lower=g0)
    g2 = build_grid(2, TAU, 400, lower=g1)
    return {0: g0, 1: g1, 2: g2}


@pytest.mark.parametrize("k", [1, 2])
def test_levels_match_monte_carlo(grids400, k, rng):
    g = grids400[k]
    x = g.nodes
    n = 200_000
    for x1, x0 in [(-0.8, -0.4), (0.3, -0.5), (-0.2, -0.2)]:
        i, j = int(np.argmin(abs(x - x1))), int(np.argmin(abs(x - x0)))
        p = mc_level(k, x[i], x[j], TAU, n, rng)
        assert abs(g.values[i, j] - p) < 4 * math.sqrt(0.25 / n) + 1e-3


def test_tau_is_a_node():
    for N in (101, 400, 2000):
        lo, h = grid_origin(N, 7.0, TAU), grid_step(N, 7.0)
        assert lo + h * tau_index(N, 7.0, TAU) == pytest.approx(TAU, abs=1e-12)
        assert abs(lo + 7.0) <= h / 2 + 1e-12


def test_bilinear_interpolation():
    N, R = 50, 7.0
    g = GridTable(0, N, R, 0.0, np.zeros((N, N)))
    x = g.nodes
    g.values[:] = 2.0 + 3.0 * x[:, None] - x[None, :] + 0.5 * x[:, None] * x[None, :]
    pts = np.array([[-3.3, 1.7], [0.01, -6.5], [4.2, 4.2]])
    got = g.interpolate(pts[:, 0], pts[:, 1])
    want = 2.0 + 3.0 * pts[:, 0] - pts[:, 1] + 0.5 * pts[:, 0] * pts[:, 1]
    assert np.allclose(got, want, atol=1e-12)
    assert g.interpolate(8.0, 0.0) == 0.0


def test_grid_roundtrip(tmp_path, grids400):
    g = grids400[1]
    path = tmp_path / "f1.grid"
    save_grid(g, path)
    for mmap in (False, True):
        back = load_grid(path, mmap=mmap)
        assert (back.k, back.N, back.R, back.tau) == (1, 400, 7.0, TAU)
        assert np.array_equal(np.asarray(back.values), g.values)
    bad = tmp_path / "bad"
    bad.write_bytes(b"x" * 64)
    with pytest.raises(ValueError):
        load_grid(bad)


def test_memmap_build_matches_memory(tmp_path, grids400):
    g0 = build_grid(0, TAU, 400, out=str(tmp_path / "f0.npy"))
    g1 = build_grid(1, TAU, 400, lower=g0, out=str(tmp_path / "f1.npy"))
    assert np.array_equal(np.asarray(g1.values), grids400[1].values)


def test_build_validation(grids400):
    with pytest.raises(ValueError):
        check_domain(400, 4.0, TAU)
    with pytest.raises(ValueError):
        build_grid(2, TAU, 400, lower=grids400[0])
    with pytest.raises(ValueError):
        build_grid(1, 0.0, 400, lower=grids400[0])


def test_tables_are_probabilities(grids400):
    for g in grids400.values():
        assert g.values.min() >= -1e-12 and g.values.max() <= 1 + 1e-12


def test_p_prime_1_at_zero_threshold():
    res = compute_p_primes(0.0, 800)
    assert res[1][0] == pytest.approx(0.5 - 3 / (4 * math.pi) * math.acos(5 / 6), abs=2e-5)


def test_p_primes_at_moderate_resolution():
    res = compute_p_primes(TAU, 1000)
    for s, ref in {1: 0.3272861614, 3: 0.0025551311, 5: 0.0002640467}.items():
        assert res[s][0] == pytest.approx(ref, abs=2e-5)


def test_path_counts():
    assert p_from_p_prime(1, 0.3) == 0.3
    assert p_from_p_prime(3, 1.0) == 9
    assert p_from_p_prime(5, 1.0) == 60
    assert p_from_p_prime(3, 0.0025551311) == pytest.approx(0.0229961799, abs=1e-9)
    with pytest.raises(ValueError):
        p_from_p_prime(4, 1.0)


def test_error_budget_shape():
    b = error_budget(20000)
    assert b["combined"].total < 8.2e-5
    assert b["combined"].total == pytest.approx(closed_form_totals(20000)["combined"], rel=1e-3)
    for lvl, ref in zip(b["levels"], closed_form_totals(20000)["levels"]):
        assert lvl.total == pytest.approx(ref, rel=0.2, abs=2e-10)
    assert error_budget(4000)["combined"].total > b["combined"].total
    with pytest.raises(ValueError):
        error_budget(50)


def test_final_bound_needs_certificate():
    with pytest.raises(ValueError):
        final_bound(TAU, N=200)
    with pytest.raises(ValueError):
        final_bound(TAU, N=200, certificate=certify_finite_components(0.5))
    with pytest.raises(ValueError):
        final_bound(0.09, N=200, certificate=certify_finite_components(TAU))


def test_final_bound_desk_small():
    r = final_bound(TAU, N=500, certificate=certify_finite_components(TAU))
    assert r["p0"] == pytest.approx(0.46573321, abs=1e-7)
    combined = 0.5 * (1 - r["p0"]) + 0.5 * r["p_prime"][1] + 1.5 * r["p_prime"][3] + 6 * r["p_prime"][5]
    assert r["combined"] == pytest.approx(combined, abs=1e-15)
    assert r["certified_lower_bound"] == pytest.approx(r["combined"] - r["certified_error"])
    assert r["combined"] == pytest.approx(0.43619355, abs=1e-4)
